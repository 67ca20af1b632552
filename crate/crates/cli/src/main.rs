//! `fairrank` command-line driver.
//!
//! Exit codes: 0 on success, 1 on runtime or data failures, 2 on usage or
//! configuration errors.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fairrank::dataset::{generate_synthetic, write_records, Attribute, BiasLevel, BiasRegime};
use fairrank::experiments::{
    aggregate_table, emit_reports, fmt4, load_report, prepare, run_cell, run_plan, CellKey,
    DataSource, DATA_STREAM,
};
use fairrank::metrics::MetricsReport;
use fairrank::numeric::Rng;
use fairrank::selection::SelectionResult;
use fairrank::training::TrainTrace;
use serde::Serialize;

use config::{RunConfig, SEED_ENV};

#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }
}

impl From<fairrank::Error> for Failure {
    fn from(e: fairrank::Error) -> Self {
        Failure {
            code: if e.is_usage() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

#[derive(Parser)]
#[command(name = "fairrank", version, about = "Fairness-aware paper selection: generate data, train, select and sweep")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus as papers.csv and authors.csv
    Generate(GenerateArgs),
    /// Train one model, select papers and score them against the baseline
    Run(RunArgs),
    /// Run the lambda / mode / weight grid over several seeds and write reports
    Sweep(RunArgs),
    /// Re-render CSV tables and charts from a sweep's report.json
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Bias regime: fair, moderate or high
    #[arg(long, default_value = "high")]
    regime: BiasLevel,
    /// Number of papers (at least 50)
    #[arg(long, default_value_t = 530)]
    n: usize,
    /// Seed; FAIRRANK_SEED is used when absent [default: 1]
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, default_value = "fairrank-data")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// TOML file with any of the keys below (flag names with `_`) [default: none]
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    values: RunConfig,
}

#[derive(Args)]
struct ReportArgs {
    /// report.json written by `sweep`
    #[arg(long, default_value = "fairrank-out/report.json")]
    input: PathBuf,
    /// Output directory [default: the directory of --input]
    #[arg(long)]
    out: Option<PathBuf>,
}

fn env_seed() -> Option<String> {
    std::env::var(SEED_ENV).ok()
}

fn cmd_generate(args: GenerateArgs) -> Result<(), Failure> {
    let seed = match args.seed {
        Some(s) => s,
        None => match env_seed() {
            Some(s) => s
                .trim()
                .parse()
                .map_err(|e| Failure::usage(format!("{SEED_ENV}=`{s}`: {e}")))?,
            None => 1,
        },
    };
    let regime = BiasRegime::new(args.regime);
    let corpus = generate_synthetic(&regime, args.n, &mut Rng::with_stream(seed, DATA_STREAM))?;
    write_records(&corpus, &args.out)?;
    println!(
        "wrote {} papers and {} authors to {}",
        corpus.len(),
        corpus.authors().count(),
        args.out.display()
    );
    println!("regime {}, seed {seed}", args.regime);
    println!("{:<16} {:>8} {:>8}", "protected share", "realized", "target");
    for (name, got, want) in [
        ("female", corpus.female_share(), regime.gender_share),
        ("race", corpus.protected_share(Attribute::Race), regime.race_share),
        ("country", corpus.protected_share(Attribute::Country), regime.country_share),
    ] {
        println!("{name:<16} {:>7}% {:>7}%", format!("{got:.2}"), format!("{want:.2}"));
    }
    Ok(())
}

fn check_inputs(source: &DataSource) -> Result<(), Failure> {
    if let DataSource::Files { papers, authors } = source {
        for p in [papers, authors] {
            if let Err(e) = std::fs::metadata(p) {
                return Err(Failure::runtime(format!("{}: {e}", p.display())));
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct RunReport<'a> {
    cell: CellKey,
    seed: u64,
    n_accept: usize,
    baseline_size: usize,
    metrics: &'a MetricsReport,
    trace: &'a TrainTrace,
    selection: &'a SelectionResult,
}

fn print_metrics(m: &MetricsReport) {
    let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), fmt4);
    println!("{:<24} {:>10}", "metric", "value");
    for (name, v) in [
        ("macro_gain race", m.macro_gain.race),
        ("macro_gain country", m.macro_gain.country),
        ("micro_gain race", m.micro_gain.race),
        ("micro_gain country", m.micro_gain.country),
        ("utility_gain", m.utility_gain),
        ("diversity_gain", m.diversity_gain),
        ("f_measure", m.f_measure),
        ("overlap_with_baseline", Some(m.overlap_with_baseline)),
    ] {
        println!("{name:<24} {:>10}", opt(v));
    }
    for (k, v) in &m.conference_distribution {
        println!("{:<24} {:>10}", format!("share {k}"), fmt4(*v));
    }
    if let Some(tiers) = &m.tier_distribution {
        for (k, v) in tiers {
            println!("{:<24} {:>10}", format!("share tier {k}"), fmt4(*v));
        }
    }
    for note in &m.undefined {
        println!("undefined: {note}");
    }
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let cfg = RunConfig::resolve(args.values, args.config.as_deref(), env_seed())?;
    let plan = cfg.plan()?;
    let cell = cfg.cell()?;
    check_inputs(&plan.source)?;
    let seed = cfg.seed();

    let ctx = prepare(&plan, seed)?;
    let out = run_cell(&plan, &ctx, &cell)?;
    let m = &out.summary.metrics;

    let weights = cell
        .weights
        .map_or(String::new(), |w| format!(", W_r {}, W_c {}", w.w_race, w.w_country));
    println!(
        "mode {}, lambda {}{weights}, seed {seed}: selected {} of {} (threshold {}), stopped at epoch {} (best {})",
        cell.mode,
        cell.lambda,
        out.selection.n_accepted,
        out.selection.n_total,
        fmt4(out.selection.threshold),
        out.trace.stopped_epoch,
        out.trace.best_epoch
    );
    print_metrics(m);

    let report = RunReport {
        cell,
        seed,
        n_accept: ctx.n_accept,
        baseline_size: ctx.baseline.len(),
        metrics: m,
        trace: &out.trace,
        selection: &out.selection,
    };
    let dir = cfg.out_dir();
    let mut json = serde_json::to_vec_pretty(&report).map_err(|e| Failure::runtime(e.to_string()))?;
    json.push(b'\n');
    fairrank::fsio::ensure_writable_dir(&dir)?;
    let path = dir.join("report.json");
    fairrank::fsio::write_atomic(&path, &json)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn report_failures(result: &fairrank::experiments::SweepResult) -> Result<(), Failure> {
    let failed: Vec<_> = result.failures().collect();
    for r in &failed {
        eprintln!(
            "run failed: mode {} lambda {} seed {}: {}",
            r.cell.mode,
            r.cell.lambda,
            r.seed,
            r.error.as_deref().unwrap_or("")
        );
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::runtime(format!("{} of {} runs failed", failed.len(), result.runs.len())))
    }
}

fn cmd_sweep(args: RunArgs) -> Result<(), Failure> {
    let cfg = RunConfig::resolve(args.values, args.config.as_deref(), env_seed())?;
    let plan = cfg.plan()?;
    check_inputs(&plan.source)?;
    let result = run_plan(&plan, cfg.threads)?;
    let dir = cfg.out_dir();
    let manifest = emit_reports(&result, &dir)?;
    print!("{}", aggregate_table(&result));
    println!("wrote {} files to {}", manifest.len(), dir.display());
    report_failures(&result)
}

fn cmd_report(args: ReportArgs) -> Result<(), Failure> {
    let result = load_report(&args.input)?;
    let dir = args.out.unwrap_or_else(|| {
        args.input.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)
    });
    let manifest = emit_reports(&result, &dir)?;
    print!("{}", aggregate_table(&result));
    println!("wrote {} files to {}", manifest.len(), dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Report(a) => cmd_report(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

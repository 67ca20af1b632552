//! Multi-seed sweeps over fairness mode, lambda and group weights, scored
//! against a baseline selection, plus CSV/JSON/SVG report emission.
//!
//! Every run is a pure function of `(plan, cell, seed)`. Data generation,
//! the split and training each draw from their own RNG stream of the seed,
//! so runs can execute in any order and on any number of threads.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    encode, generate_synthetic_with, load_records, stratified_split, Attribute, BiasLevel, BiasRegime,
    Corpus, EncodedDataset, PaperId, StageWeights, SyntheticConfig,
};
use crate::fairness::{FairnessMode, FairnessSpec};
use crate::fsio::{ensure_writable_dir, write_atomic};
use crate::metrics::{score, MetricsReport};
use crate::numeric::Rng;
use crate::selection::{rank_and_select, SelectionResult};
use crate::training::{train, TrainConfig, TrainTrace};
use crate::{Error, Result};

pub const DATA_STREAM: u64 = 1;
pub const SPLIT_STREAM: u64 = 2;

/// Accepted papers per 530 submissions in the synthetic setting.
const SYNTHETIC_ACCEPT: (usize, usize) = (280, 530);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic { regime: BiasLevel, n_papers: usize },
    Files { papers: PathBuf, authors: PathBuf },
}

impl DataSource {
    /// Short label used in chart file names.
    pub fn label(&self) -> &'static str {
        match self {
            DataSource::Synthetic { regime, .. } => regime.as_str(),
            DataSource::Files { .. } => "real",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct WeightPair {
    pub w_race: f64,
    pub w_country: f64,
}

impl WeightPair {
    pub const fn new(w_race: f64, w_country: f64) -> Self {
        Self { w_race, w_country }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub source: DataSource,
    pub modes: Vec<FairnessMode>,
    /// Zero is always added when the grid is expanded.
    pub lambdas: Vec<f64>,
    /// Only used by modes that weight their terms.
    pub weights: Vec<WeightPair>,
    pub seeds: Vec<u64>,
    /// Defaults to the historical acceptance count for file data and to
    /// 280 per 530 papers for synthetic data.
    pub n_accept: Option<usize>,
    pub train_fraction: f64,
    pub stage_weights: StageWeights,
    /// Generator knobs for synthetic sources.
    pub generator: SyntheticConfig,
    /// `seed` and `fairness` are overwritten per run.
    pub train: TrainConfig,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic {
                regime: BiasLevel::High,
                n_papers: 530,
            },
            modes: vec![FairnessMode::RaceOnly, FairnessMode::CountryOnly, FairnessMode::Combined],
            lambdas: vec![1.0, 2.0, 2.5, 3.0, 5.0, 10.0],
            weights: vec![
                WeightPair::new(0.32, 0.68),
                WeightPair::new(0.32, 1.36),
                WeightPair::new(0.64, 0.68),
            ],
            seeds: (1..=5).collect(),
            n_accept: None,
            train_fraction: 0.8,
            stage_weights: StageWeights::default(),
            generator: SyntheticConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

/// One point of the grid. `weights` is `None` for single-attribute modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub mode: FairnessMode,
    pub lambda: f64,
    pub weights: Option<WeightPair>,
}

impl CellKey {
    fn sort_cmp(&self, other: &Self) -> std::cmp::Ordering {
        let w = |k: &Self| k.weights.map_or((-1.0, -1.0), |w| (w.w_race, w.w_country));
        self.mode
            .cmp(&other.mode)
            .then(self.lambda.total_cmp(&other.lambda))
            .then(w(self).0.total_cmp(&w(other).0))
            .then(w(self).1.total_cmp(&w(other).1))
    }

    pub fn spec(&self) -> Result<FairnessSpec> {
        let w = self.weights.unwrap_or(WeightPair::new(0.0, 0.0));
        FairnessSpec::new(self.mode, self.lambda, w.w_race, w.w_country)
    }

    /// Attributes scored by the diversity gain for this cell.
    pub fn active_attributes(&self) -> &'static [Attribute] {
        match self.mode {
            FairnessMode::RaceOnly => &[Attribute::Race],
            FairnessMode::CountryOnly => &[Attribute::Country],
            FairnessMode::Combined => &[Attribute::Race, Attribute::Country],
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(Error::Config("at least one fairness mode is required".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(Error::Config(format!("lambda must satisfy λ ≥ 0, got {l}")));
        }
        if self.modes.contains(&FairnessMode::Combined) && self.weights.is_empty() {
            return Err(Error::Config("combined mode needs at least one weight pair".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.n_accept == Some(0) {
            return Err(Error::Config("n_accept must be >= 1".into()));
        }
        if let DataSource::Synthetic { n_papers, .. } = self.source {
            if n_papers < 50 {
                return Err(Error::Config(format!("n_papers must be >= 50, got {n_papers}")));
            }
        }
        self.train.validate()
    }

    /// Sorted, deduplicated lambda values including 0.
    pub fn lambda_grid(&self) -> Vec<f64> {
        let mut grid = self.lambdas.clone();
        grid.push(0.0);
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        grid
    }

    /// All grid cells in output order.
    pub fn cells(&self) -> Vec<CellKey> {
        let mut modes = self.modes.clone();
        modes.sort();
        modes.dedup();
        let mut cells = Vec::new();
        for &mode in &modes {
            for &lambda in &self.lambda_grid() {
                if mode.uses_weights() {
                    for &w in &self.weights {
                        cells.push(CellKey { mode, lambda, weights: Some(w) });
                    }
                } else {
                    cells.push(CellKey { mode, lambda, weights: None });
                }
            }
        }
        cells.sort_by(CellKey::sort_cmp);
        cells
    }
}

/// Data, split and baseline for one seed, shared by every cell.
#[derive(Debug, Clone)]
pub struct SeedContext {
    pub seed: u64,
    pub corpus: Corpus,
    pub dataset: EncodedDataset,
    pub baseline: Vec<PaperId>,
    pub n_accept: usize,
}

fn train_config(plan: &ExperimentPlan, seed: u64, fairness: Option<FairnessSpec>) -> TrainConfig {
    TrainConfig {
        seed,
        fairness,
        ..plan.train.clone()
    }
}

/// Loads or generates the corpus for `seed`, splits it and builds the
/// baseline. File data uses the historical acceptances; synthetic data uses
/// the selection of a model trained without the fairness term.
pub fn prepare(plan: &ExperimentPlan, seed: u64) -> Result<SeedContext> {
    let corpus = match &plan.source {
        DataSource::Synthetic { regime, n_papers } => generate_synthetic_with(
            &BiasRegime::new(*regime),
            *n_papers,
            &plan.generator,
            &mut Rng::with_stream(seed, DATA_STREAM),
        )?,
        DataSource::Files { papers, authors } => load_records(papers, authors)?,
    };
    let encoded = encode(&corpus, &plan.stage_weights)?;
    let dataset = stratified_split(encoded, plan.train_fraction, &mut Rng::with_stream(seed, SPLIT_STREAM))?;

    let (baseline, n_accept) = match &plan.source {
        DataSource::Files { .. } => {
            let accepted: Vec<PaperId> =
                corpus.papers().iter().filter(|p| p.accepted).map(|p| p.paper_id).collect();
            if accepted.is_empty() {
                return Err(Error::Config("file data has no accepted papers to use as baseline".into()));
            }
            let n = plan.n_accept.unwrap_or(accepted.len());
            (accepted, n)
        }
        DataSource::Synthetic { n_papers, .. } => {
            let (a, b) = SYNTHETIC_ACCEPT;
            let n = plan.n_accept.unwrap_or((a * n_papers + b / 2) / b);
            let (model, _) = train(&dataset, &train_config(plan, seed, None))?;
            (rank_and_select(&model, &dataset, n)?.selected_ids, n)
        }
    };
    Ok(SeedContext {
        seed,
        corpus,
        dataset,
        baseline,
        n_accept,
    })
}

/// Per-run summary kept in sweep results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub metrics: MetricsReport,
    pub threshold: f64,
    pub stopped_epoch: usize,
    pub best_epoch: usize,
    pub best_valid_loss: f64,
    pub empty_group_batches: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub selection: SelectionResult,
    pub trace: TrainTrace,
}

pub fn run_cell(plan: &ExperimentPlan, ctx: &SeedContext, cell: &CellKey) -> Result<RunOutput> {
    let spec = cell.spec()?;
    let (model, trace) = train(&ctx.dataset, &train_config(plan, ctx.seed, Some(spec)))?;
    let selection = rank_and_select(&model, &ctx.dataset, ctx.n_accept)?;
    let metrics = score(
        &ctx.corpus,
        &selection.selected_ids,
        &ctx.baseline,
        &plan.stage_weights,
        cell.active_attributes(),
    )?;
    Ok(RunOutput {
        summary: RunSummary {
            metrics,
            threshold: selection.threshold,
            stopped_epoch: trace.stopped_epoch,
            best_epoch: trace.best_epoch,
            best_valid_loss: trace.best_valid_loss,
            empty_group_batches: trace.empty_group_batches,
        },
        selection,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub cell: CellKey,
    pub seed: u64,
    pub summary: Option<RunSummary>,
    pub error: Option<String>,
}

/// Scalar metrics reported per run and aggregated per cell.
pub const METRICS: [&str; 7] = [
    "macro_race",
    "macro_country",
    "micro_race",
    "micro_country",
    "utility_gain",
    "diversity_gain",
    "f_measure",
];

fn metric_values(m: &MetricsReport) -> [Option<f64>; 7] {
    [
        m.macro_gain.race,
        m.macro_gain.country,
        m.micro_gain.race,
        m.micro_gain.country,
        m.utility_gain,
        m.diversity_gain,
        m.f_measure,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellAggregate {
    pub cell: CellKey,
    pub n_ok: usize,
    pub n_failed: usize,
    /// Keyed by the names in [`METRICS`]; `None` when no seed defined it.
    pub metrics: BTreeMap<String, Option<MeanStd>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub plan: ExperimentPlan,
    pub runs: Vec<RunRecord>,
    pub aggregates: Vec<CellAggregate>,
}

impl SweepResult {
    pub fn failures(&self) -> impl Iterator<Item = &RunRecord> {
        self.runs.iter().filter(|r| r.error.is_some())
    }
}

/// Fixed 4-decimal rendering used in every table and CSV.
pub fn fmt4(v: f64) -> String {
    let s = format!("{v:.4}");
    if s == "-0.0000" {
        "0.0000".into()
    } else {
        s
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), fmt4)
}

/// The value as it appears in the CSV output.
fn rounded(v: f64) -> f64 {
    fmt4(v).parse().expect("formatted float parses")
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> Option<MeanStd> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Some(MeanStd {
        mean,
        std,
        n: values.len(),
    })
}

/// Aggregates over the 4-decimal values written to `sweep.csv`, so the two
/// files agree exactly.
pub fn aggregate(cells: &[CellKey], runs: &[RunRecord]) -> Vec<CellAggregate> {
    cells
        .iter()
        .map(|cell| {
            let mine: Vec<&RunRecord> = runs.iter().filter(|r| r.cell == *cell).collect();
            let ok: Vec<&RunSummary> = mine.iter().filter_map(|r| r.summary.as_ref()).collect();
            let metrics = METRICS
                .iter()
                .enumerate()
                .map(|(k, name)| {
                    let vals: Vec<f64> =
                        ok.iter().filter_map(|s| metric_values(&s.metrics)[k]).map(rounded).collect();
                    (name.to_string(), mean_std(&vals))
                })
                .collect();
            CellAggregate {
                cell: *cell,
                n_ok: ok.len(),
                n_failed: mine.len() - ok.len(),
                metrics,
            }
        })
        .collect()
}

/// Runs every cell for every seed. Cell failures are recorded on the
/// affected records instead of aborting the sweep. `threads` caps the
/// worker count.
pub fn run_plan(plan: &ExperimentPlan, threads: Option<usize>) -> Result<SweepResult> {
    plan.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::Config("threads must be >= 1".into()));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| execute(plan))
}

fn execute(plan: &ExperimentPlan) -> Result<SweepResult> {
    let mut seeds = plan.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    let contexts: Vec<(u64, std::result::Result<SeedContext, String>)> = seeds
        .par_iter()
        .map(|&s| (s, prepare(plan, s).map_err(|e| e.to_string())))
        .collect();

    let cells = plan.cells();
    let jobs: Vec<(CellKey, usize)> = cells
        .iter()
        .flat_map(|c| (0..contexts.len()).map(move |i| (*c, i)))
        .collect();
    let runs: Vec<RunRecord> = jobs
        .par_iter()
        .map(|&(cell, i)| {
            let (seed, ctx) = &contexts[i];
            let outcome = match ctx {
                Ok(ctx) => run_cell(plan, ctx, &cell).map(|o| o.summary).map_err(|e| e.to_string()),
                Err(e) => Err(format!("data preparation failed: {e}")),
            };
            let (summary, error) = match outcome {
                Ok(s) => (Some(s), None),
                Err(e) => (None, Some(e)),
            };
            RunRecord {
                cell,
                seed: *seed,
                summary,
                error,
            }
        })
        .collect();

    let aggregates = aggregate(&cells, &runs);
    Ok(SweepResult {
        plan: plan.clone(),
        runs,
        aggregates,
    })
}

fn cell_columns(cell: &CellKey) -> [String; 4] {
    let (wr, wc) = cell
        .weights
        .map_or((String::new(), String::new()), |w| (fmt4(w.w_race), fmt4(w.w_country)));
    [cell.mode.as_str().to_string(), fmt4(cell.lambda), wr, wc]
}

fn csv_bytes(header: Vec<String>, rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let ser = |e: csv::Error| Error::Serde(e.to_string());
    w.write_record(&header).map_err(ser)?;
    for r in rows {
        w.write_record(&r).map_err(ser)?;
    }
    w.into_inner().map_err(|e| Error::Serde(e.to_string()))
}

pub fn render_sweep_csv(result: &SweepResult) -> Result<Vec<u8>> {
    let mut header: Vec<String> = ["mode", "lambda", "w_race", "w_country", "seed", "status"]
        .map(String::from)
        .to_vec();
    header.extend(METRICS.map(String::from));
    header.extend(["stopped_epoch", "best_valid_loss", "error"].map(String::from));

    let rows = result
        .runs
        .iter()
        .map(|r| {
            let mut row = cell_columns(&r.cell).to_vec();
            row.push(r.seed.to_string());
            match &r.summary {
                Some(s) => {
                    row.push("ok".into());
                    row.extend(metric_values(&s.metrics).map(fmt_opt));
                    row.push(s.stopped_epoch.to_string());
                    row.push(fmt4(s.best_valid_loss));
                    row.push(String::new());
                }
                None => {
                    row.push("error".into());
                    row.extend(METRICS.map(|_| "NA".to_string()));
                    row.extend(["NA".to_string(), "NA".to_string()]);
                    row.push(r.error.clone().unwrap_or_default());
                }
            }
            row
        })
        .collect();
    csv_bytes(header, rows)
}

pub fn render_aggregate_csv(result: &SweepResult) -> Result<Vec<u8>> {
    let mut header: Vec<String> = ["mode", "lambda", "w_race", "w_country", "n_ok", "n_failed"]
        .map(String::from)
        .to_vec();
    for m in METRICS {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_std"));
    }
    let rows = result
        .aggregates
        .iter()
        .map(|a| {
            let mut row = cell_columns(&a.cell).to_vec();
            row.push(a.n_ok.to_string());
            row.push(a.n_failed.to_string());
            for m in METRICS {
                let ms = a.metrics.get(m).copied().flatten();
                row.push(fmt_opt(ms.map(|v| v.mean)));
                row.push(fmt_opt(ms.map(|v| v.std)));
            }
            row
        })
        .collect();
    csv_bytes(header, rows)
}

/// Human-readable aggregate table, one row per cell.
pub fn aggregate_table(result: &SweepResult) -> String {
    let mut out = format!(
        "{:<9} {:>8} {:>7} {:>7} {:>3} {:>18} {:>18} {:>18} {:>18} {:>18}\n",
        "mode", "lambda", "w_r", "w_c", "ok", "macro", "micro", "utility", "diversity", "f"
    );
    let pm = |a: &CellAggregate, key: &str| match a.metrics.get(key).copied().flatten() {
        Some(v) => format!("{}±{}", fmt4(v.mean), fmt4(v.std)),
        None => "NA".into(),
    };
    for a in &result.aggregates {
        let [mode, lambda, wr, wc] = cell_columns(&a.cell);
        let (macro_key, micro_key) = match a.cell.mode {
            FairnessMode::CountryOnly => ("macro_country", "micro_country"),
            _ => ("macro_race", "micro_race"),
        };
        let _ = writeln!(
            out,
            "{mode:<9} {lambda:>8} {wr:>7} {wc:>7} {:>3} {:>18} {:>18} {:>18} {:>18} {:>18}",
            a.n_ok,
            pm(a, macro_key),
            pm(a, micro_key),
            pm(a, "utility_gain"),
            pm(a, "diversity_gain"),
            pm(a, "f_measure"),
        );
    }
    out
}

/// Lines plotted per chart for a mode.
fn chart_metrics(mode: FairnessMode) -> &'static [&'static str] {
    match mode {
        FairnessMode::RaceOnly => &["macro_race", "micro_race", "utility_gain"],
        FairnessMode::CountryOnly => &["macro_country", "micro_country", "utility_gain"],
        FairnessMode::Combined => &["macro_race", "macro_country", "micro_race", "micro_country", "utility_gain"],
    }
}

const PALETTE: [&str; 5] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

/// Gain-versus-lambda chart with a shaded one-std band per line.
pub fn render_chart(title: &str, mode: FairnessMode, series: &[&CellAggregate]) -> String {
    let (w, h, left, right, top, bottom) = (640.0, 400.0, 60.0, 150.0, 40.0, 50.0);
    let metrics = chart_metrics(mode);
    let points = |key: &str| -> Vec<(f64, MeanStd)> {
        series
            .iter()
            .filter_map(|a| a.metrics.get(key).copied().flatten().map(|m| (a.cell.lambda, m)))
            .collect()
    };
    let all: Vec<(f64, MeanStd)> = metrics.iter().flat_map(|m| points(m)).collect();
    let x_max = all.iter().map(|p| p.0).fold(1.0_f64, f64::max);
    let mut y_lo = all.iter().map(|p| p.1.mean - p.1.std).fold(0.0_f64, f64::min);
    let mut y_hi = all.iter().map(|p| p.1.mean + p.1.std).fold(0.0_f64, f64::max);
    if y_hi - y_lo < 1e-9 {
        y_lo -= 1.0;
        y_hi += 1.0;
    }
    let px = |x: f64| left + (w - left - right) * x / x_max;
    let py = |y: f64| top + (h - top - bottom) * (y_hi - y) / (y_hi - y_lo);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
        (w - right + left) / 2.0,
        xml_escape(title)
    );
    let (x0, x1, y0, y1) = (px(0.0), px(x_max), py(y_lo), py(y_hi));
    let _ = writeln!(svg, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}" stroke="black"/>"#);
    let _ = writeln!(svg, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}" stroke="black"/>"#);
    let zero = py(0.0);
    let _ = writeln!(
        svg,
        r##"<line x1="{x0:.2}" y1="{zero:.2}" x2="{x1:.2}" y2="{zero:.2}" stroke="#999" stroke-dasharray="4 3"/>"##
    );
    for s in series {
        let x = px(s.cell.lambda);
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="10">{}</text>"#,
            y0 + 16.0,
            trim_num(s.cell.lambda)
        );
    }
    for (y, label) in [(y_lo, y_lo), (y_hi, y_hi), (0.0, 0.0)] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="10">{:.1}</text>"#,
            x0 - 6.0,
            py(y) + 3.0,
            label
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="12">lambda</text>"#,
        (x0 + x1) / 2.0,
        h - 10.0
    );

    for (k, metric) in metrics.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts = points(metric);
        if !pts.is_empty() {
            let upper = pts.iter().map(|(x, m)| format!("{:.2},{:.2}", px(*x), py(m.mean + m.std)));
            let lower = pts.iter().rev().map(|(x, m)| format!("{:.2},{:.2}", px(*x), py(m.mean - m.std)));
            let band: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(
                svg,
                r#"<polygon points="{}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#,
                band.join(" ")
            );
        }
        let line: Vec<String> = pts.iter().map(|(x, m)| format!("{:.2},{:.2}", px(*x), py(m.mean))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline data-metric="{metric}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.join(" ")
        );
        let ly = top + 16.0 * k as f64 + 10.0;
        let lx = w - right + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 18.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11">{metric}</text>"#,
            lx + 24.0,
            ly + 4.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn trim_num(v: f64) -> String {
    let s = format!("{v}");
    s.strip_suffix(".0").map(str::to_string).unwrap_or(s)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Chart file name and its series, one per mode (and weight pair for
/// weighted modes), ordered by lambda.
fn charts(result: &SweepResult) -> Vec<(String, String)> {
    let data = result.plan.source.label();
    let mut groups: Vec<(FairnessMode, Option<WeightPair>, Vec<&CellAggregate>)> = Vec::new();
    for a in &result.aggregates {
        match groups.iter_mut().find(|g| g.0 == a.cell.mode && g.1 == a.cell.weights) {
            Some(g) => g.2.push(a),
            None => groups.push((a.cell.mode, a.cell.weights, vec![a])),
        }
    }
    groups
        .into_iter()
        .map(|(mode, weights, mut series)| {
            series.sort_by(|a, b| a.cell.lambda.total_cmp(&b.cell.lambda));
            let (file, title) = match weights {
                Some(w) => (
                    format!("gains_{}_wr{}_wc{}_{data}.svg", mode.as_str(), trim_num(w.w_race), trim_num(w.w_country)),
                    format!("{} fairness (W_r={}, W_c={}), {data} data", mode.as_str(), w.w_race, w.w_country),
                ),
                None => (
                    format!("gains_{}_{data}.svg", mode.as_str()),
                    format!("{} fairness, {data} data", mode.as_str()),
                ),
            };
            (file, render_chart(&title, mode, &series))
        })
        .collect()
}

/// Writes `sweep.csv`, `aggregate.csv`, `report.json` and the charts.
/// Everything is rendered before the directory is touched, and each file
/// is written atomically. Returns the written paths.
pub fn emit_reports(result: &SweepResult, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<(String, Vec<u8>)> = vec![
        ("sweep.csv".into(), render_sweep_csv(result)?),
        ("aggregate.csv".into(), render_aggregate_csv(result)?),
    ];
    let mut json = serde_json::to_vec_pretty(result).map_err(|e| Error::Serde(e.to_string()))?;
    json.push(b'\n');
    files.push(("report.json".into(), json));
    files.extend(charts(result).into_iter().map(|(f, s)| (f, s.into_bytes())));

    ensure_writable_dir(out_dir)?;
    let mut manifest = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let path = out_dir.join(name);
        write_atomic(&path, &bytes)?;
        manifest.push(path);
    }
    Ok(manifest)
}

/// Parses a `report.json` written by [`emit_reports`].
pub fn load_report(path: &Path) -> Result<SweepResult> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))
}

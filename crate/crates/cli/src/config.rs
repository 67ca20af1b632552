//! Layered run configuration: command-line flags over `FAIRRANK_SEED` over
//! the TOML file over built-in defaults. Every key is optional and file keys
//! match flag names with `-` spelled `_`.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use fairrank::dataset::BiasLevel;
use fairrank::experiments::{CellKey, DataSource, ExperimentPlan, WeightPair};
use fairrank::fairness::FairnessMode;
use fairrank::training::TrainConfig;
use serde::Deserialize;

use crate::Failure;

pub const SEED_ENV: &str = "FAIRRANK_SEED";

/// A `W_r:W_c` pair, written `[w_r, w_c]` in TOML.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(from = "[f64; 2]")]
pub struct WeightArg(pub WeightPair);

impl From<[f64; 2]> for WeightArg {
    fn from([r, c]: [f64; 2]) -> Self {
        WeightArg(WeightPair::new(r, c))
    }
}

impl FromStr for WeightArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (r, c) = s.split_once(':').ok_or_else(|| format!("expected W_r:W_c, got `{s}`"))?;
        let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
        Ok(WeightArg(WeightPair::new(num(r)?, num(c)?)))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Synthetic bias regime: fair, moderate or high [default: high]
    #[arg(long)]
    pub regime: Option<BiasLevel>,
    /// Synthetic corpus size [default: 530]
    #[arg(long)]
    pub n_papers: Option<usize>,
    /// papers.csv of a real-format corpus, used together with --authors [default: none, synthetic data]
    #[arg(long)]
    pub papers: Option<PathBuf>,
    /// authors.csv of a real-format corpus [default: none]
    #[arg(long)]
    pub authors: Option<PathBuf>,
    /// Base seed; FAIRRANK_SEED overrides the file value [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seeds per sweep cell, counting up from the base seed [default: 5]
    #[arg(long)]
    pub n_seeds: Option<usize>,
    /// Fairness mode of a single run: race, country or combined [default: race]
    #[arg(long)]
    pub mode: Option<FairnessMode>,
    /// Fairness strength of a single run [default: 3]
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    /// Race weight of a single combined run [default: 0.32]
    #[arg(long, allow_negative_numbers = true)]
    pub w_race: Option<f64>,
    /// Country weight of a single combined run [default: 0.68]
    #[arg(long, allow_negative_numbers = true)]
    pub w_country: Option<f64>,
    /// Sweep modes, comma separated [default: race,country,combined]
    #[arg(long, value_delimiter = ',')]
    pub modes: Option<Vec<FairnessMode>>,
    /// Sweep lambda grid, comma separated; 0 is always added [default: 1,2,2.5,3,5,10]
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub lambdas: Option<Vec<f64>>,
    /// Sweep W_r:W_c pairs for combined mode [default: 0.32:0.68,0.32:1.36,0.64:0.68]
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub weights: Option<Vec<WeightArg>>,
    /// Papers to accept [default: 280 per 530 synthetic papers, or the accepted count of file data]
    #[arg(long)]
    pub n_accept: Option<usize>,
    /// Share of papers used for training [default: 0.8]
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Maximum training epochs [default: 50]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Mini-batch size [default: 32]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Adam learning rate [default: 0.001]
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Epochs without validation improvement before stopping [default: 10]
    #[arg(long)]
    pub patience: Option<usize>,
    /// Hidden layer widths, comma separated [default: 64,32]
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Worker threads for sweeps [default: machine parallelism]
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory [default: fairrank-out]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

macro_rules! layer {
    ($hi:ident, $lo:ident; $($f:ident),* $(,)?) => {
        RunConfig { $($f: $hi.$f.or($lo.$f)),* }
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
    }

    /// Values in `self` win over values in `lower`.
    pub fn over(self, lower: RunConfig) -> RunConfig {
        let hi = self;
        let lo = lower;
        layer!(hi, lo; regime, n_papers, papers, authors, seed, n_seeds, mode, lambda, w_race,
            w_country, modes, lambdas, weights, n_accept, train_fraction, epochs, batch_size,
            learning_rate, patience, hidden, threads, out)
    }

    /// Applies the documented precedence: flags, then the seed variable,
    /// then the file.
    pub fn resolve(flags: RunConfig, file: Option<&Path>, env_seed: Option<String>) -> Result<Self, Failure> {
        let file_cfg = match file {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let env_cfg = RunConfig {
            seed: env_seed
                .map(|s| {
                    s.trim()
                        .parse::<u64>()
                        .map_err(|e| Failure::usage(format!("{SEED_ENV}=`{s}`: {e}")))
                })
                .transpose()?,
            ..RunConfig::default()
        };
        Ok(flags.over(env_cfg).over(file_cfg))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(1)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("fairrank-out"))
    }

    pub fn source(&self) -> Result<DataSource, Failure> {
        match (&self.papers, &self.authors) {
            (Some(papers), Some(authors)) => {
                if self.regime.is_some() || self.n_papers.is_some() {
                    return Err(Failure::usage(
                        "regime and n_papers apply to synthetic data only, not with papers/authors",
                    ));
                }
                Ok(DataSource::Files {
                    papers: papers.clone(),
                    authors: authors.clone(),
                })
            }
            (None, None) => Ok(DataSource::Synthetic {
                regime: self.regime.unwrap_or(BiasLevel::High),
                n_papers: self.n_papers.unwrap_or(530),
            }),
            _ => Err(Failure::usage("papers and authors must be given together")),
        }
    }

    pub fn plan(&self) -> Result<ExperimentPlan, Failure> {
        let defaults = ExperimentPlan::default();
        let base = TrainConfig::default();
        let hidden = match self.hidden.as_deref() {
            None => base.hidden,
            Some([a, b]) => [*a, *b],
            Some(other) => {
                return Err(Failure::usage(format!(
                    "hidden needs exactly two widths, got {}",
                    other.len()
                )))
            }
        };
        let n_seeds = self.n_seeds.unwrap_or(5);
        if n_seeds == 0 {
            return Err(Failure::usage("n_seeds must be >= 1"));
        }
        let seed = self.seed();
        let plan = ExperimentPlan {
            source: self.source()?,
            modes: self.modes.clone().unwrap_or(defaults.modes),
            lambdas: self.lambdas.clone().unwrap_or(defaults.lambdas),
            weights: self
                .weights
                .as_ref()
                .map_or(defaults.weights, |w| w.iter().map(|a| a.0).collect()),
            seeds: (0..n_seeds as u64).map(|k| seed + k).collect(),
            n_accept: self.n_accept,
            train_fraction: self.train_fraction.unwrap_or(defaults.train_fraction),
            stage_weights: defaults.stage_weights,
            generator: defaults.generator,
            train: TrainConfig {
                epochs: self.epochs.unwrap_or(base.epochs),
                batch_size: self.batch_size.unwrap_or(base.batch_size),
                learning_rate: self.learning_rate.unwrap_or(base.learning_rate),
                patience: self.patience.unwrap_or(base.patience),
                hidden,
                seed,
                fairness: None,
            },
        };
        plan.validate().map_err(Failure::from)?;
        Ok(plan)
    }

    /// The single cell trained by `run`, already validated.
    pub fn cell(&self) -> Result<CellKey, Failure> {
        let mode = self.mode.unwrap_or(FairnessMode::RaceOnly);
        let weights = mode
            .uses_weights()
            .then(|| WeightPair::new(self.w_race.unwrap_or(0.32), self.w_country.unwrap_or(0.68)));
        let cell = CellKey {
            mode,
            lambda: self.lambda.unwrap_or(3.0),
            weights,
        };
        cell.spec().map_err(Failure::from)?;
        Ok(cell)
    }
}

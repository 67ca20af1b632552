//! Mini-batch training under `BCE + lambda * fairness`, with early stopping
//! on the validation total loss and best-epoch parameter restore.

use serde::{Deserialize, Serialize};

use crate::dataset::EncodedDataset;
use crate::fairness::{FairnessMode, FairnessSpec, GroupMasks};
use crate::numeric::{bce_loss, Mode, ModelParams, Rng};
use crate::{Error, Result};

/// RNG stream used for weight init and per-epoch shuffling.
pub const TRAIN_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub hidden: [usize; 2],
    pub seed: u64,
    /// `None` trains on the prediction loss alone.
    pub fairness: Option<FairnessSpec>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            learning_rate: 0.001,
            patience: 10,
            hidden: [64, 32],
            seed: 1,
            fairness: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be >= 2".into()));
        }
        if self.patience < 1 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if let Some(f) = &self.fairness {
            f.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_prediction_loss: f64,
    pub train_fairness_loss: f64,
    pub train_total_loss: f64,
    pub valid_total_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: Vec<EpochRecord>,
    pub stopped_epoch: usize,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
    pub best_valid_loss: f64,
    /// Batches where the fairness term was skipped because a group was empty.
    pub empty_group_batches: usize,
    /// Prediction loss of the freshly initialised network on the training split.
    pub initial_train_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub prediction: f64,
    pub fairness: f64,
    pub total: f64,
}

/// Eval-mode losses over a subset of rows. An empty fairness group counts as 0.
pub fn evaluate(
    params: &ModelParams,
    dataset: &EncodedDataset,
    rows: &[usize],
    fairness: Option<&FairnessSpec>,
) -> Result<LossBreakdown> {
    let x = dataset.features.select_rows(rows);
    let y: Vec<f64> = rows.iter().map(|&i| dataset.labels[i]).collect();
    let preds = params.predict(&x)?;
    let (prediction, _) = bce_loss(&preds, &y)?;
    let (fair, lambda) = match fairness {
        Some(spec) => match spec.loss(&preds, &dataset.masks.select(rows)) {
            Ok((l, _)) => (l, spec.lambda),
            Err(Error::EmptyGroup(_)) => (0.0, spec.lambda),
            Err(e) => return Err(e),
        },
        None => (0.0, 0.0),
    };
    Ok(LossBreakdown {
        prediction,
        fairness: fair,
        total: prediction + lambda * fair,
    })
}

/// Epoch ordering that spreads every `(protected_race, protected_country)`
/// stratum evenly across the epoch, so each batch sees both groups whenever
/// the split has them. A trailing batch of one row is merged into the
/// previous batch (batchnorm needs two rows).
pub fn stratified_batches(
    rows: &[usize],
    masks: &GroupMasks,
    batch_size: usize,
    rng: &mut Rng,
) -> Vec<Vec<usize>> {
    let mut strata: [Vec<usize>; 4] = Default::default();
    for &i in rows {
        let k = usize::from(masks.protected_race[i]) * 2 + usize::from(masks.protected_country[i]);
        strata[k].push(i);
    }
    let mut keyed: Vec<(f64, usize, usize)> = Vec::with_capacity(rows.len());
    for (s, members) in strata.iter_mut().enumerate() {
        rng.shuffle(members);
        let n = members.len() as f64;
        for (j, &row) in members.iter().enumerate() {
            keyed.push(((j as f64 + rng.uniform()) / n, s, row));
        }
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let order: Vec<usize> = keyed.into_iter().map(|k| k.2).collect();
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() < 2) {
        let tail = batches.pop().expect("non-empty");
        batches.last_mut().expect("non-empty").extend(tail);
    }
    batches
}

fn check_groups(dataset: &EncodedDataset, spec: &FairnessSpec) -> Result<()> {
    let train = dataset.masks.select(&dataset.train_idx);
    let has = |m: &[bool], v: bool| m.contains(&v);
    let missing = match spec.mode {
        FairnessMode::RaceOnly => {
            (!has(&train.protected_race, true) || !has(&train.protected_race, false)).then_some("race")
        }
        FairnessMode::CountryOnly => (!has(&train.protected_country, true)
            || !has(&train.protected_country, false))
        .then_some("country"),
        FairnessMode::Combined => (!has(&train.protected_race, true)
            || !has(&train.protected_country, true))
        .then_some("race/country"),
    };
    match missing {
        Some(attr) => Err(Error::Config(format!(
            "fairness mode `{}` needs {attr} groups that are absent from the training split",
            spec.mode
        ))),
        None => Ok(()),
    }
}

pub fn train(dataset: &EncodedDataset, config: &TrainConfig) -> Result<(ModelParams, TrainTrace)> {
    config.validate()?;
    if dataset.train_idx.len() < 2 || dataset.valid_idx.is_empty() {
        return Err(Error::Config(
            "dataset needs a split with >= 2 training rows and >= 1 validation row".into(),
        ));
    }
    if let Some(spec) = &config.fairness {
        check_groups(dataset, spec)?;
    }
    let fairness = config.fairness.as_ref();

    let mut rng = Rng::with_stream(config.seed, TRAIN_STREAM);
    let sizes = [dataset.n_features(), config.hidden[0], config.hidden[1], 1];
    let mut params = ModelParams::init(&sizes, &mut rng)?;
    let initial_train_loss = evaluate(&params, dataset, &dataset.train_idx, None)?.prediction;

    let mut records = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut since_best = 0usize;
    let mut empty_group_batches = 0usize;

    for epoch in 1..=config.epochs {
        let batches = stratified_batches(&dataset.train_idx, &dataset.masks, config.batch_size, &mut rng);
        let (mut sum_pred, mut sum_fair, mut sum_total) = (0.0, 0.0, 0.0);
        for batch in &batches {
            let x = dataset.features.select_rows(batch);
            let y: Vec<f64> = batch.iter().map(|&i| dataset.labels[i]).collect();
            let (preds, cache) = params.forward(&x, Mode::Train)?;
            let (pred_loss, mut grad) = bce_loss(&preds, &y)?;

            let mut fair_loss = 0.0;
            let mut lambda = 0.0;
            if let Some(spec) = fairness {
                lambda = spec.lambda;
                match spec.loss(&preds, &dataset.masks.select(batch)) {
                    Ok((l, g)) => {
                        fair_loss = l;
                        if lambda != 0.0 {
                            for (a, b) in grad.iter_mut().zip(g) {
                                *a += lambda * b;
                            }
                        }
                    }
                    Err(Error::EmptyGroup(_)) => empty_group_batches += 1,
                    Err(e) => return Err(e),
                }
            }

            let grads = params.backward(&cache, &grad)?;
            params.adam_step(&grads, config.learning_rate)?;

            sum_pred += pred_loss;
            sum_fair += fair_loss;
            sum_total += pred_loss + lambda * fair_loss;
        }
        let nb = batches.len() as f64;
        let valid = evaluate(&params, dataset, &dataset.valid_idx, fairness)?;
        records.push(EpochRecord {
            epoch,
            train_prediction_loss: sum_pred / nb,
            train_fairness_loss: sum_fair / nb,
            train_total_loss: sum_total / nb,
            valid_total_loss: valid.total,
        });

        let improved = best.as_ref().is_none_or(|(b, _, _)| valid.total < *b);
        if improved {
            best = Some((valid.total, epoch, params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }

    let (best_valid_loss, best_epoch, best_params) = best.expect("at least one epoch ran");
    let trace = TrainTrace {
        stopped_epoch: records.len(),
        epochs: records,
        best_epoch,
        best_valid_loss,
        empty_group_batches,
        initial_train_loss,
    };
    Ok((best_params, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{encode, generate_synthetic, stratified_split, BiasLevel, BiasRegime, StageWeights};

    fn dataset(level: BiasLevel, n: usize, seed: u64) -> EncodedDataset {
        let corpus = generate_synthetic(&BiasRegime::new(level), n, &mut Rng::new(seed)).unwrap();
        let ds = encode(&corpus, &StageWeights::default()).unwrap();
        stratified_split(ds, 0.8, &mut Rng::with_stream(seed, 2)).unwrap()
    }

    fn quick(fairness: Option<FairnessSpec>) -> TrainConfig {
        TrainConfig {
            epochs: 8,
            hidden: [16, 8],
            fairness,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn batches_cover_training_rows_once_and_mix_groups() {
        let ds = dataset(BiasLevel::High, 530, 1);
        let batches = stratified_batches(&ds.train_idx, &ds.masks, 32, &mut Rng::new(4));
        let mut seen: Vec<usize> = batches.iter().flatten().copied().collect();
        seen.sort_unstable();
        assert_eq!(seen, ds.train_idx);
        assert!(batches.iter().all(|b| b.len() >= 2));
        for b in &batches {
            assert!(b.iter().any(|&i| ds.masks.protected_race[i]));
            assert!(b.iter().any(|&i| !ds.masks.protected_race[i]));
        }
    }

    #[test]
    fn trailing_singleton_batch_is_merged() {
        let masks = GroupMasks {
            protected_race: vec![false; 5],
            protected_country: vec![false; 5],
        };
        let batches = stratified_batches(&[0, 1, 2, 3, 4], &masks, 2, &mut Rng::new(0));
        assert_eq!(batches.len(), 2);
        assert_eq!(batches[1].len(), 3);
    }

    #[test]
    fn lambda_zero_matches_plain_training_bitwise() {
        let ds = dataset(BiasLevel::High, 300, 2);
        let (plain, plain_trace) = train(&ds, &quick(None)).unwrap();
        let spec = FairnessSpec::new(FairnessMode::RaceOnly, 0.0, 0.0, 0.0).unwrap();
        let (zero, zero_trace) = train(&ds, &quick(Some(spec))).unwrap();
        assert_eq!(plain.bit_pattern(), zero.bit_pattern());
        assert_eq!(plain_trace.stopped_epoch, zero_trace.stopped_epoch);
        for (a, b) in plain_trace.epochs.iter().zip(&zero_trace.epochs) {
            assert_eq!(a.valid_total_loss.to_bits(), b.valid_total_loss.to_bits());
        }
    }

    #[test]
    fn deterministic() {
        let ds = dataset(BiasLevel::Moderate, 300, 3);
        let spec = FairnessSpec::new(FairnessMode::Combined, 2.0, 0.32, 0.68).unwrap();
        let (a, ta) = train(&ds, &quick(Some(spec))).unwrap();
        let (b, tb) = train(&ds, &quick(Some(spec))).unwrap();
        assert_eq!(a.bit_pattern(), b.bit_pattern());
        assert_eq!(ta, tb);
    }

    #[test]
    fn restored_params_reproduce_best_validation_loss() {
        let ds = dataset(BiasLevel::High, 300, 4);
        let spec = FairnessSpec::new(FairnessMode::RaceOnly, 3.0, 0.0, 0.0).unwrap();
        let cfg = TrainConfig {
            epochs: 30,
            patience: 3,
            ..quick(Some(spec))
        };
        let (params, trace) = train(&ds, &cfg).unwrap();
        assert_eq!(trace.epochs.len(), trace.stopped_epoch);
        assert!(trace.stopped_epoch <= cfg.epochs);
        let min = trace.epochs.iter().map(|e| e.valid_total_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(min, trace.best_valid_loss);
        let again = evaluate(&params, &ds, &ds.valid_idx, Some(&spec)).unwrap();
        assert!((again.total - trace.best_valid_loss).abs() <= 1e-12);
    }

    #[test]
    fn missing_group_is_a_config_error() {
        let mut ds = dataset(BiasLevel::High, 200, 5);
        ds.masks.protected_country.iter_mut().for_each(|m| *m = false);
        let spec = FairnessSpec::new(FairnessMode::CountryOnly, 1.0, 0.0, 0.0).unwrap();
        assert!(matches!(train(&ds, &quick(Some(spec))), Err(Error::Config(_))));
        let spec = FairnessSpec::new(FairnessMode::Combined, 1.0, 0.5, 0.5).unwrap();
        assert!(matches!(train(&ds, &quick(Some(spec))), Err(Error::Config(_))));
        let spec = FairnessSpec::new(FairnessMode::RaceOnly, 1.0, 0.0, 0.0).unwrap();
        assert!(train(&ds, &quick(Some(spec))).is_ok());
    }

    #[test]
    fn config_validation() {
        let ds = dataset(BiasLevel::Fair, 100, 6);
        for bad in [
            TrainConfig { epochs: 0, ..TrainConfig::default() },
            TrainConfig { batch_size: 1, ..TrainConfig::default() },
            TrainConfig { patience: 0, ..TrainConfig::default() },
            TrainConfig { learning_rate: 0.0, ..TrainConfig::default() },
        ] {
            assert!(matches!(train(&ds, &bad), Err(Error::Config(_))));
        }
    }

    #[test]
    fn training_reduces_loss() {
        let ds = dataset(BiasLevel::High, 530, 7);
        let (params, trace) = train(&ds, &TrainConfig { epochs: 20, ..TrainConfig::default() }).unwrap();
        let end = evaluate(&params, &ds, &ds.train_idx, None).unwrap().prediction;
        assert!(end < trace.initial_train_loss, "{end} vs {}", trace.initial_train_loss);
        let best = &trace.epochs[trace.best_epoch - 1];
        assert!(best.train_total_loss < trace.epochs[0].train_total_loss);
    }
}

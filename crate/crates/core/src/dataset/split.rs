//! Train/validation split stratified on `(label, protected_race, protected_country)`.

use std::collections::BTreeMap;

use super::encode::EncodedDataset;
use crate::numeric::Rng;
use crate::{Error, Result};

type StratumKey = (bool, bool, bool);

/// Splits so the overall train count is `round(train_fraction * n)` and every
/// stratum's train count is within one item of `train_fraction * size`
/// (largest-remainder apportionment). Single-item strata go to training.
pub fn stratified_split(
    mut dataset: EncodedDataset,
    train_fraction: f64,
    rng: &mut Rng,
) -> Result<EncodedDataset> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let n = dataset.len();
    let mut strata: BTreeMap<StratumKey, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let key = (
            dataset.labels[i] > 0.5,
            dataset.masks.protected_race[i],
            dataset.masks.protected_country[i],
        );
        strata.entry(key).or_default().push(i);
    }

    let target_total = (train_fraction * n as f64).round() as usize;
    let mut quotas: Vec<(StratumKey, usize, f64)> = strata
        .iter()
        .map(|(&key, members)| {
            let exact = train_fraction * members.len() as f64;
            let base = exact.floor() as usize;
            (key, base, exact - base as f64)
        })
        .collect();
    for (key, base, remainder) in quotas.iter_mut() {
        if strata[key].len() == 1 && *base == 0 {
            *base = 1;
            *remainder = -1.0;
            dataset
                .warnings
                .push(format!("stratum {key:?} has a single item; placed in training"));
        }
    }
    let assigned: usize = quotas.iter().map(|q| q.1).sum();
    let mut order: Vec<usize> = (0..quotas.len()).filter(|&i| quotas[i].2 > 0.0).collect();
    // Largest remainder first; BTreeMap order breaks ties.
    order.sort_by(|&a, &b| quotas[b].2.total_cmp(&quotas[a].2).then(a.cmp(&b)));
    for &i in order.iter().take(target_total.saturating_sub(assigned)) {
        quotas[i].1 += 1;
    }

    let mut train = Vec::with_capacity(target_total);
    let mut valid = Vec::with_capacity(n - target_total.min(n));
    for (key, quota, _) in &quotas {
        let mut members = strata[key].clone();
        rng.shuffle(&mut members);
        train.extend_from_slice(&members[..*quota]);
        valid.extend_from_slice(&members[*quota..]);
    }
    train.sort_unstable();
    valid.sort_unstable();
    dataset.train_idx = train;
    dataset.valid_idx = valid;
    Ok(dataset)
}

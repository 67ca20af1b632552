//! Statistical-parity penalties on soft predictions.
//!
//! Group acceptance probabilities are estimated by the mean sigmoid output
//! over the group, which keeps the penalties differentiable.
//!
//! - Single attribute: `(mean_protected - mean_unprotected)^2`.
//! - Combined: `w_race * (mean_race - mean_all)^2 + w_country * (mean_country - mean_all)^2`,
//!   where each protected group is compared against the overall batch mean.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FairnessMode {
    #[serde(alias = "race")]
    RaceOnly,
    #[serde(alias = "country")]
    CountryOnly,
    Combined,
}

impl FairnessMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FairnessMode::RaceOnly => "race",
            FairnessMode::CountryOnly => "country",
            FairnessMode::Combined => "combined",
        }
    }

    pub fn uses_weights(self) -> bool {
        self == FairnessMode::Combined
    }
}

impl std::str::FromStr for FairnessMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "race" | "race_only" => Ok(FairnessMode::RaceOnly),
            "country" | "country_only" => Ok(FairnessMode::CountryOnly),
            "combined" => Ok(FairnessMode::Combined),
            other => Err(Error::Config(format!(
                "unknown fairness mode `{other}` (expected race, country or combined)"
            ))),
        }
    }
}

impl std::fmt::Display for FairnessMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairnessSpec {
    pub mode: FairnessMode,
    pub lambda: f64,
    pub w_race: f64,
    pub w_country: f64,
}

impl FairnessSpec {
    pub fn new(mode: FairnessMode, lambda: f64, w_race: f64, w_country: f64) -> Result<Self> {
        let spec = Self {
            mode,
            lambda,
            w_race,
            w_country,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, symbol: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must satisfy {symbol} ≥ 0, got {v}")))
            }
        };
        check("lambda", "λ", self.lambda)?;
        if self.mode.uses_weights() {
            check("w_race", "W_r", self.w_race)?;
            check("w_country", "W_c", self.w_country)?;
        }
        Ok(())
    }

    /// Fairness loss and `dL/dprediction` for a batch under this spec's mode
    /// (unscaled by lambda).
    pub fn loss(&self, predictions: &[f64], masks: &GroupMasks) -> Result<(f64, Vec<f64>)> {
        match self.mode {
            FairnessMode::RaceOnly => parity_loss_single(predictions, &masks.protected_race),
            FairnessMode::CountryOnly => {
                parity_loss_single(predictions, &masks.protected_country)
            }
            FairnessMode::Combined => {
                parity_loss_combined(predictions, masks, self.w_race, self.w_country)
            }
        }
    }
}

/// Per-row protected-group membership.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroupMasks {
    pub protected_race: Vec<bool>,
    pub protected_country: Vec<bool>,
}

impl GroupMasks {
    pub fn len(&self) -> usize {
        self.protected_race.len()
    }

    pub fn is_empty(&self) -> bool {
        self.protected_race.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> GroupMasks {
        GroupMasks {
            protected_race: idx.iter().map(|&i| self.protected_race[i]).collect(),
            protected_country: idx.iter().map(|&i| self.protected_country[i]).collect(),
        }
    }
}

fn check_len(predictions: &[f64], mask: &[bool]) -> Result<()> {
    if predictions.len() != mask.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs mask of {}",
            predictions.len(),
            mask.len()
        )));
    }
    Ok(())
}

/// Mean prediction over rows where `mask` is set.
pub fn group_rate(predictions: &[f64], mask: &[bool]) -> Result<f64> {
    check_len(predictions, mask)?;
    let shift = predictions.first().copied().unwrap_or(0.0);
    Ok(shift + shifted_mean(predictions, mask, shift)?)
}

/// Mean of `p - shift` over the masked rows. Sharing one shift across groups
/// makes the gaps exactly zero when all predictions are equal.
fn shifted_mean(predictions: &[f64], mask: &[bool], shift: f64) -> Result<f64> {
    let (sum, count) = predictions
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, c), (&p, _)| (s + (p - shift), c + 1));
    if count == 0 {
        return Err(Error::EmptyGroup("mask selects no rows".into()));
    }
    Ok(sum / count as f64)
}

/// Squared gap between protected and unprotected mean predictions.
pub fn parity_loss_single(predictions: &[f64], mask: &[bool]) -> Result<(f64, Vec<f64>)> {
    check_len(predictions, mask)?;
    let inverse: Vec<bool> = mask.iter().map(|m| !m).collect();
    let n_protected = mask.iter().filter(|&&m| m).count();
    let n_other = mask.len() - n_protected;
    if n_protected == 0 || n_other == 0 {
        return Err(Error::EmptyGroup(format!(
            "parity needs both groups (protected {n_protected}, unprotected {n_other})"
        )));
    }
    let shift = predictions[0];
    let gap = shifted_mean(predictions, mask, shift)? - shifted_mean(predictions, &inverse, shift)?;
    let grad = mask
        .iter()
        .map(|&m| {
            if m {
                2.0 * gap / n_protected as f64
            } else {
                -2.0 * gap / n_other as f64
            }
        })
        .collect();
    Ok((gap * gap, grad))
}

/// Weighted sum of squared gaps between each protected group's mean and the
/// overall batch mean.
pub fn parity_loss_combined(
    predictions: &[f64],
    masks: &GroupMasks,
    w_race: f64,
    w_country: f64,
) -> Result<(f64, Vec<f64>)> {
    check_len(predictions, &masks.protected_race)?;
    check_len(predictions, &masks.protected_country)?;
    let n = predictions.len();
    if n == 0 {
        return Err(Error::EmptyGroup("empty batch".into()));
    }
    let shift = predictions[0];
    let overall = shifted_mean(predictions, &vec![true; n], shift)?;
    let race_rate = shifted_mean(predictions, &masks.protected_race, shift)
        .map_err(|_| Error::EmptyGroup("no race-protected rows".into()))?;
    let country_rate = shifted_mean(predictions, &masks.protected_country, shift)
        .map_err(|_| Error::EmptyGroup("no country-protected rows".into()))?;
    let n_race = masks.protected_race.iter().filter(|&&m| m).count() as f64;
    let n_country = masks.protected_country.iter().filter(|&&m| m).count() as f64;

    let race_gap = race_rate - overall;
    let country_gap = country_rate - overall;
    let loss = w_race * race_gap * race_gap + w_country * country_gap * country_gap;

    let inv_n = 1.0 / n as f64;
    let grad = masks
        .protected_race
        .iter()
        .zip(&masks.protected_country)
        .map(|(&r, &c)| {
            let dr = if r { 1.0 / n_race } else { 0.0 } - inv_n;
            let dc = if c { 1.0 / n_country } else { 0.0 } - inv_n;
            2.0 * w_race * race_gap * dr + 2.0 * w_country * country_gap * dc
        })
        .collect();
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Rng;
    use proptest::prelude::*;

    fn central_difference<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut up = x.to_vec();
                up[i] += h;
                let mut down = x.to_vec();
                down[i] -= h;
                (f(&up) - f(&down)) / (2.0 * h)
            })
            .collect()
    }

    fn assert_close(analytic: &[f64], numeric: &[f64], tol: f64) {
        for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
            let err = (a - n).abs();
            let scale = a.abs().max(n.abs());
            assert!(err <= 1e-10 || err / scale < tol, "entry {i}: {a} vs {n}");
        }
    }

    #[test]
    fn group_rate_examples() {
        let r = group_rate(&[0.8, 0.4, 0.6], &[true, false, true]).unwrap();
        assert!((r - 0.7).abs() < 1e-15);
        let preds = [0.1, 0.5, 0.9, 0.3];
        let all = group_rate(&preds, &[true; 4]).unwrap();
        assert!((all - preds.iter().sum::<f64>() / 4.0).abs() < 1e-15);
        assert_eq!(group_rate(&[0.3; 5], &[false, true, false, true, true]).unwrap(), 0.3);
        assert!(matches!(
            group_rate(&[0.3, 0.2], &[false, false]),
            Err(Error::EmptyGroup(_))
        ));
    }

    #[test]
    fn single_example_value() {
        let (loss, grad) = parity_loss_single(&[0.8, 0.4], &[true, false]).unwrap();
        assert!((loss - 0.16).abs() < 1e-15);
        // protected: 2*0.4/1, unprotected: -2*0.4/1
        assert!((grad[0] - 0.8).abs() < 1e-15);
        assert!((grad[1] + 0.8).abs() < 1e-15);
    }

    #[test]
    fn single_parity_case_is_exactly_zero() {
        let (loss, grad) =
            parity_loss_single(&[0.3, 0.7, 0.7, 0.3], &[true, true, false, false]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn single_requires_both_groups() {
        assert!(matches!(
            parity_loss_single(&[0.3, 0.7], &[true, true]),
            Err(Error::EmptyGroup(_))
        ));
        assert!(matches!(
            parity_loss_single(&[0.3, 0.7], &[false, false]),
            Err(Error::EmptyGroup(_))
        ));
    }

    #[test]
    fn combined_example_value() {
        // race group {0.7, 0.5} = 0.6; overall 0.5; country group {0.5} = overall.
        let preds = [0.7, 0.5, 0.3, 0.5];
        let masks = GroupMasks {
            protected_race: vec![true, true, false, false],
            protected_country: vec![false, false, false, true],
        };
        let (loss, _) = parity_loss_combined(&preds, &masks, 0.32, 0.68).unwrap();
        assert!((loss - 0.0032).abs() < 1e-15, "loss = {loss}");
    }

    #[test]
    fn combined_parity_case_is_exactly_zero() {
        let masks = GroupMasks {
            protected_race: vec![true, false, true],
            protected_country: vec![false, true, true],
        };
        let (loss, grad) = parity_loss_combined(&[0.4; 3], &masks, 0.32, 0.68).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn combined_requires_protected_groups() {
        let masks = GroupMasks {
            protected_race: vec![false, false],
            protected_country: vec![true, false],
        };
        assert!(matches!(
            parity_loss_combined(&[0.2, 0.4], &masks, 1.0, 1.0),
            Err(Error::EmptyGroup(_))
        ));
    }

    #[test]
    fn single_gradient_matches_finite_difference() {
        let mut rng = Rng::new(10);
        let preds: Vec<f64> = (0..10).map(|_| rng.uniform_range(0.05, 0.95)).collect();
        let mut mask: Vec<bool> = (0..10).map(|_| rng.bernoulli(0.4)).collect();
        mask[0] = true;
        mask[1] = false;
        let (_, grad) = parity_loss_single(&preds, &mask).unwrap();
        let numeric = central_difference(|p| parity_loss_single(p, &mask).unwrap().0, &preds, 1e-6);
        assert_close(&grad, &numeric, 1e-6);
    }

    #[test]
    fn combined_gradient_matches_finite_difference_with_overlap() {
        let mut rng = Rng::new(12);
        let preds: Vec<f64> = (0..12).map(|_| rng.uniform_range(0.05, 0.95)).collect();
        let mut masks = GroupMasks {
            protected_race: (0..12).map(|_| rng.bernoulli(0.4)).collect(),
            protected_country: (0..12).map(|_| rng.bernoulli(0.4)).collect(),
        };
        // force overlap and non-members
        masks.protected_race[0] = true;
        masks.protected_country[0] = true;
        masks.protected_race[1] = false;
        masks.protected_country[1] = false;
        let (_, grad) = parity_loss_combined(&preds, &masks, 0.32, 0.68).unwrap();
        let numeric = central_difference(
            |p| parity_loss_combined(p, &masks, 0.32, 0.68).unwrap().0,
            &preds,
            1e-6,
        );
        assert_close(&grad, &numeric, 1e-6);
    }

    #[test]
    fn spec_validation_names_constraint() {
        let err = FairnessSpec::new(FairnessMode::RaceOnly, -1.0, 0.0, 0.0).unwrap_err();
        assert!(err.to_string().contains("λ ≥ 0"));
        assert!(FairnessSpec::new(FairnessMode::Combined, 1.0, -0.1, 0.5).is_err());
        // unused weights are ignored in single-attribute modes
        assert!(FairnessSpec::new(FairnessMode::CountryOnly, 1.0, -5.0, 0.5).is_ok());
    }

    fn case() -> impl Strategy<Value = (Vec<f64>, Vec<bool>, Vec<bool>)> {
        (3usize..24).prop_flat_map(|n| {
            (
                prop::collection::vec(0.01f64..0.99, n),
                prop::collection::vec(any::<bool>(), n),
                prop::collection::vec(any::<bool>(), n),
            )
        })
    }

    proptest! {
        #[test]
        fn losses_are_invariant_to_permutation_and_complement(
            (preds, mut race, mut country) in case(),
            rot in 0usize..24,
        ) {
            let n = preds.len();
            race[0] = true; race[1] = false;
            country[1] = true; country[2] = false;
            let masks = GroupMasks { protected_race: race.clone(), protected_country: country.clone() };
            let (single, sgrad) = parity_loss_single(&preds, &race).unwrap();
            let (comb, _) = parity_loss_combined(&preds, &masks, 0.32, 0.68).unwrap();
            prop_assert!(single >= 0.0 && comb >= 0.0);

            // gradient sums over each group
            let gap = group_rate(&preds, &race).unwrap()
                - group_rate(&preds, &race.iter().map(|m| !m).collect::<Vec<_>>()).unwrap();
            let sum_p: f64 = sgrad.iter().zip(&race).filter(|(_, &m)| m).map(|(g, _)| g).sum();
            let sum_np: f64 = sgrad.iter().zip(&race).filter(|(_, &m)| !m).map(|(g, _)| g).sum();
            prop_assert!((sum_p - 2.0 * gap).abs() < 1e-12);
            prop_assert!((sum_np + 2.0 * gap).abs() < 1e-12);

            // joint rotation
            let k = rot % n;
            let rotate = |v: &[f64]| { let mut v = v.to_vec(); v.rotate_left(k); v };
            let rotate_b = |v: &[bool]| { let mut v = v.to_vec(); v.rotate_left(k); v };
            let masks_r = GroupMasks { protected_race: rotate_b(&race), protected_country: rotate_b(&country) };
            let (single_r, _) = parity_loss_single(&rotate(&preds), &rotate_b(&race)).unwrap();
            let (comb_r, _) = parity_loss_combined(&rotate(&preds), &masks_r, 0.32, 0.68).unwrap();
            prop_assert!((single - single_r).abs() < 1e-12);
            prop_assert!((comb - comb_r).abs() < 1e-12);

            // p -> 1 - p
            let flipped: Vec<f64> = preds.iter().map(|p| 1.0 - p).collect();
            let (single_f, _) = parity_loss_single(&flipped, &race).unwrap();
            let (comb_f, _) = parity_loss_combined(&flipped, &masks, 0.32, 0.68).unwrap();
            prop_assert!((single - single_f).abs() < 1e-12);
            prop_assert!((comb - comb_f).abs() < 1e-12);
        }
    }
}

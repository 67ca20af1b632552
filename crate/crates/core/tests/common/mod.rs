//! Oracles shared by the integration tests and the acceptance runner.

#![allow(dead_code)]

use fairrank::dataset::PaperId;
use fairrank::fairness::{FairnessMode, FairnessSpec, GroupMasks};
use fairrank::numeric::{bce_loss, Matrix, Mode, ModelParams, Rng};
use fairrank::selection::select_top;

pub struct GradInstance {
    pub params: ModelParams,
    pub x: Matrix,
    pub y: Vec<f64>,
    pub masks: GroupMasks,
    pub spec: FairnessSpec,
}

/// Random small network, batch, lambda and mode. Every parameter is drawn
/// away from its initial constant so biases and batchnorm affine terms are
/// exercised too.
pub fn grad_instance(seed: u64) -> GradInstance {
    let mut rng = Rng::new(seed);
    let sizes = [1 + rng.below(8), 1 + rng.below(8), 1 + rng.below(8), 1];
    let mut params = ModelParams::init(&sizes, &mut rng).unwrap();
    for s in params.parameter_slices_mut() {
        for v in s.iter_mut() {
            *v = rng.normal(0.0, 0.6);
        }
    }
    let n = 4 + rng.below(9);
    let data = (0..n * sizes[0]).map(|_| rng.normal(0.0, 1.0)).collect();
    let x = Matrix::from_vec(n, sizes[0], data).unwrap();
    let y = (0..n).map(|_| f64::from(u8::from(rng.bernoulli(0.5)))).collect();

    // guarantee both groups exist on both attributes
    let mut race: Vec<bool> = (0..n).map(|_| rng.bernoulli(0.4)).collect();
    let mut country: Vec<bool> = (0..n).map(|_| rng.bernoulli(0.4)).collect();
    race[0] = true;
    race[1] = false;
    country[2] = true;
    country[3] = false;

    let mode = [FairnessMode::RaceOnly, FairnessMode::CountryOnly, FairnessMode::Combined][rng.below(3)];
    let spec = FairnessSpec::new(mode, rng.uniform_range(0.0, 10.0), rng.uniform(), 2.0 * rng.uniform()).unwrap();
    GradInstance {
        params,
        x,
        y,
        masks: GroupMasks {
            protected_race: race,
            protected_country: country,
        },
        spec,
    }
}

fn total_loss(params: &ModelParams, inst: &GradInstance) -> f64 {
    let mut p = params.clone();
    let (pred, _) = p.forward(&inst.x, Mode::Train).unwrap();
    let (bce, _) = bce_loss(&pred, &inst.y).unwrap();
    let (fair, _) = inst.spec.loss(&pred, &inst.masks).unwrap();
    bce + inst.spec.lambda * fair
}

/// Compares analytic and central-difference gradients of the total loss.
/// Returns `(checked, failures, worst relative error)`; the worst error
/// ignores entries below 1e-6 in magnitude.
pub fn check_gradients(inst: &GradInstance) -> (usize, usize, f64) {
    let mut p = inst.params.clone();
    let (pred, cache) = p.forward(&inst.x, Mode::Train).unwrap();
    let (_, mut g) = bce_loss(&pred, &inst.y).unwrap();
    let (_, gf) = inst.spec.loss(&pred, &inst.masks).unwrap();
    for (a, b) in g.iter_mut().zip(gf) {
        *a += inst.spec.lambda * b;
    }
    let grads = p.backward(&cache, &g).unwrap();
    let analytic: Vec<f64> = grads.slices().into_iter().flatten().copied().collect();

    let h = 1e-5;
    let count = analytic.len();
    let (mut failures, mut worst) = (0, 0.0f64);
    for k in 0..count {
        let shifted = |delta: f64| {
            let mut q = inst.params.clone();
            let mut seen = 0;
            for s in q.parameter_slices_mut() {
                if k < seen + s.len() {
                    s[k - seen] += delta;
                    break;
                }
                seen += s.len();
            }
            total_loss(&q, inst)
        };
        let numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
        let a = analytic[k];
        let abs = (a - numeric).abs();
        let rel = abs / a.abs().max(numeric.abs()).max(f64::MIN_POSITIVE);
        if a.abs().max(numeric.abs()) > 1e-6 {
            worst = worst.max(rel);
        }
        if abs > 1e-7 && rel > 1e-4 {
            failures += 1;
        }
    }
    (count, failures, worst)
}

/// Probabilities on a dyadic grid so strictly increasing transforms below
/// are exact and ties are frequent.
pub fn selection_instance(rng: &mut Rng) -> (Vec<PaperId>, Vec<f64>, usize) {
    let n = 1 + rng.below(60);
    let mut ids: Vec<PaperId> = (0..n as u64).map(|i| PaperId(i * 3 + 1)).collect();
    rng.shuffle(&mut ids);
    let levels = 1 + rng.below(16);
    let probs = (0..n).map(|_| rng.below(levels + 1) as f64 / 16.0).collect();
    let k = 1 + rng.below(n);
    (ids, probs, k)
}

/// Checks quota, dominance, monotone invariance and tie-break on one
/// instance; returns the first violated property.
pub fn check_selection(ids: &[PaperId], probs: &[f64], k: usize) -> Result<(), String> {
    let order = select_top(ids, probs, k).map_err(|e| e.to_string())?;
    if order.len() != k {
        return Err(format!("quota: {} of {k}", order.len()));
    }
    let chosen: std::collections::HashSet<usize> = order.iter().copied().collect();
    let min_sel = order.iter().map(|&i| probs[i]).fold(f64::INFINITY, f64::min);
    let max_rest = (0..ids.len())
        .filter(|i| !chosen.contains(i))
        .map(|i| probs[i])
        .fold(f64::NEG_INFINITY, f64::max);
    if min_sel < max_rest {
        return Err(format!("dominance: {min_sel} < {max_rest}"));
    }
    for w in order.windows(2) {
        let (a, b) = (w[0], w[1]);
        if probs[a] < probs[b] || (probs[a] == probs[b] && ids[a] > ids[b]) {
            return Err("rank order / tie-break".into());
        }
    }
    // every unselected tie at the cut must have a larger id than every selected one
    let cut_ids_sel = order.iter().filter(|&&i| probs[i] == min_sel).map(|&i| ids[i]).max();
    let cut_ids_rest = (0..ids.len())
        .filter(|i| !chosen.contains(i) && probs[*i] == min_sel)
        .map(|i| ids[i])
        .min();
    if let (Some(a), Some(b)) = (cut_ids_sel, cut_ids_rest) {
        if a > b {
            return Err("tie-break at the cut".into());
        }
    }
    let transforms: [fn(f64) -> f64; 3] = [|p| 0.25 + 0.5 * p, |p| p * p * p, |p| (p + 1.0).ln()];
    for t in transforms {
        let mapped: Vec<f64> = probs.iter().map(|&p| t(p)).collect();
        if select_top(ids, &mapped, k).map_err(|e| e.to_string())? != order {
            return Err("monotone transform changed the selection".into());
        }
    }
    Ok(())
}

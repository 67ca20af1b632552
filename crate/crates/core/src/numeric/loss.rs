use crate::{Error, Result};

const CLAMP: f64 = 1e-12;

/// Mean binary cross-entropy and its gradient with respect to each prediction.
/// Predictions are clamped to `[1e-12, 1 - 1e-12]` before taking logs.
pub fn bce_loss(predictions: &[f64], labels: &[f64]) -> Result<(f64, Vec<f64>)> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    let n = predictions.len() as f64;
    let mut loss = 0.0;
    let grad = predictions
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(CLAMP, 1.0 - CLAMP);
            loss -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
            (p - y) / (p * (1.0 - p)) / n
        })
        .collect();
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Rng;

    #[test]
    fn symmetric_case_is_ln2() {
        let (loss, _) = bce_loss(&[0.5, 0.5], &[1.0, 0.0]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn perfect_fit_is_near_zero() {
        let (loss, _) = bce_loss(&[1.0, 0.0, 1.0], &[1.0, 0.0, 1.0]).unwrap();
        assert!(loss <= 1e-10);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(bce_loss(&[0.5], &[1.0, 0.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn gradient_matches_central_difference() {
        let mut rng = Rng::new(17);
        let preds: Vec<f64> = (0..8).map(|_| rng.uniform_range(0.05, 0.95)).collect();
        let labels: Vec<f64> = (0..8).map(|_| f64::from(rng.bernoulli(0.5))).collect();
        let (_, grad) = bce_loss(&preds, &labels).unwrap();
        let h = 1e-6;
        for i in 0..preds.len() {
            let mut up = preds.clone();
            up[i] += h;
            let mut down = preds.clone();
            down[i] -= h;
            let numeric =
                (bce_loss(&up, &labels).unwrap().0 - bce_loss(&down, &labels).unwrap().0) / (2.0 * h);
            let rel = (numeric - grad[i]).abs() / grad[i].abs().max(numeric.abs());
            assert!(rel < 1e-6, "entry {i}: {} vs {numeric}", grad[i]);
        }
    }
}

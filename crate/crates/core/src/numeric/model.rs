//! The selector network: `[dense -> batchnorm -> ReLU] x 2 -> dense -> sigmoid`.
//!
//! Dense weights are stored `(fan_in, fan_out)` so a batch `X` of shape
//! `(rows, fan_in)` maps to `X W + b`. Batchnorm uses batch statistics in
//! [`Mode::Train`] (and folds them into the running estimates) and the running
//! estimates in [`Mode::Eval`].

use serde::{Deserialize, Serialize};

use super::{Matrix, Rng};
use crate::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
/// Weight of the current batch in the running-statistics update.
pub const BN_MOMENTUM: f64 = 0.1;
/// Logits are clamped here so the sigmoid never rounds to exactly 0 or 1.
const LOGIT_LIMIT: f64 = 36.0;

const N_LAYERS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    /// `(fan_in, fan_out)`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    /// First-moment accumulators, one per trainable tensor in slice order.
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    layer_sizes: Vec<usize>,
    dense: Vec<DenseParams>,
    norms: Vec<BatchNormParams>,
    adam: AdamState,
    /// Bumped whenever a trainable parameter changes; caches carry the value
    /// they were computed under.
    generation: u64,
}

#[derive(Debug, Clone)]
struct HiddenCache {
    xhat: Matrix,
    inv_std: Vec<f64>,
    /// Post-ReLU activations.
    activated: Matrix,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    generation: u64,
    mode: Mode,
    input: Matrix,
    hidden: Vec<HiddenCache>,
    logits: Vec<f64>,
    predictions: Vec<f64>,
}

impl ForwardCache {
    pub fn predictions(&self) -> &[f64] {
        &self.predictions
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormGrad {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Gradients with the same shapes as the trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub dense: Vec<DenseGrad>,
    pub norms: Vec<NormGrad>,
}

impl Gradients {
    /// Flat views in the same order as [`ModelParams::parameter_slices`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(10);
        for d in &self.dense {
            out.push(d.weights.data());
            out.push(&d.bias);
        }
        for n in &self.norms {
            out.push(&n.gamma);
            out.push(&n.beta);
        }
        out
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(10);
        for d in &mut self.dense {
            out.push(d.weights.data_mut());
            out.push(&mut d.bias);
        }
        for n in &mut self.norms {
            out.push(&mut n.gamma);
            out.push(&mut n.beta);
        }
        out
    }

    pub fn scale(&mut self, factor: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|g| *g *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|g| g.is_finite()))
    }
}

impl ModelParams {
    /// Fan-in/fan-out uniform weights, zero biases, identity batchnorm,
    /// running statistics `(0, 1)` and zeroed Adam state.
    pub fn init(layer_sizes: &[usize], rng: &mut Rng) -> Result<Self> {
        if layer_sizes.len() != N_LAYERS {
            return Err(Error::Config(format!(
                "layer_sizes must have {N_LAYERS} entries (input, hidden1, hidden2, 1), got {}",
                layer_sizes.len()
            )));
        }
        if layer_sizes[N_LAYERS - 1] != 1 {
            return Err(Error::Config("output layer width must be 1".into()));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }

        let dense = layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.uniform_range(-limit, limit))
                    .collect();
                DenseParams {
                    weights: Matrix::from_vec(fan_in, fan_out, data).expect("sized above"),
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        let norms = layer_sizes[1..N_LAYERS - 1]
            .iter()
            .map(|&width| BatchNormParams {
                gamma: vec![1.0; width],
                beta: vec![0.0; width],
                running_mean: vec![0.0; width],
                running_var: vec![1.0; width],
            })
            .collect();

        let mut params = Self {
            layer_sizes: layer_sizes.to_vec(),
            dense,
            norms,
            adam: AdamState {
                config: AdamConfig::default(),
                step: 0,
                first: Vec::new(),
                second: Vec::new(),
            },
            generation: 0,
        };
        let shapes: Vec<usize> = params.parameter_slices().iter().map(|s| s.len()).collect();
        params.adam.first = shapes.iter().map(|&n| vec![0.0; n]).collect();
        params.adam.second = shapes.iter().map(|&n| vec![0.0; n]).collect();
        Ok(params)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn dense(&self) -> &[DenseParams] {
        &self.dense
    }

    pub fn norms(&self) -> &[BatchNormParams] {
        &self.norms
    }

    pub fn adam(&self) -> &AdamState {
        &self.adam
    }

    pub fn set_adam_config(&mut self, config: AdamConfig) {
        self.adam.config = config;
    }

    /// Trainable tensors: `W1, b1, W2, b2, W3, b3, gamma1, beta1, gamma2, beta2`.
    pub fn parameter_slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(10);
        for d in &self.dense {
            out.push(d.weights.data());
            out.push(&d.bias);
        }
        for n in &self.norms {
            out.push(&n.gamma);
            out.push(&n.beta);
        }
        out
    }

    /// Mutable trainable tensors in [`Self::parameter_slices`] order.
    /// Invalidates outstanding forward caches.
    pub fn parameter_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.generation += 1;
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(10);
        for d in &mut self.dense {
            out.push(d.weights.data_mut());
            out.push(&mut d.bias);
        }
        for n in &mut self.norms {
            out.push(&mut n.gamma);
            out.push(&mut n.beta);
        }
        out
    }

    /// Every stored value (trainable, running statistics, Adam moments) as raw
    /// bits, for bitwise comparisons.
    pub fn bit_pattern(&self) -> Vec<u64> {
        let mut bits: Vec<u64> = self
            .parameter_slices()
            .iter()
            .flat_map(|s| s.iter().map(|v| v.to_bits()))
            .collect();
        for n in &self.norms {
            bits.extend(n.running_mean.iter().map(|v| v.to_bits()));
            bits.extend(n.running_var.iter().map(|v| v.to_bits()));
        }
        for m in self.adam.first.iter().chain(&self.adam.second) {
            bits.extend(m.iter().map(|v| v.to_bits()));
        }
        bits.push(self.adam.step);
        bits
    }

    /// Forward pass. In train mode batch statistics are used and folded into
    /// the running estimates; eval mode leaves `self` untouched.
    pub fn forward(&mut self, batch: &Matrix, mode: Mode) -> Result<(Vec<f64>, ForwardCache)> {
        let (cache, batch_stats) = self.run_forward(batch, mode)?;
        if mode == Mode::Train {
            let n = batch.rows() as f64;
            for (norm, (mean, var)) in self.norms.iter_mut().zip(batch_stats) {
                for j in 0..mean.len() {
                    let unbiased = var[j] * n / (n - 1.0);
                    norm.running_mean[j] =
                        (1.0 - BN_MOMENTUM) * norm.running_mean[j] + BN_MOMENTUM * mean[j];
                    norm.running_var[j] =
                        (1.0 - BN_MOMENTUM) * norm.running_var[j] + BN_MOMENTUM * unbiased;
                }
            }
        }
        Ok((cache.predictions.clone(), cache))
    }

    /// Eval-mode predictions.
    pub fn predict(&self, batch: &Matrix) -> Result<Vec<f64>> {
        Ok(self.run_forward(batch, Mode::Eval)?.0.predictions)
    }

    #[allow(clippy::type_complexity)]
    fn run_forward(
        &self,
        batch: &Matrix,
        mode: Mode,
    ) -> Result<(ForwardCache, Vec<(Vec<f64>, Vec<f64>)>)> {
        if batch.cols() != self.layer_sizes[0] {
            return Err(Error::Shape(format!(
                "batch has {} columns, network expects {}",
                batch.cols(),
                self.layer_sizes[0]
            )));
        }
        if mode == Mode::Train && batch.rows() < 2 {
            return Err(Error::DegenerateBatch(batch.rows()));
        }
        let rows = batch.rows();

        let mut hidden = Vec::with_capacity(2);
        let mut batch_stats = Vec::with_capacity(2);
        let mut current = batch.clone();
        for (dense, norm) in self.dense.iter().zip(&self.norms) {
            let mut z = current.matmul(&dense.weights);
            z.add_row_vector(&dense.bias);
            let width = z.cols();

            let (mean, var) = match mode {
                Mode::Train => {
                    let mean: Vec<f64> =
                        z.column_sums().into_iter().map(|s| s / rows as f64).collect();
                    let mut var = vec![0.0; width];
                    for row in z.data().chunks_exact(width) {
                        for j in 0..width {
                            let d = row[j] - mean[j];
                            var[j] += d * d;
                        }
                    }
                    var.iter_mut().for_each(|v| *v /= rows as f64);
                    (mean, var)
                }
                Mode::Eval => (norm.running_mean.clone(), norm.running_var.clone()),
            };
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();

            let mut xhat = z;
            let mut activated = Matrix::zeros(rows, width);
            for (xrow, arow) in xhat
                .data_mut()
                .chunks_exact_mut(width)
                .zip(activated.data_mut().chunks_exact_mut(width))
            {
                for j in 0..width {
                    xrow[j] = (xrow[j] - mean[j]) * inv_std[j];
                    let y = norm.gamma[j] * xrow[j] + norm.beta[j];
                    arow[j] = y.max(0.0);
                }
            }
            current = activated.clone();
            hidden.push(HiddenCache {
                xhat,
                inv_std,
                activated,
            });
            batch_stats.push((mean, var));
        }

        let out_layer = &self.dense[2];
        let mut z = current.matmul(&out_layer.weights);
        z.add_row_vector(&out_layer.bias);
        let logits: Vec<f64> = z.data().to_vec();
        let predictions: Vec<f64> = logits
            .iter()
            .map(|&l| sigmoid(l.clamp(-LOGIT_LIMIT, LOGIT_LIMIT)))
            .collect();
        if predictions.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric("non-finite prediction".into()));
        }

        Ok((
            ForwardCache {
                generation: self.generation,
                mode,
                input: batch.clone(),
                hidden,
                logits,
                predictions,
            },
            batch_stats,
        ))
    }

    /// Exact gradients of a scalar loss given `dL/dprediction` per row.
    pub fn backward(&self, cache: &ForwardCache, grad_pred: &[f64]) -> Result<Gradients> {
        if cache.mode != Mode::Train {
            return Err(Error::Invariant(
                "backward needs a cache from a train-mode forward".into(),
            ));
        }
        if cache.generation != self.generation {
            return Err(Error::Invariant(
                "forward cache is stale: parameters changed since it was computed".into(),
            ));
        }
        if cache.input.cols() != self.layer_sizes[0] || cache.hidden.len() != 2 {
            return Err(Error::Invariant("forward cache does not match network".into()));
        }
        let rows = cache.input.rows();
        if grad_pred.len() != rows {
            return Err(Error::Shape(format!(
                "gradient has {} entries for a batch of {rows}",
                grad_pred.len()
            )));
        }

        // Through the sigmoid (zero where the logit clamp is active).
        let dlogit: Vec<f64> = grad_pred
            .iter()
            .zip(&cache.predictions)
            .zip(&cache.logits)
            .map(|((&g, &p), &l)| {
                if l.abs() > LOGIT_LIMIT {
                    0.0
                } else {
                    g * p * (1.0 - p)
                }
            })
            .collect();
        let mut upstream = Matrix::from_vec(rows, 1, dlogit)?;

        let mut dense_grads: Vec<Option<DenseGrad>> = vec![None, None, None];
        let mut norm_grads: Vec<Option<NormGrad>> = vec![None, None];

        let out_input = &cache.hidden[1].activated;
        dense_grads[2] = Some(DenseGrad {
            weights: out_input.t_matmul(&upstream),
            bias: upstream.column_sums(),
        });
        let mut d_activated = upstream.matmul_t(&self.dense[2].weights);

        for layer in (0..2).rev() {
            let hc = &cache.hidden[layer];
            let norm = &self.norms[layer];
            let width = hc.xhat.cols();

            // ReLU: activated > 0 exactly where the batchnorm output is > 0.
            let mut dy = d_activated;
            for (g, &a) in dy.data_mut().iter_mut().zip(hc.activated.data()) {
                if a <= 0.0 {
                    *g = 0.0;
                }
            }

            let mut dgamma = vec![0.0; width];
            let mut dbeta = vec![0.0; width];
            let mut sum_dxhat = vec![0.0; width];
            let mut sum_dxhat_xhat = vec![0.0; width];
            for (grow, xrow) in dy
                .data()
                .chunks_exact(width)
                .zip(hc.xhat.data().chunks_exact(width))
            {
                for j in 0..width {
                    dgamma[j] += grow[j] * xrow[j];
                    dbeta[j] += grow[j];
                    let dxhat = grow[j] * norm.gamma[j];
                    sum_dxhat[j] += dxhat;
                    sum_dxhat_xhat[j] += dxhat * xrow[j];
                }
            }
            let n = rows as f64;
            let mut dz = Matrix::zeros(rows, width);
            for ((drow, grow), xrow) in dz
                .data_mut()
                .chunks_exact_mut(width)
                .zip(dy.data().chunks_exact(width))
                .zip(hc.xhat.data().chunks_exact(width))
            {
                for j in 0..width {
                    let dxhat = grow[j] * norm.gamma[j];
                    drow[j] = hc.inv_std[j] / n
                        * (n * dxhat - sum_dxhat[j] - xrow[j] * sum_dxhat_xhat[j]);
                }
            }
            norm_grads[layer] = Some(NormGrad {
                gamma: dgamma,
                beta: dbeta,
            });

            let layer_input = if layer == 0 {
                &cache.input
            } else {
                &cache.hidden[layer - 1].activated
            };
            dense_grads[layer] = Some(DenseGrad {
                weights: layer_input.t_matmul(&dz),
                bias: dz.column_sums(),
            });
            upstream = dz;
            d_activated = upstream.matmul_t(&self.dense[layer].weights);
        }

        let grads = Gradients {
            dense: dense_grads.into_iter().map(|g| g.expect("filled")).collect(),
            norms: norm_grads.into_iter().map(|g| g.expect("filled")).collect(),
        };
        if !grads.is_finite() {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
        Ok(grads)
    }

    /// One bias-corrected Adam update. Rejects the whole step when any
    /// gradient entry is non-finite.
    pub fn adam_step(&mut self, grads: &Gradients, lr: f64) -> Result<()> {
        let grad_slices = grads.slices();
        let shapes_match = {
            let params = self.parameter_slices();
            params.len() == grad_slices.len()
                && params.iter().zip(&grad_slices).all(|(p, g)| p.len() == g.len())
        };
        if !shapes_match {
            return Err(Error::Shape("gradient shapes do not match parameters".into()));
        }
        if !grads.is_finite() {
            return Err(Error::Numeric(
                "non-finite gradient entry, update skipped".into(),
            ));
        }
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be > 0, got {lr}")));
        }

        self.adam.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.adam.config;
        let t = self.adam.step as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);

        let mut first = std::mem::take(&mut self.adam.first);
        let mut second = std::mem::take(&mut self.adam.second);
        for (((param, grad), m), v) in self
            .parameter_slices_mut()
            .into_iter()
            .zip(&grad_slices)
            .zip(first.iter_mut())
            .zip(second.iter_mut())
        {
            for i in 0..param.len() {
                let g = grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                param[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        self.adam.first = first;
        self.adam.second = second;
        Ok(())
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

//! Fully connected and batch-norm layers, activations, and the softmax
//! cross-entropy loss, each with exact analytic backward passes.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use super::adam::{adam_step, AdamState};
use super::{AdamHyper, Mode, NeuralNetError, Tensor2};
use crate::rng::normal;

/// `y = x W^T + b`, weights stored `out x in`.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    grad_weights: Array2<f64>,
    grad_biases: Array1<f64>,
    adam_weights: AdamState,
    adam_biases: AdamState,
    cached_input: Option<Tensor2>,
}

impl DenseLayer {
    pub fn new(weights: Array2<f64>, biases: Array1<f64>) -> Self {
        let (out, _inp) = weights.dim();
        assert_eq!(biases.len(), out);
        let n_w = weights.len();
        DenseLayer {
            grad_weights: Array2::zeros(weights.raw_dim()),
            grad_biases: Array1::zeros(out),
            adam_weights: AdamState::new(n_w),
            adam_biases: AdamState::new(out),
            weights,
            biases,
            cached_input: None,
        }
    }

    /// He-style init (scaled for a following ReLU), zero biases.
    pub fn he_init(inp: usize, out: usize, rng: &mut impl Rng) -> Self {
        let std = (2.0 / inp as f64).sqrt();
        let w = Array2::from_shape_fn((out, inp), |_| std * normal(rng));
        DenseLayer::new(w, Array1::zeros(out))
    }

    /// Glorot-style init for linear/sigmoid output layers, zero biases.
    /// Scaled down so fresh heads emit near-zero outputs and classification
    /// starts at chance-level loss.
    pub fn glorot_init(inp: usize, out: usize, rng: &mut impl Rng) -> Self {
        let std = 0.25 * (2.0 / (inp + out) as f64).sqrt();
        let w = Array2::from_shape_fn((out, inp), |_| std * normal(rng));
        DenseLayer::new(w, Array1::zeros(out))
    }

    pub fn in_width(&self) -> usize {
        self.weights.dim().1
    }

    pub fn out_width(&self) -> usize {
        self.weights.dim().0
    }

    pub fn forward(&mut self, x: Tensor2) -> Result<Tensor2, NeuralNetError> {
        if x.ncols() != self.in_width() {
            return Err(NeuralNetError::WidthMismatch { got: x.ncols(), want: self.in_width() });
        }
        let mut y = x.dot(&self.weights.t());
        y += &self.biases;
        self.cached_input = Some(x);
        Ok(y)
    }

    /// Returns the input gradient; accumulates weight/bias gradients.
    pub fn backward(
        &mut self,
        grad_out: &Tensor2,
    ) -> Result<(Tensor2, (Array2<f64>, Array1<f64>)), NeuralNetError> {
        let x = self.cached_input.as_ref().ok_or(NeuralNetError::NoCachedForward)?;
        if grad_out.nrows() != x.nrows() {
            return Err(NeuralNetError::BatchMismatch { got: grad_out.nrows(), want: x.nrows() });
        }
        let gw = grad_out.t().dot(x);
        let gb = grad_out.sum_axis(Axis(0));
        self.grad_weights += &gw;
        self.grad_biases += &gb;
        Ok((grad_out.dot(&self.weights), (gw, gb)))
    }

    pub fn adam_update(&mut self, opt: &AdamHyper) {
        adam_step(
            &mut self.adam_weights,
            opt,
            self.weights.as_slice_mut().unwrap(),
            self.grad_weights.as_slice().unwrap(),
        )
        .expect("weight shapes fixed at construction");
        adam_step(
            &mut self.adam_biases,
            opt,
            self.biases.as_slice_mut().unwrap(),
            self.grad_biases.as_slice().unwrap(),
        )
        .expect("bias shapes fixed at construction");
        self.grad_weights.fill(0.0);
        self.grad_biases.fill(0.0);
    }
}

/// Per-feature batch normalization with running statistics.
///
/// Training normalizes by the biased batch variance and folds the batch
/// statistics into the running ones with weight `momentum`; inference
/// normalizes by the running statistics.
#[derive(Debug, Clone)]
pub struct BatchNormLayer {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub epsilon: f64,
    grad_gamma: Array1<f64>,
    grad_beta: Array1<f64>,
    adam_gamma: AdamState,
    adam_beta: AdamState,
    cache: Option<BnCache>,
}

#[derive(Debug, Clone)]
struct BnCache {
    normalized: Tensor2,
    inv_std: Array1<f64>,
    mode: Mode,
}

impl BatchNormLayer {
    pub fn new(width: usize) -> Self {
        BatchNormLayer {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
            momentum: 0.1,
            epsilon: 1e-5,
            grad_gamma: Array1::zeros(width),
            grad_beta: Array1::zeros(width),
            adam_gamma: AdamState::new(width),
            adam_beta: AdamState::new(width),
            cache: None,
        }
    }

    pub fn width(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&mut self, x: Tensor2, mode: Mode) -> Result<Tensor2, NeuralNetError> {
        if x.ncols() != self.width() {
            return Err(NeuralNetError::WidthMismatch { got: x.ncols(), want: self.width() });
        }
        let b = x.nrows();
        let (mean, var) = match mode {
            Mode::Training => {
                if b < 2 {
                    return Err(NeuralNetError::BatchTooSmall(b));
                }
                let mean = x.mean_axis(Axis(0)).expect("non-empty batch");
                let mut var = Array1::zeros(self.width());
                for row in x.rows() {
                    for (j, &v) in row.iter().enumerate() {
                        let d = v - mean[j];
                        var[j] += d * d;
                    }
                }
                var /= b as f64;
                for j in 0..self.width() {
                    self.running_mean[j] =
                        (1.0 - self.momentum) * self.running_mean[j] + self.momentum * mean[j];
                    self.running_var[j] =
                        (1.0 - self.momentum) * self.running_var[j] + self.momentum * var[j];
                }
                (mean, var)
            }
            Mode::Inference => (self.running_mean.clone(), self.running_var.clone()),
        };
        let inv_std = var.mapv(|v| 1.0 / (v + self.epsilon).sqrt());
        let mut normalized = x;
        for mut row in normalized.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - mean[j]) * inv_std[j];
            }
        }
        let mut y = normalized.clone();
        for mut row in y.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.gamma[j] * *v + self.beta[j];
            }
        }
        self.cache = Some(BnCache { normalized, inv_std, mode });
        Ok(y)
    }

    /// Returns the input gradient; accumulates gamma/beta gradients.
    pub fn backward(
        &mut self,
        grad_out: &Tensor2,
    ) -> Result<(Tensor2, (Array1<f64>, Array1<f64>)), NeuralNetError> {
        let cache = self.cache.as_ref().ok_or(NeuralNetError::NoCachedForward)?;
        let xhat = &cache.normalized;
        if grad_out.dim() != xhat.dim() {
            return Err(NeuralNetError::BatchMismatch { got: grad_out.nrows(), want: xhat.nrows() });
        }
        let b = xhat.nrows() as f64;
        let w = self.width();
        let mut ggamma = Array1::zeros(w);
        let mut gbeta = Array1::zeros(w);
        for (g_row, x_row) in grad_out.rows().into_iter().zip(xhat.rows()) {
            for j in 0..w {
                ggamma[j] += g_row[j] * x_row[j];
                gbeta[j] += g_row[j];
            }
        }
        let grad_in = match cache.mode {
            Mode::Training => {
                // dL/dx = gamma * inv_std / B * (B g - sum(g) - xhat * sum(g xhat))
                let mut out = Tensor2::zeros(grad_out.raw_dim());
                for ((mut o_row, g_row), x_row) in
                    out.rows_mut().into_iter().zip(grad_out.rows()).zip(xhat.rows())
                {
                    for j in 0..w {
                        o_row[j] = self.gamma[j] * cache.inv_std[j] / b
                            * (b * g_row[j] - gbeta[j] - x_row[j] * ggamma[j]);
                    }
                }
                out
            }
            Mode::Inference => {
                // running stats are constants: a pure affine map
                let mut out = grad_out.clone();
                for mut row in out.rows_mut() {
                    for j in 0..w {
                        row[j] *= self.gamma[j] * cache.inv_std[j];
                    }
                }
                out
            }
        };
        self.grad_gamma += &ggamma;
        self.grad_beta += &gbeta;
        Ok((grad_in, (ggamma, gbeta)))
    }

    pub fn adam_update(&mut self, opt: &AdamHyper) {
        adam_step(
            &mut self.adam_gamma,
            opt,
            self.gamma.as_slice_mut().unwrap(),
            self.grad_gamma.as_slice().unwrap(),
        )
        .expect("gamma shapes fixed at construction");
        adam_step(
            &mut self.adam_beta,
            opt,
            self.beta.as_slice_mut().unwrap(),
            self.grad_beta.as_slice().unwrap(),
        )
        .expect("beta shapes fixed at construction");
        self.grad_gamma.fill(0.0);
        self.grad_beta.fill(0.0);
    }
}

/// Cached ReLU activation mask.
#[derive(Debug, Clone, Default)]
pub struct ReluState {
    mask: Option<Array2<bool>>,
}

pub fn relu_forward(x: Tensor2, state: &mut ReluState) -> Tensor2 {
    state.mask = Some(x.mapv(|v| v > 0.0));
    x.mapv(|v| v.max(0.0))
}

pub fn relu_backward(grad_out: &Tensor2, state: &ReluState) -> Result<Tensor2, NeuralNetError> {
    let mask = state.mask.as_ref().ok_or(NeuralNetError::NoCachedForward)?;
    if mask.dim() != grad_out.dim() {
        return Err(NeuralNetError::BatchMismatch { got: grad_out.nrows(), want: mask.nrows() });
    }
    let mut g = grad_out.clone();
    g.zip_mut_with(mask, |v, &m| {
        if !m {
            *v = 0.0;
        }
    });
    Ok(g)
}

/// Cached sigmoid outputs.
#[derive(Debug, Clone, Default)]
pub struct SigmoidState {
    output: Option<Tensor2>,
}

pub fn sigmoid_forward(x: Tensor2, state: &mut SigmoidState) -> Tensor2 {
    let y = x.mapv(|v| 1.0 / (1.0 + (-v).exp()));
    state.output = Some(y.clone());
    y
}

pub fn sigmoid_backward(grad_out: &Tensor2, state: &SigmoidState) -> Result<Tensor2, NeuralNetError> {
    let y = state.output.as_ref().ok_or(NeuralNetError::NoCachedForward)?;
    if y.dim() != grad_out.dim() {
        return Err(NeuralNetError::BatchMismatch { got: grad_out.nrows(), want: y.nrows() });
    }
    let mut g = grad_out.clone();
    g.zip_mut_with(y, |v, &s| *v *= s * (1.0 - s));
    Ok(g)
}

/// Batch-mean softmax cross-entropy against one-hot targets.
///
/// Returns the loss and its gradient `(softmax - target) / B` with respect to
/// the logits.
pub fn softmax_cross_entropy(
    logits: &Tensor2,
    targets: &Tensor2,
) -> Result<(f64, Tensor2), NeuralNetError> {
    if logits.dim() != targets.dim() {
        return Err(NeuralNetError::WidthMismatch { got: targets.ncols(), want: logits.ncols() });
    }
    let b = logits.nrows();
    let mut grad = Tensor2::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for (i, (logit_row, target_row)) in
        logits.rows().into_iter().zip(targets.rows()).enumerate()
    {
        let mut hot = None;
        for (j, &t) in target_row.iter().enumerate() {
            if t == 1.0 {
                if hot.is_some() {
                    return Err(NeuralNetError::NotOneHot(i));
                }
                hot = Some(j);
            } else if t != 0.0 {
                return Err(NeuralNetError::NotOneHot(i));
            }
        }
        let hot = hot.ok_or(NeuralNetError::NotOneHot(i))?;
        let max = logit_row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = logit_row.iter().map(|&v| (v - max).exp()).sum();
        loss += denom.ln() - (logit_row[hot] - max);
        for (j, &v) in logit_row.iter().enumerate() {
            let p = (v - max).exp() / denom;
            grad[(i, j)] = (p - target_row[j]) / b as f64;
        }
    }
    Ok((loss / b as f64, grad))
}

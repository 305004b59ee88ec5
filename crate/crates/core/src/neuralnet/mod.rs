//! Dense neural-network core with hand-written backpropagation: linear and
//! batch-norm layers, ReLU/sigmoid activations, softmax cross-entropy, Adam,
//! and the two custom physical layers of the learned transceiver (batch power
//! normalization and the complex channel layer).
//!
//! Tensors are `ndarray::Array2<f64>` with the batch along the first axis.
//! Complex vectors cross the network boundary stacked as
//! `[re_0..re_{n-1}, im_0..im_{n-1}]`.

mod adam;
mod layers;
mod physical;

pub use adam::{adam_step, AdamState};
pub use layers::{
    relu_backward, relu_forward, sigmoid_backward, sigmoid_forward, softmax_cross_entropy,
    BatchNormLayer, DenseLayer, ReluState, SigmoidState,
};
pub use physical::{
    stack_complex_rows, stack_matrix, unstack_complex_rows, ChannelLayer, NormalizationMode,
    PowerNormalizer,
};

use ndarray::Array2;
use thiserror::Error;

/// Batch-major real tensor: `batch x width`.
pub type Tensor2 = Array2<f64>;

#[derive(Debug, Error)]
pub enum NeuralNetError {
    #[error("input width {got} does not match layer width {want}")]
    WidthMismatch { got: usize, want: usize },
    #[error("backward called before forward")]
    NoCachedForward,
    #[error("batch normalization in training mode needs a batch of at least 2, got {0}")]
    BatchTooSmall(usize),
    #[error("target row {0} is not one-hot")]
    NotOneHot(usize),
    #[error("loss weights must be non-negative and sum to 1")]
    InvalidLossWeights,
    #[error("power normalization over an all-zero batch")]
    ZeroPowerBatch,
    #[error("parameter/gradient length mismatch: {got} vs {want}")]
    ShapeMismatch { got: usize, want: usize },
    #[error("batch size {got} does not match expected {want}")]
    BatchMismatch { got: usize, want: usize },
}

/// Whether batch statistics are computed (training) or running statistics
/// are used (inference).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Training,
    Inference,
}

/// One step of a fully connected stack.
#[derive(Debug, Clone)]
pub enum Layer {
    Dense(DenseLayer),
    BatchNorm(BatchNormLayer),
    Relu(ReluState),
    Sigmoid(SigmoidState),
}

impl Layer {
    fn forward(&mut self, x: Tensor2, mode: Mode) -> Result<Tensor2, NeuralNetError> {
        match self {
            Layer::Dense(l) => l.forward(x),
            Layer::BatchNorm(l) => l.forward(x, mode),
            Layer::Relu(s) => Ok(relu_forward(x, s)),
            Layer::Sigmoid(s) => Ok(sigmoid_forward(x, s)),
        }
    }

    fn backward(&mut self, grad: Tensor2) -> Result<Tensor2, NeuralNetError> {
        match self {
            Layer::Dense(l) => Ok(l.backward(&grad)?.0),
            Layer::BatchNorm(l) => Ok(l.backward(&grad)?.0),
            Layer::Relu(s) => relu_backward(&grad, s),
            Layer::Sigmoid(s) => sigmoid_backward(&grad, s),
        }
    }

    fn adam_update(&mut self, opt: &AdamHyper) {
        match self {
            Layer::Dense(l) => l.adam_update(opt),
            Layer::BatchNorm(l) => l.adam_update(opt),
            _ => {}
        }
    }
}

/// Shared Adam hyper-parameters for a whole network.
#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper { lr: 2e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// A stack of layers applied in order.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

impl Mlp {
    pub fn new(layers: Vec<Layer>) -> Self {
        Mlp { layers }
    }

    pub fn forward(&mut self, x: Tensor2, mode: Mode) -> Result<Tensor2, NeuralNetError> {
        let mut cur = x;
        for layer in &mut self.layers {
            cur = layer.forward(cur, mode)?;
        }
        Ok(cur)
    }

    /// Propagates the output gradient back through the stack, accumulating
    /// parameter gradients in each layer, and returns the input gradient.
    pub fn backward(&mut self, grad: Tensor2) -> Result<Tensor2, NeuralNetError> {
        let mut cur = grad;
        for layer in self.layers.iter_mut().rev() {
            cur = layer.backward(cur)?;
        }
        Ok(cur)
    }

    /// One Adam step on every parameter from its accumulated gradient, then
    /// clears the gradients.
    pub fn adam_update(&mut self, opt: &AdamHyper) {
        for layer in &mut self.layers {
            layer.adam_update(opt);
        }
    }

    pub fn n_params(&self) -> usize {
        let mut n = 0;
        self.visit_tensors(&mut |_, t| n += t.len());
        n
    }

    /// Calls `f` with a stable name and a view of every persistent tensor
    /// (parameters and running statistics), in a fixed order.
    pub fn visit_tensors(&self, f: &mut impl FnMut(String, &[f64])) {
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Dense(l) => {
                    f(format!("layer{i}.dense.weight"), l.weights.as_slice().unwrap());
                    f(format!("layer{i}.dense.bias"), l.biases.as_slice().unwrap());
                }
                Layer::BatchNorm(l) => {
                    f(format!("layer{i}.batchnorm.gamma"), l.gamma.as_slice().unwrap());
                    f(format!("layer{i}.batchnorm.beta"), l.beta.as_slice().unwrap());
                    f(
                        format!("layer{i}.batchnorm.running_mean"),
                        l.running_mean.as_slice().unwrap(),
                    );
                    f(
                        format!("layer{i}.batchnorm.running_var"),
                        l.running_var.as_slice().unwrap(),
                    );
                }
                _ => {}
            }
        }
    }

    /// Mutable counterpart of [`Mlp::visit_tensors`], same order.
    pub fn visit_tensors_mut(&mut self, f: &mut impl FnMut(String, &mut [f64])) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            match layer {
                Layer::Dense(l) => {
                    f(format!("layer{i}.dense.weight"), l.weights.as_slice_mut().unwrap());
                    f(format!("layer{i}.dense.bias"), l.biases.as_slice_mut().unwrap());
                }
                Layer::BatchNorm(l) => {
                    f(format!("layer{i}.batchnorm.gamma"), l.gamma.as_slice_mut().unwrap());
                    f(format!("layer{i}.batchnorm.beta"), l.beta.as_slice_mut().unwrap());
                    f(
                        format!("layer{i}.batchnorm.running_mean"),
                        l.running_mean.as_slice_mut().unwrap(),
                    );
                    f(
                        format!("layer{i}.batchnorm.running_var"),
                        l.running_var.as_slice_mut().unwrap(),
                    );
                }
                _ => {}
            }
        }
    }
}

#[cfg(test)]
pub(crate) mod gradcheck {
    //! Central finite-difference verification used across layer tests.

    /// Central difference of a loss along one coordinate. `eval(delta)` must
    /// evaluate the loss with the coordinate displaced by `delta` and leave
    /// the state unchanged afterwards.
    pub fn central_diff(mut eval: impl FnMut(f64) -> f64, step: f64) -> f64 {
        (eval(step) - eval(-step)) / (2.0 * step)
    }

    pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
        let denom = analytic.abs().max(numeric.abs()).max(1e-8);
        (analytic - numeric).abs() / denom
    }
}

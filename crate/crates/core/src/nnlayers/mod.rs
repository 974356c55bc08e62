//! Differentiable layers over rank-3 tensors.
//!
//! Every layer caches what it needs during `forward` and consumes it in
//! `backward`, which returns the input gradient and accumulates parameter
//! gradients into the layer. The network is a fixed sequential chain, so
//! reverse-mode differentiation is just calling `backward` in reverse order.

mod activation;
pub mod checkpoint;
mod conv;
mod gradcheck;
mod norm;
mod tensor;
mod wavelet_layer;

pub use activation::{dropout, dropout_backward, elu, elu_backward, Dropout, Elu};
pub use conv::{
    conv1d_backward, conv1d_forward, same_padding, transpose_conv1d_backward,
    transpose_conv1d_forward, Conv1d, ConvGrads, ConvParams, TransposeConv1d,
};
pub use gradcheck::gradient_check;
pub use norm::{BatchNorm, BatchNormState};
pub use tensor::Tensor3;
pub use wavelet_layer::{
    dwt_layer_backward, dwt_layer_forward, idwt_layer_backward, idwt_layer_forward, BranchInput,
    DwtLayer, IdwtLayer, WaveletLayerParams,
};

use crate::error::Result;
use crate::rng::derive_seed;

/// Train vs inference behaviour for batch norm and dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Per-call context: mode plus the seed that keys dropout masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForwardCtx {
    pub mode: Mode,
    pub seed: u64,
}

impl ForwardCtx {
    pub fn train(seed: u64) -> Self {
        ForwardCtx {
            mode: Mode::Train,
            seed,
        }
    }

    pub fn infer() -> Self {
        ForwardCtx {
            mode: Mode::Infer,
            seed: 0,
        }
    }

    /// Context for the `index`-th layer of a chain.
    pub fn for_layer(&self, index: usize) -> Self {
        ForwardCtx {
            seed: derive_seed(self.seed, &[index as u64]),
            ..*self
        }
    }
}

/// A parameter array together with its accumulated gradient.
pub struct ParamSlot<'a> {
    pub value: &'a mut [f64],
    pub grad: &'a [f64],
}

/// One element of the sequential chain.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv(Conv1d),
    TransposeConv(TransposeConv1d),
    Dwt(DwtLayer),
    Idwt(IdwtLayer),
    BatchNorm(BatchNorm),
    Elu(Elu),
    Dropout(Dropout),
}

impl Layer {
    pub fn forward(&mut self, x: &Tensor3, ctx: &ForwardCtx) -> Result<Tensor3> {
        match self {
            Layer::Conv(l) => l.forward(x),
            Layer::TransposeConv(l) => l.forward(x),
            Layer::Dwt(l) => l.forward(x),
            Layer::Idwt(l) => l.forward(x),
            Layer::BatchNorm(l) => l.forward(x, ctx.mode),
            Layer::Elu(l) => l.forward(x),
            Layer::Dropout(l) => l.forward(x, ctx),
        }
    }

    /// Inference-mode forward that leaves the layer untouched.
    pub fn infer(&self, x: &Tensor3) -> Result<Tensor3> {
        match self {
            Layer::Conv(l) => conv1d_forward(x, &l.params),
            Layer::TransposeConv(l) => transpose_conv1d_forward(x, &l.params),
            Layer::Dwt(l) => dwt_layer_forward(x, &l.params),
            Layer::Idwt(l) => idwt_layer_forward(x, &l.params, l.input),
            Layer::BatchNorm(l) => l.infer(x),
            Layer::Elu(_) => Ok(elu(x)),
            Layer::Dropout(_) => Ok(x.clone()),
        }
    }

    pub fn backward(&mut self, grad_out: &Tensor3) -> Result<Tensor3> {
        match self {
            Layer::Conv(l) => l.backward(grad_out),
            Layer::TransposeConv(l) => l.backward(grad_out),
            Layer::Dwt(l) => l.backward(grad_out),
            Layer::Idwt(l) => l.backward(grad_out),
            Layer::BatchNorm(l) => l.backward(grad_out),
            Layer::Elu(l) => l.backward(grad_out),
            Layer::Dropout(l) => l.backward(grad_out),
        }
    }

    pub fn param_slots(&mut self) -> Vec<ParamSlot<'_>> {
        match self {
            Layer::Conv(l) => l.param_slots(),
            Layer::TransposeConv(l) => l.param_slots(),
            Layer::Dwt(l) => l.param_slots(),
            Layer::Idwt(l) => l.param_slots(),
            Layer::BatchNorm(l) => l.param_slots(),
            Layer::Elu(_) | Layer::Dropout(_) => Vec::new(),
        }
    }

    pub fn zero_grad(&mut self) {
        match self {
            Layer::Conv(l) => l.zero_grad(),
            Layer::TransposeConv(l) => l.zero_grad(),
            Layer::Dwt(l) => l.zero_grad(),
            Layer::Idwt(l) => l.zero_grad(),
            Layer::BatchNorm(l) => l.zero_grad(),
            Layer::Elu(_) | Layer::Dropout(_) => {}
        }
    }

    /// Drops cached activations.
    pub fn clear_cache(&mut self) {
        match self {
            Layer::Conv(l) => l.cache = None,
            Layer::TransposeConv(l) => l.cache = None,
            Layer::Dwt(l) => l.cache = None,
            Layer::Idwt(l) => l.cache = None,
            Layer::BatchNorm(l) => l.cache = None,
            Layer::Elu(l) => l.cache = None,
            Layer::Dropout(l) => l.mask = None,
        }
    }

    pub fn parameter_count(&self) -> usize {
        match self {
            Layer::Conv(l) => l.params.len(),
            Layer::TransposeConv(l) => l.params.len(),
            Layer::Dwt(l) => l.params.hp.len() + l.params.lp.len(),
            Layer::Idwt(l) => l.params.hp.len() + l.params.lp.len(),
            Layer::BatchNorm(l) => 2 * l.state.gamma.len(),
            Layer::Elu(_) | Layer::Dropout(_) => 0,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Conv(_) => "conv",
            Layer::TransposeConv(_) => "tconv",
            Layer::Dwt(_) => "dwt",
            Layer::Idwt(_) => "idwt",
            Layer::BatchNorm(_) => "batchnorm",
            Layer::Elu(_) => "elu",
            Layer::Dropout(_) => "dropout",
        }
    }

    /// Output `(length, channels)` for an input `(length, channels)`.
    pub fn output_shape(&self, length: usize, channels: usize) -> (usize, usize) {
        match self {
            Layer::Conv(l) => (length / l.params.stride, l.params.out_channels),
            Layer::TransposeConv(l) => (length * l.params.stride, l.params.out_channels),
            Layer::Dwt(l) => (length / 2, 2 * l.params.hp.out_channels),
            Layer::Idwt(l) => (length * 2, l.params.hp.out_channels),
            _ => (length, channels),
        }
    }
}

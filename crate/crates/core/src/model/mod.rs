//! Pre-norm transformer encoder with a masked-LM head and a tag head.
//!
//! Everything is generic over [`Float`] so the same code trains in `f32`
//! and is gradient-checked in `f64`. Gradients are written out by hand in
//! [`network`]; there is no autodiff.

mod checkpoint;
mod config;
mod loss;
mod network;
mod ops;
mod optim;
mod params;

pub use checkpoint::{Checkpoint, CheckpointHeader, TensorEntry};
pub use config::ModelConfig;
pub use loss::{loss, LossSpec, LossValue};
pub use network::{backward, forward, forward_hidden, vocab_log_probs_at, Inputs};
pub use optim::{adamw_step, lr_at, AdamWConfig, OptimizerState};
pub use params::{init_model, LayerParams, ModelParams, ParamKind};

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};

/// Scalar type the network is generic over (`f32` or `f64`).
pub trait Float:
    num_traits::Float
    + LinalgScalar
    + ScalarOperand
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + 'static
{
    fn cast_from(x: f64) -> Self;
    fn as_f64(self) -> f64;
    fn from_f32_bits(x: f32) -> Self;
    fn to_f32(self) -> f32;
}

impl Float for f32 {
    fn cast_from(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn from_f32_bits(x: f32) -> Self {
        x
    }
    fn to_f32(self) -> f32 {
        self
    }
}

impl Float for f64 {
    fn cast_from(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn from_f32_bits(x: f32) -> Self {
        x as f64
    }
    fn to_f32(self) -> f32 {
        self as f32
    }
}

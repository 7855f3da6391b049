//! Value-and-gradient evaluation for a fixed menu of 1-D layers.
//!
//! Every layer is a pair of functions: a forward pass that returns its output
//! together with whatever the backward pass needs, and a backward pass that
//! takes the upstream gradient, accumulates parameter gradients into
//! [`Param::grad`] and returns the gradient with respect to its input.
//! Layers are generic over [`Scalar`] so the same code runs in f32 for
//! training and in f64 for finite-difference checks.

mod block;
mod checkpoint;
mod layers;
mod loss;
mod optim;
mod tensor;

pub use block::{BlockCache, NormMode, Resample, ResidualBlock, StyleAffine, StyleAffineGrad};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, TensorEntry, CHECKPOINT_MAGIC};
pub use layers::{
    adain, adain_backward, conv1d, conv1d_backward, global_avg_pool, global_avg_pool_backward, instance_norm,
    instance_norm_backward, leaky_relu, leaky_relu_backward, upsample2, upsample2_backward, Conv1d, Linear,
    MultiHeadLinear, NormCache, IN_EPS, LEAKY_SLOPE,
};
pub use loss::{focal_loss, focal_loss_logits, softmax_rows, PROB_CLAMP};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use tensor::{Param, Scalar, TensorBuf};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid probability: {0}")]
    InvalidProbability(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Anything that owns trainable parameters.
///
/// `params` and `params_mut` must list parameters in the same order.
pub trait Module<T: Scalar> {
    fn params(&self, prefix: &str) -> Vec<(String, &Param<T>)>;
    fn params_mut(&mut self) -> Vec<&mut Param<T>>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn param_count(&self) -> usize {
        self.params("").iter().map(|(_, p)| p.value.len()).sum()
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

//! Minimal reverse-mode automatic differentiation on dense `f64` tensors.

mod adam;
pub mod checkpoint;
mod param;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use param::{ParamId, ParamStore, Parameter};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

/// Softmax of one row of logits, max-subtracted.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    tape::softmax_row(logits)
}

/// `sign(x) * max(|x| - tau, 0)`.
pub fn soft_threshold(x: f64, tau: f64) -> f64 {
    let m = x.abs() - tau;
    if m > 0.0 {
        m.copysign(x)
    } else {
        0.0
    }
}

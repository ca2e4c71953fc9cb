//! A small feed-forward network engine with analytic backpropagation.
//!
//! Parameters of each network live in one flat `Vec<f64>`; weight matrices
//! are row-major `(in, out)` views into it. Gradients use the same layout, so
//! the optimizer and checkpoints only ever see flat arrays.

mod adam;
pub mod checkpoint;
mod encoder;
mod loss;
mod mlp;

use ndarray::Array2;
use thiserror::Error;

pub use adam::AdamState;
pub use encoder::{EncoderCache, EncoderGrads, SplitEncoder, SplitEncoderSpec};
pub use loss::{
    entropy_to_uniform_loss, focal_sanitize_loss, log_softmax_rows, mse_reconstruction_loss,
    softmax_cross_entropy, softmax_rows, FocalMode,
};
pub use mlp::{Activation, Classifier, ForwardCache, Mlp, MlpSpec};

/// Row-major batch of examples (rows) by features (columns).
pub type Matrix = Array2<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },
    #[error("label {label} out of range for {classes} classes (row {row})")]
    LabelOutOfRange { row: usize, label: usize, classes: usize },
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("parameter count mismatch: spec needs {expected}, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error(transparent)]
    Entropy(#[from] crate::entropy::EntropyError),
}

pub(crate) fn shape_err(expected: impl ToString, got: impl ToString) -> NnError {
    NnError::Shape {
        expected: expected.to_string(),
        got: got.to_string(),
    }
}

/// Argmax per row, ties to the lowest column.
pub fn argmax_rows(m: &Matrix) -> Vec<usize> {
    m.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    hits as f64 / truth.len() as f64
}

/// Copies the listed rows of `m` into a new matrix.
pub fn select_rows(m: &Matrix, rows: &[usize]) -> Matrix {
    m.select(ndarray::Axis(0), rows)
}

//! Focal-entropy adversarial representation learning.
//!
//! A split encoder produces a target embedding and a residual embedding.
//! Predictors learn the target attribute from the target embedding and the
//! sensitive attribute from the residual one, while adversaries trained on
//! the swapped embeddings drive the encoder to hide each attribute where it
//! does not belong. Sensitive-attribute sanitization uses an off-centered
//! entropy whose peak concentrates confusion on classes similar to the
//! input's own class.

pub mod config;
pub mod data;
pub mod entropy;
pub mod eval;
pub mod game;
pub mod nn;
pub mod similarity;

pub use config::{ConfigError, ExperimentConfig};
pub use data::{LabeledDataset, Splits};
pub use entropy::{ClassPartition, FocalTarget, LogitVector, ProbVector};
pub use game::{GameWeights, SanitizationMode, TrainSchedule, TrainState};
pub use nn::{Matrix, SplitEncoder};

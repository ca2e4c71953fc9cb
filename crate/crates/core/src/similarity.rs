//! Per-input similar/dissimilar partitions of the sensitive classes.
//!
//! Partitions come either from label structure (classes sharing a group with
//! the input's own class) or from scores (the `k` highest-scoring classes).

use serde::{Deserialize, Serialize};

use crate::entropy::{softmax, ClassPartition, EntropyError, LogitVector};

/// One real score per sensitive class.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EntropyError> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(EntropyError::NonFiniteLogit(i));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Maps each sensitive class to a group id (e.g. its superclass).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelGrouping {
    group_of: Vec<usize>,
}

impl LabelGrouping {
    pub fn new(group_of: Vec<usize>) -> Result<Self, EntropyError> {
        let mut groups = group_of.clone();
        groups.sort_unstable();
        groups.dedup();
        if groups.len() < 2 {
            return Err(EntropyError::DegeneratePartition {
                similar: group_of.len(),
                dissimilar: 0,
            });
        }
        Ok(Self { group_of })
    }

    pub fn n_classes(&self) -> usize {
        self.group_of.len()
    }

    pub fn group_of(&self, class: usize) -> usize {
        self.group_of[class]
    }

    pub fn groups(&self) -> &[usize] {
        &self.group_of
    }
}

/// The `k` largest scores form the similar set, in descending score order.
/// Ties go to the lower class index.
pub fn top_k_similar(scores: &ScoreVector, k: usize) -> Result<ClassPartition, EntropyError> {
    let n = scores.0.len();
    if k == 0 || k >= n {
        return Err(EntropyError::DegeneratePartition {
            similar: k.min(n),
            dissimilar: n.saturating_sub(k),
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let s = &scores.0;
    // Stable sort keeps lower indices first among equal scores.
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    order.truncate(k);
    ClassPartition::new(n, order)
}

pub fn partition_from_labels(
    sensitive_class: usize,
    grouping: &LabelGrouping,
) -> Result<ClassPartition, EntropyError> {
    let n = grouping.n_classes();
    if sensitive_class >= n {
        return Err(EntropyError::ClassOutOfRange {
            index: sensitive_class,
            n,
        });
    }
    let g = grouping.group_of[sensitive_class];
    let similar = (0..n).filter(|&c| grouping.group_of[c] == g).collect();
    ClassPartition::new(n, similar)
}

pub fn partition_from_model(probe_output: &LogitVector, k: usize) -> Result<ClassPartition, EntropyError> {
    let scores = ScoreVector::new(softmax(probe_output.values()))?;
    top_k_similar(&scores, k)
}

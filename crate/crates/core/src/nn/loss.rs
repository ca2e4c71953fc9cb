//! Batch losses over logit rows. Every loss is averaged over rows and
//! returns its gradient with respect to the logits.

use serde::{Deserialize, Serialize};

use super::{shape_err, Matrix, NnError};
use crate::entropy::FocalTarget;

pub fn log_softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

pub fn softmax_rows(logits: &Matrix) -> Matrix {
    log_softmax_rows(logits).mapv(f64::exp)
}

pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix), NnError> {
    let (rows, classes) = logits.dim();
    if labels.len() != rows {
        return Err(shape_err(format!("{rows} labels"), format!("{} labels", labels.len())));
    }
    if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
        return Err(NnError::LabelOutOfRange { row, label, classes });
    }
    if rows == 0 {
        return Ok((0.0, Matrix::zeros((0, classes))));
    }
    let logp = log_softmax_rows(logits);
    let mut grad = logp.mapv(f64::exp);
    let mut loss = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        loss -= logp[[r, label]];
        grad[[r, label]] -= 1.0;
    }
    let scale = 1.0 / rows as f64;
    grad *= scale;
    Ok((loss * scale, grad))
}

/// Row-mean of `KL(softmax(row) || U)`.
pub fn entropy_to_uniform_loss(logits: &Matrix) -> (f64, Matrix) {
    let (rows, classes) = logits.dim();
    if rows == 0 {
        return (0.0, Matrix::zeros((0, classes)));
    }
    let ln_n = (classes as f64).ln();
    let logp = log_softmax_rows(logits);
    let mut grad = Matrix::zeros((rows, classes));
    let mut loss = 0.0;
    for (r, lp) in logp.rows().into_iter().enumerate() {
        let kl: f64 = lp.iter().map(|&l| l.exp() * (l + ln_n)).sum();
        loss += kl;
        for (g, &l) in grad.row_mut(r).iter_mut().zip(lp.iter()) {
            *g = l.exp() * (l + ln_n - kl);
        }
    }
    let scale = 1.0 / rows as f64;
    grad *= scale;
    (loss * scale, grad)
}

/// How the focal sanitization loss is realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FocalMode {
    /// `KL(softmax || tau)`
    KlTau,
    /// Sum over the two class groups of the within-group KL to uniform.
    Split,
}

/// Row-mean focal sanitization loss, one target per row.
pub fn focal_sanitize_loss(
    logits: &Matrix,
    targets: &[&FocalTarget],
    mode: FocalMode,
) -> Result<(f64, Matrix), NnError> {
    let (rows, classes) = logits.dim();
    if targets.len() != rows {
        return Err(shape_err(format!("{rows} targets"), format!("{} targets", targets.len())));
    }
    if let Some(t) = targets.iter().find(|t| t.len() != classes) {
        return Err(shape_err(format!("targets over {classes} classes"), format!("{} classes", t.len())));
    }
    if rows == 0 {
        return Ok((0.0, Matrix::zeros((0, classes))));
    }
    let mut grad = Matrix::zeros((rows, classes));
    let mut loss = 0.0;
    match mode {
        FocalMode::KlTau => {
            let logp = log_softmax_rows(logits);
            for (r, (lp, target)) in logp.rows().into_iter().zip(targets).enumerate() {
                let tau = target.tau.values();
                let kl: f64 = lp.iter().zip(tau).map(|(&l, &t)| l.exp() * (l - t.ln())).sum();
                loss += kl;
                for ((g, &l), &t) in grad.row_mut(r).iter_mut().zip(lp.iter()).zip(tau) {
                    *g = l.exp() * (l - t.ln() - kl);
                }
            }
        }
        FocalMode::Split => {
            // Group-renormalized softmax equals a softmax over the group's
            // own logits, so each group is an independent KL-to-uniform.
            for (r, target) in targets.iter().enumerate() {
                let part = &target.partition;
                for group in [part.similar(), part.dissimilar()] {
                    let max = group.iter().map(|&j| logits[[r, j]]).fold(f64::NEG_INFINITY, f64::max);
                    let lse = max + group.iter().map(|&j| (logits[[r, j]] - max).exp()).sum::<f64>().ln();
                    let ln_n = (group.len() as f64).ln();
                    let kl: f64 = group
                        .iter()
                        .map(|&j| {
                            let l = logits[[r, j]] - lse;
                            l.exp() * (l + ln_n)
                        })
                        .sum();
                    loss += kl;
                    for &j in group {
                        let l = logits[[r, j]] - lse;
                        grad[[r, j]] = l.exp() * (l + ln_n - kl);
                    }
                }
            }
        }
    }
    let scale = 1.0 / rows as f64;
    grad *= scale;
    Ok((loss * scale, grad))
}

/// Mean squared error over every entry.
pub fn mse_reconstruction_loss(decoded: &Matrix, original: &Matrix) -> Result<(f64, Matrix), NnError> {
    if decoded.dim() != original.dim() {
        return Err(shape_err(format!("{:?}", original.dim()), format!("{:?}", decoded.dim())));
    }
    let count = decoded.len();
    if count == 0 {
        return Ok((0.0, decoded.clone()));
    }
    let diff = decoded - original;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / count as f64;
    Ok((loss, diff * (2.0 / count as f64)))
}

//! Shannon and off-centered (focal) entropy over categorical distributions.
//!
//! The focal entropy of `p` is the Shannon entropy of `p` after a piecewise
//! linear remapping that moves the entropy maximum from the uniform
//! distribution to a group-wise uniform peak `tau`. The peak is built from a
//! per-input [`ClassPartition`] into "similar" and "dissimilar" classes.
//!
//! All values are in nats. `0 ln 0` is taken as `0` everywhere.

use std::collections::BTreeSet;

use thiserror::Error;

/// Tolerance on `sum(p) == 1` accepted by [`ProbVector::new`].
pub const PROB_SUM_TOL: f64 = 1e-9;

/// Floor applied to probabilities before taking logarithms inside gradients.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EntropyError {
    #[error("distribution needs at least 2 entries, got {0}")]
    TooShort(usize),
    #[error("entry {index} is not a probability: {value}")]
    InvalidEntry { index: usize, value: f64 },
    #[error("entries sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("non-finite logit at index {0}")]
    NonFiniteLogit(usize),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("degenerate partition: {similar} similar / {dissimilar} dissimilar classes")]
    DegeneratePartition { similar: usize, dissimilar: usize },
    #[error("class index {index} out of range for {n} classes")]
    ClassOutOfRange { index: usize, n: usize },
    #[error("class index {0} listed twice")]
    DuplicateClass(usize),
    #[error("peak mass tau[{0}] = 1 leaves the upper branch undefined")]
    SaturatedTarget(usize),
    #[error("cannot normalize: all entries are zero")]
    ZeroMass,
    #[error("divergence is infinite: p[{0}] > 0 where q[{0}] = 0")]
    InfiniteDivergence(usize),
}

/// A categorical distribution with at least two outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EntropyError> {
        if values.len() < 2 {
            return Err(EntropyError::TooShort(values.len()));
        }
        for (index, &value) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(EntropyError::InvalidEntry { index, value });
            }
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(EntropyError::NotNormalized(sum));
        }
        Ok(Self(values))
    }

    pub fn uniform(n: usize) -> Result<Self, EntropyError> {
        if n < 2 {
            return Err(EntropyError::TooShort(n));
        }
        Ok(Self(vec![1.0 / n as f64; n]))
    }

    /// Softmax of `logits`, computed with the max-shift.
    pub fn softmax(logits: &LogitVector) -> Self {
        Self(softmax(logits.values()))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Unnormalized class scores; `softmax` of these is a [`ProbVector`].
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EntropyError> {
        if values.len() < 2 {
            return Err(EntropyError::TooShort(values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(EntropyError::NonFiniteLogit(i));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Split of `0..n_total` into a nonempty "similar" and a nonempty
/// "dissimilar" class set.
///
/// `similar` keeps the order it was built with (e.g. descending score);
/// `dissimilar` is ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassPartition {
    n_total: usize,
    similar: Vec<usize>,
    dissimilar: Vec<usize>,
    is_similar: Vec<bool>,
}

impl ClassPartition {
    pub fn new(n_total: usize, similar: Vec<usize>) -> Result<Self, EntropyError> {
        let mut is_similar = vec![false; n_total];
        for &c in &similar {
            if c >= n_total {
                return Err(EntropyError::ClassOutOfRange {
                    index: c,
                    n: n_total,
                });
            }
            if is_similar[c] {
                return Err(EntropyError::DuplicateClass(c));
            }
            is_similar[c] = true;
        }
        let dissimilar: Vec<usize> = (0..n_total).filter(|&c| !is_similar[c]).collect();
        if similar.is_empty() || dissimilar.is_empty() {
            return Err(EntropyError::DegeneratePartition {
                similar: similar.len(),
                dissimilar: dissimilar.len(),
            });
        }
        Ok(Self {
            n_total,
            similar,
            dissimilar,
            is_similar,
        })
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn similar(&self) -> &[usize] {
        &self.similar
    }

    pub fn dissimilar(&self) -> &[usize] {
        &self.dissimilar
    }

    pub fn similar_set(&self) -> BTreeSet<usize> {
        self.similar.iter().copied().collect()
    }

    pub fn is_similar(&self, class: usize) -> bool {
        self.is_similar[class]
    }

    pub fn mask(&self) -> &[bool] {
        &self.is_similar
    }

    pub fn is_balanced(&self) -> bool {
        self.similar.len() == self.dissimilar.len()
    }
}

/// Off-center peak distribution for one partition.
#[derive(Debug, Clone, PartialEq)]
pub struct FocalTarget {
    pub tau: ProbVector,
    pub partition: ClassPartition,
    pub group_mass_similar: f64,
    pub group_mass_dissimilar: f64,
}

impl FocalTarget {
    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    /// Per-class peak value for a class in the similar group.
    pub fn tau_similar(&self) -> f64 {
        self.tau.values()[self.partition.similar[0]]
    }

    pub fn tau_dissimilar(&self) -> f64 {
        self.tau.values()[self.partition.dissimilar[0]]
    }
}

/// Builds the group-wise uniform peak `tau`.
///
/// Similar classes get `N_d / (N_s^2 + N_d N_s)` each and dissimilar classes
/// `N_s / (N_d^2 + N_s N_d)` each, so the similar group carries total mass
/// `N_d / N` and the dissimilar group `N_s / N`.
pub fn compute_tau(partition: &ClassPartition) -> Result<FocalTarget, EntropyError> {
    let n_s = partition.similar.len();
    let n_d = partition.dissimilar.len();
    if n_s == 0 || n_d == 0 {
        return Err(EntropyError::DegeneratePartition {
            similar: n_s,
            dissimilar: n_d,
        });
    }
    let (s, d) = (n_s as f64, n_d as f64);
    let t_s = d / (s * s + d * s);
    let t_d = s / (d * d + s * d);
    let tau = partition
        .is_similar
        .iter()
        .map(|&sim| if sim { t_s } else { t_d })
        .collect();
    let n = s + d;
    Ok(FocalTarget {
        tau: ProbVector(tau),
        partition: partition.clone(),
        group_mass_similar: d / n,
        group_mass_dissimilar: s / n,
    })
}

/// Slope and intercept of the branch of the transform that covers `p_j`.
///
/// At `p_j == tau_j` the lower branch is used.
#[inline]
fn branch(p_j: f64, tau_j: f64, n: f64) -> (f64, f64) {
    if p_j <= tau_j {
        (1.0 / (n * tau_j), 0.0)
    } else {
        let denom = n * (1.0 - tau_j);
        ((n - 1.0) / denom, (1.0 - n * tau_j) / denom)
    }
}

fn check_lengths(left: usize, right: usize) -> Result<(), EntropyError> {
    if left != right {
        return Err(EntropyError::LengthMismatch { left, right });
    }
    Ok(())
}

fn check_unsaturated(target: &FocalTarget) -> Result<(), EntropyError> {
    match target.tau.values().iter().position(|&t| t >= 1.0) {
        Some(j) => Err(EntropyError::SaturatedTarget(j)),
        None => Ok(()),
    }
}

/// Remaps each `p_j` so that `p_j = tau_j` lands on `1/N`, `0` stays `0` and
/// `1` stays `1`. The result is not normalized.
pub fn offcenter_transform(p: &ProbVector, target: &FocalTarget) -> Result<Vec<f64>, EntropyError> {
    check_lengths(p.len(), target.len())?;
    check_unsaturated(target)?;
    let n = p.len() as f64;
    Ok(p.values()
        .iter()
        .zip(target.tau.values())
        .map(|(&pj, &tj)| {
            if pj <= tj {
                pj / (n * tj)
            } else {
                (n * (pj - tj) + 1.0 - pj) / (n * (1.0 - tj))
            }
        })
        .collect())
}

pub fn normalize_pi(pi: &[f64]) -> Result<ProbVector, EntropyError> {
    if pi.len() < 2 {
        return Err(EntropyError::TooShort(pi.len()));
    }
    if let Some((index, &value)) = pi
        .iter()
        .enumerate()
        .find(|(_, v)| !v.is_finite() || **v < 0.0)
    {
        return Err(EntropyError::InvalidEntry { index, value });
    }
    let sum: f64 = pi.iter().sum();
    if sum <= 0.0 {
        return Err(EntropyError::ZeroMass);
    }
    Ok(ProbVector(pi.iter().map(|v| v / sum).collect()))
}

fn xlnx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

pub fn shannon_entropy(p: &ProbVector) -> f64 {
    -p.values().iter().map(|&x| xlnx(x)).sum::<f64>()
}

/// Off-centered entropy: Shannon entropy of the normalized transform.
/// Peaks at `ln N` exactly when `p == tau`.
pub fn focal_entropy(p: &ProbVector, target: &FocalTarget) -> Result<f64, EntropyError> {
    let pi = offcenter_transform(p, target)?;
    Ok(shannon_entropy(&normalize_pi(&pi)?))
}

/// Gradient of `focal_entropy(softmax(logits))` with respect to the logits.
pub fn focal_entropy_grad(logits: &LogitVector, target: &FocalTarget) -> Result<Vec<f64>, EntropyError> {
    check_lengths(logits.len(), target.len())?;
    check_unsaturated(target)?;
    let p = softmax(logits.values());
    let n = p.len() as f64;

    let mut slope = vec![0.0; p.len()];
    let mut pi = vec![0.0; p.len()];
    for (j, (&pj, &tj)) in p.iter().zip(target.tau.values()).enumerate() {
        let (a, b) = branch(pj, tj, n);
        slope[j] = a;
        pi[j] = a * pj + b;
    }
    let total: f64 = pi.iter().sum();
    let log_star: Vec<f64> = pi.iter().map(|&v| (v / total).max(LOG_FLOOR).ln()).collect();
    let eta: f64 = -pi
        .iter()
        .zip(&log_star)
        .map(|(&v, &l)| (v / total) * l)
        .sum::<f64>();

    // d eta / d p_j = -slope_j (ln pi*_j + eta) / sum(pi)
    let dp: Vec<f64> = slope
        .iter()
        .zip(&log_star)
        .map(|(&a, &l)| -a * (l + eta) / total)
        .collect();
    Ok(softmax_backward(&p, &dp))
}

/// Pulls a gradient with respect to probabilities back through softmax.
pub fn softmax_backward(p: &[f64], grad_p: &[f64]) -> Vec<f64> {
    let dot: f64 = p.iter().zip(grad_p).map(|(a, b)| a * b).sum();
    p.iter().zip(grad_p).map(|(&pi, &gi)| pi * (gi - dot)).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn kl_divergence(p: &ProbVector, q: &ProbVector) -> Result<f64, EntropyError> {
    check_lengths(p.len(), q.len())?;
    let mut total = 0.0;
    for (j, (&pj, &qj)) in p.values().iter().zip(q.values()).enumerate() {
        if pj == 0.0 {
            continue;
        }
        if qj == 0.0 {
            return Err(EntropyError::InfiniteDivergence(j));
        }
        total += pj * (pj / qj).ln();
    }
    Ok(total.max(0.0))
}

/// `KL(p || U) = ln N - H(p)`.
pub fn kl_to_uniform(p: &ProbVector) -> f64 {
    ((p.len() as f64).ln() - shannon_entropy(p)).max(0.0)
}

/// KL of a group-restricted, renormalized distribution to the uniform over
/// that group, weighted by nothing. Zero mass contributes 0.
fn within_group_kl(p: &[f64], group: &[usize]) -> (f64, f64) {
    let mass: f64 = group.iter().map(|&j| p[j]).sum();
    if mass <= 0.0 {
        return (0.0, 0.0);
    }
    let h: f64 = -group.iter().map(|&j| xlnx(p[j] / mass)).sum::<f64>();
    (mass, ((group.len() as f64).ln() - h).max(0.0))
}

/// Sum over both groups of `KL(p restricted to group || U_group)`.
///
/// This is the within-group part of `KL(p || tau)`; it drops the term that
/// compares the group masses.
pub fn split_group_kl(p: &ProbVector, partition: &ClassPartition) -> Result<f64, EntropyError> {
    check_lengths(p.len(), partition.n_total)?;
    let (_, s) = within_group_kl(p.values(), &partition.similar);
    let (_, d) = within_group_kl(p.values(), &partition.dissimilar);
    Ok(s + d)
}

/// Chain-rule terms of `KL(p || tau)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlChain {
    /// `KL(m || m_tau)` between the two-point group-mass distributions.
    pub mass_term: f64,
    /// `m_s KL(p|s || U_s)`
    pub within_similar: f64,
    /// `m_d KL(p|d || U_d)`
    pub within_dissimilar: f64,
}

impl KlChain {
    pub fn total(&self) -> f64 {
        self.mass_term + self.within_similar + self.within_dissimilar
    }
}

pub fn kl_chain_decompose(p: &ProbVector, target: &FocalTarget) -> Result<KlChain, EntropyError> {
    check_lengths(p.len(), target.len())?;
    let part = &target.partition;
    let (m_s, kl_s) = within_group_kl(p.values(), &part.similar);
    let (m_d, kl_d) = within_group_kl(p.values(), &part.dissimilar);
    let mass_term = xlnx_ratio(m_s, target.group_mass_similar) + xlnx_ratio(m_d, target.group_mass_dissimilar);
    Ok(KlChain {
        mass_term: mass_term.max(0.0),
        within_similar: m_s * kl_s,
        within_dissimilar: m_d * kl_d,
    })
}

fn xlnx_ratio(x: f64, y: f64) -> f64 {
    if x > 0.0 {
        x * (x / y).ln()
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn target(n: usize, similar: Vec<usize>) -> FocalTarget {
        compute_tau(&ClassPartition::new(n, similar).unwrap()).unwrap()
    }

    #[test]
    fn partition_rejects_degenerate_and_bad_indices() {
        assert!(matches!(
            ClassPartition::new(3, vec![]),
            Err(EntropyError::DegeneratePartition { .. })
        ));
        assert!(matches!(
            ClassPartition::new(3, vec![0, 1, 2]),
            Err(EntropyError::DegeneratePartition { .. })
        ));
        assert_eq!(
            ClassPartition::new(3, vec![3]),
            Err(EntropyError::ClassOutOfRange { index: 3, n: 3 })
        );
        assert_eq!(ClassPartition::new(3, vec![1, 1]), Err(EntropyError::DuplicateClass(1)));
    }

    #[test]
    fn balanced_partition_gives_uniform_tau() {
        let t = target(4, vec![0, 1]);
        assert_eq!(t.tau.values(), &[0.25; 4]);
        assert_eq!(t.group_mass_similar, 0.5);
    }

    #[test]
    fn group_masses_follow_group_sizes() {
        let t = target(10, vec![3, 7, 1]);
        assert!((t.group_mass_similar - 0.7).abs() < 1e-15);
        assert!((t.group_mass_dissimilar - 0.3).abs() < 1e-15);
        assert!((3.0 * t.tau_similar() - t.group_mass_similar).abs() < 1e-15);
        assert!((7.0 * t.tau_dissimilar() - t.group_mass_dissimilar).abs() < 1e-15);
    }

    #[test]
    fn transform_fixed_points() {
        let t = target(5, vec![2]);
        let pi = offcenter_transform(&t.tau, &t).unwrap();
        for v in pi {
            assert!((v - 0.2).abs() < 1e-15);
        }
        let one_hot = ProbVector::new(vec![0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(
            offcenter_transform(&one_hot, &t).unwrap(),
            vec![0.0, 0.0, 0.0, 1.0, 0.0]
        );
    }

    #[test]
    fn transform_rejects_length_mismatch() {
        let t = target(4, vec![0]);
        let p = ProbVector::uniform(3).unwrap();
        assert_eq!(
            offcenter_transform(&p, &t),
            Err(EntropyError::LengthMismatch { left: 3, right: 4 })
        );
    }

    #[test]
    fn transform_rejects_saturated_tau() {
        let part = ClassPartition::new(2, vec![0]).unwrap();
        let t = FocalTarget {
            tau: ProbVector::new(vec![1.0, 0.0]).unwrap(),
            partition: part,
            group_mass_similar: 1.0,
            group_mass_dissimilar: 0.0,
        };
        assert_eq!(
            offcenter_transform(&ProbVector::uniform(2).unwrap(), &t),
            Err(EntropyError::SaturatedTarget(0))
        );
    }

    #[test]
    fn normalize_edge_cases() {
        assert_eq!(normalize_pi(&[1.0; 4]).unwrap().values(), &[0.25; 4]);
        assert_eq!(normalize_pi(&[0.5]), Err(EntropyError::TooShort(1)));
        assert_eq!(normalize_pi(&[0.0, 0.0]), Err(EntropyError::ZeroMass));
    }

    #[test]
    fn focal_entropy_extremes() {
        let t = target(4, vec![1]);
        let peak = focal_entropy(&t.tau, &t).unwrap();
        assert!((peak - 4f64.ln()).abs() < 1e-12);
        let one_hot = ProbVector::new(vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(focal_entropy(&one_hot, &t).unwrap(), 0.0);
    }

    #[test]
    fn gradient_vanishes_at_peak() {
        let t = target(6, vec![1, 4]);
        let logits = LogitVector::new(t.tau.values().iter().map(|v| v.ln()).collect()).unwrap();
        for g in focal_entropy_grad(&logits, &t).unwrap() {
            assert!(g.abs() < 1e-8, "{g}");
        }
    }

    #[test]
    fn kl_errors_on_unsupported_mass() {
        let p = ProbVector::new(vec![0.5, 0.5]).unwrap();
        let q = ProbVector::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(kl_divergence(&p, &q), Err(EntropyError::InfiniteDivergence(1)));
        // The reverse direction is finite.
        assert!((kl_divergence(&q, &p).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn kl_to_uniform_examples() {
        assert_eq!(kl_to_uniform(&ProbVector::uniform(4).unwrap()), 0.0);
        let one_hot = ProbVector::new(vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!((kl_to_uniform(&one_hot) - 4f64.ln()).abs() < 1e-15);
        let p = ProbVector::new(vec![0.5, 0.25, 0.125, 0.125]).unwrap();
        assert!((kl_to_uniform(&p) - 0.17328679513998635).abs() < 1e-12);
    }

    #[test]
    fn split_group_kl_examples() {
        let part = ClassPartition::new(4, vec![0, 1]).unwrap();
        let p = ProbVector::new(vec![0.7, 0.1, 0.1, 0.1]).unwrap();
        assert!((split_group_kl(&p, &part).unwrap() - 0.31637701930350853).abs() < 1e-12);
        assert_eq!(split_group_kl(&ProbVector::uniform(4).unwrap(), &part).unwrap(), 0.0);
        let t = target(7, vec![2, 5]);
        assert!(split_group_kl(&t.tau, &t.partition).unwrap() < 1e-15);
    }

    #[test]
    fn split_group_kl_zero_mass_group() {
        let part = ClassPartition::new(4, vec![0, 1]).unwrap();
        let p = ProbVector::new(vec![0.0, 0.0, 0.25, 0.75]).unwrap();
        let want = 2f64.ln() + 0.25 * 0.25f64.ln() + 0.75 * 0.75f64.ln();
        assert!((split_group_kl(&p, &part).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn chain_decomposition_examples() {
        let t = target(4, vec![0]);
        let c = kl_chain_decompose(&t.tau, &t).unwrap();
        assert!(c.total().abs() < 1e-15);

        let c = kl_chain_decompose(&ProbVector::uniform(4).unwrap(), &t).unwrap();
        assert!((c.mass_term - 0.5493061443340549).abs() < 1e-12);
        assert_eq!(c.within_similar, 0.0);
        assert!(c.within_dissimilar.abs() < 1e-15);
    }
}

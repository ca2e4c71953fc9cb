//! Randomized math suites shared by the unit-level tests and the acceptance
//! target. Each returns one `Check` per property with the worst error seen.

#![allow(dead_code)]

use focal_core::entropy::{
    compute_tau, focal_entropy, focal_entropy_grad, kl_chain_decompose, kl_divergence, shannon_entropy, softmax,
};
use focal_core::nn::{entropy_to_uniform_loss, focal_sanitize_loss, softmax_cross_entropy, FocalMode};
use focal_core::{ClassPartition, FocalTarget, LogitVector, Matrix, ProbVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

pub fn random_logits<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn random_p<R: Rng>(rng: &mut R, n: usize) -> ProbVector {
    let scale = rng.random_range(0.1..6.0);
    ProbVector::softmax(&LogitVector::new(random_logits(rng, n, scale)).unwrap())
}

pub fn random_partition<R: Rng>(rng: &mut R, n: usize) -> ClassPartition {
    let k = rng.random_range(1..n);
    ClassPartition::new(n, sample(rng, n, k).into_vec()).unwrap()
}

pub fn random_target<R: Rng>(rng: &mut R, n: usize) -> FocalTarget {
    compute_tau(&random_partition(rng, n)).unwrap()
}

/// Peak, one-hot, balanced reduction and KL chain properties.
pub fn entropy_suite(seed: u64, draws: usize) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let mut worst = 0.0f64;
    for _ in 0..draws {
        let n = rng.random_range(2..=100);
        let t = random_target(&mut rng, n);
        let eta = focal_entropy(&t.tau, &t).unwrap();
        worst = worst.max((eta - (n as f64).ln()).abs());
    }
    out.push(Check::new("eta(tau) = ln N", worst <= 1e-9, format!("max |err| {worst:.3e} (tol 1e-9)")));

    let mut worst = 0.0f64;
    for _ in 0..draws {
        let n = rng.random_range(2..=100);
        let t = random_target(&mut rng, n);
        let mut v = vec![0.0; n];
        v[rng.random_range(0..n)] = 1.0;
        let eta = focal_entropy(&ProbVector::new(v).unwrap(), &t).unwrap();
        worst = worst.max(eta.abs());
    }
    out.push(Check::new("eta(one-hot) = 0", worst == 0.0, format!("max |eta| {worst:.3e}")));

    let mut worst = 0.0f64;
    for _ in 0..draws {
        let n = 2 * rng.random_range(1..=50);
        let part = ClassPartition::new(n, sample(&mut rng, n, n / 2).into_vec()).unwrap();
        let t = compute_tau(&part).unwrap();
        let p = random_p(&mut rng, n);
        worst = worst.max((focal_entropy(&p, &t).unwrap() - shannon_entropy(&p)).abs());
    }
    out.push(Check::new(
        "balanced partition reduces to Shannon",
        worst <= 1e-12,
        format!("{draws} draws, max |err| {worst:.3e} (tol 1e-12)"),
    ));

    let mut worst = 0.0f64;
    for _ in 0..draws {
        let n = rng.random_range(2..=100);
        let t = random_target(&mut rng, n);
        let p = random_p(&mut rng, n);
        let chain = kl_chain_decompose(&p, &t).unwrap();
        worst = worst.max((chain.total() - kl_divergence(&p, &t.tau).unwrap()).abs());
    }
    out.push(Check::new(
        "KL chain decomposition",
        worst <= 1e-9,
        format!("{draws} draws, max |err| {worst:.3e} (tol 1e-9)"),
    ));
    out
}

/// `||a - n|| / max(||a||, ||n||)`, with a floor for vanishing gradients.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(analytic).max(norm(numeric)).max(1e-8)
}

/// Central differences of `f` at every entry of `x`.
pub fn numeric_gradient(x: &Matrix, h: f64, f: impl Fn(&Matrix) -> f64) -> Vec<f64> {
    let mut g = Vec::with_capacity(x.len());
    let mut xp = x.clone();
    for idx in 0..x.len() {
        let (r, c) = (idx / x.ncols(), idx % x.ncols());
        let v = x[[r, c]];
        xp[[r, c]] = v + h;
        let fp = f(&xp);
        xp[[r, c]] = v - h;
        let fm = f(&xp);
        xp[[r, c]] = v;
        g.push((fp - fm) / (2.0 * h));
    }
    g
}

const H: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-4;

fn random_batch(rng: &mut ChaCha8Rng) -> Matrix {
    let rows = rng.random_range(1..=4);
    let n = rng.random_range(2..=20);
    let scale = rng.random_range(0.5..4.0);
    Matrix::from_shape_fn((rows, n), |_| rng.random_range(-scale..scale))
}

fn grad_check(name: &str, instances: usize, mut one: impl FnMut() -> f64) -> Check {
    let worst = (0..instances).map(|_| one()).fold(0.0f64, f64::max);
    Check::new(
        name,
        worst < GRAD_TOL,
        format!("{instances} instances, max rel err {worst:.3e} (tol 1e-4)"),
    )
}

/// Finite-difference checks of the four training losses and of the focal
/// entropy gradient.
pub fn gradient_suite(seed: u64, instances: usize) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    out.push(grad_check("cross-entropy", instances, || {
        let x = random_batch(&mut rng);
        let labels: Vec<usize> = (0..x.nrows()).map(|_| rng.random_range(0..x.ncols())).collect();
        let (_, g) = softmax_cross_entropy(&x, &labels).unwrap();
        let num = numeric_gradient(&x, H, |m| softmax_cross_entropy(m, &labels).unwrap().0);
        relative_error(g.as_slice().unwrap(), &num)
    }));

    out.push(grad_check("KL to uniform", instances, || {
        let x = random_batch(&mut rng);
        let (_, g) = entropy_to_uniform_loss(&x);
        let num = numeric_gradient(&x, H, |m| entropy_to_uniform_loss(m).0);
        relative_error(g.as_slice().unwrap(), &num)
    }));

    for (name, mode) in [("focal KL to tau", FocalMode::KlTau), ("split-group KL", FocalMode::Split)] {
        out.push(grad_check(name, instances, || {
            let x = random_batch(&mut rng);
            let targets: Vec<FocalTarget> = (0..x.nrows()).map(|_| random_target(&mut rng, x.ncols())).collect();
            let refs: Vec<&FocalTarget> = targets.iter().collect();
            let (_, g) = focal_sanitize_loss(&x, &refs, mode).unwrap();
            let num = numeric_gradient(&x, H, |m| focal_sanitize_loss(m, &refs, mode).unwrap().0);
            relative_error(g.as_slice().unwrap(), &num)
        }));
    }

    // Focal entropy is piecewise linear in p before normalization. Draws
    // within 1e-6 of a kink are skipped, and the step keeps every probe
    // point on the same branch (|dp| <= h/4).
    let mut kept = 0;
    let mut skipped = 0;
    let mut worst = 0.0f64;
    while kept < instances * 5 {
        let n = rng.random_range(2..=20);
        let t = random_target(&mut rng, n);
        let scale = rng.random_range(0.5..4.0);
        let logits = random_logits(&mut rng, n, scale);
        let p = softmax(&logits);
        if p.iter().zip(t.tau.values()).any(|(a, b)| (a - b).abs() < 1e-6) {
            skipped += 1;
            continue;
        }
        kept += 1;
        let g = focal_entropy_grad(&LogitVector::new(logits.clone()).unwrap(), &t).unwrap();
        let x = Matrix::from_shape_vec((1, n), logits).unwrap();
        let num = numeric_gradient(&x, 1e-6, |m| {
            let p = ProbVector::softmax(&LogitVector::new(m.row(0).to_vec()).unwrap());
            focal_entropy(&p, &t).unwrap()
        });
        worst = worst.max(relative_error(&g, &num));
    }
    out.push(Check::new(
        "focal entropy gradient",
        worst < GRAD_TOL,
        format!("{kept} draws ({skipped} near a kink skipped), max rel err {worst:.3e} (tol 1e-4)"),
    ));
    out
}

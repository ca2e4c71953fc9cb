//! Exact-arithmetic reference evaluation of the focal-entropy pipeline.
//!
//! Everything up to the final logarithms is computed with big rationals, so
//! the only rounding happens in `ln`. None of this touches the library code.

#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

pub type Q = BigRational;

pub fn q(n: i64, d: i64) -> Q {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn ln(x: &Q) -> f64 {
    // Split numerator and denominator so huge values do not overflow f64.
    let n = x.numer().to_f64().unwrap();
    let d = x.denom().to_f64().unwrap();
    n.ln() - d.ln()
}

/// Peak distribution from the similar-group mask.
pub fn tau(similar: &[bool]) -> Vec<Q> {
    let n_s = similar.iter().filter(|&&s| s).count() as i64;
    let n_d = similar.len() as i64 - n_s;
    let t_s = q(n_d, n_s * n_s + n_d * n_s);
    let t_d = q(n_s, n_d * n_d + n_s * n_d);
    similar
        .iter()
        .map(|&s| if s { t_s.clone() } else { t_d.clone() })
        .collect()
}

pub fn pi(p: &[Q], tau: &[Q]) -> Vec<Q> {
    let n = Q::from_integer(BigInt::from(p.len()));
    p.iter()
        .zip(tau)
        .map(|(pj, tj)| {
            if pj <= tj {
                pj / (&n * tj)
            } else {
                (&n * (pj - tj) + Q::one() - pj) / (&n * (Q::one() - tj))
            }
        })
        .collect()
}

pub fn normalize(v: &[Q]) -> Vec<Q> {
    let s: Q = v.iter().fold(Q::zero(), |a, b| a + b);
    v.iter().map(|x| x / &s).collect()
}

pub fn shannon(p: &[Q]) -> f64 {
    p.iter()
        .filter(|x| !x.is_zero())
        .map(|x| -x.to_f64().unwrap() * ln(x))
        .sum()
}

pub fn focal_entropy(p: &[Q], similar: &[bool]) -> f64 {
    shannon(&normalize(&pi(p, &tau(similar))))
}

pub fn kl(p: &[Q], q_: &[Q]) -> f64 {
    p.iter()
        .zip(q_)
        .filter(|(a, _)| !a.is_zero())
        .map(|(a, b)| a.to_f64().unwrap() * ln(&(a / b)))
        .sum()
}

pub fn to_f64(v: &[Q]) -> Vec<f64> {
    v.iter().map(|x| x.to_f64().unwrap()).collect()
}

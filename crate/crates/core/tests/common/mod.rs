#![allow(dead_code)]

use std::collections::BTreeMap;

use evmono::models::{get_model, get_model_with, ModelEntry, MODEL_NAMES};
use evmono::Matrix;
use rand::Rng;

/// Illustrative parameters for the gut model, which ships without defaults.
pub fn gut_params() -> BTreeMap<String, f64> {
    [
        ("k21", 0.08),
        ("kmin", 0.01),
        ("kmax", 0.05),
        ("kabs", 0.19),
        ("alpha", 13.9),
        ("beta", 250.0),
        ("b", 0.82),
        ("c", 0.01),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

pub fn model(name: &str) -> ModelEntry {
    if name == "gut_kinetics" {
        get_model_with(name, &gut_params()).unwrap()
    } else {
        get_model(name).unwrap()
    }
}

pub fn all_models() -> Vec<ModelEntry> {
    MODEL_NAMES.iter().map(|n| model(n)).collect()
}

pub fn uniform_in(rng: &mut impl Rng, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    lo.iter().zip(hi).map(|(a, b)| rng.gen_range(*a..=*b)).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub fn to_nalgebra(a: &Matrix) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_fn(a.rows(), a.cols(), |i, j| a[(i, j)])
}

/// `Q diag(d) Q⁻¹` with a random well-conditioned `Q`; `d` sorted so the
/// first entry is the dominant one.
pub fn with_spectrum(rng: &mut impl Rng, d: &[f64]) -> Matrix {
    let n = d.len();
    loop {
        let q = Matrix::from_fn(n, n, |i, j| if i == j { 2.0 } else { 0.0 } + rng.gen_range(-1.0..1.0));
        if let Ok(qi) = q.inverse() {
            if q.condition_1() < 50.0 {
                return q.matmul(&Matrix::diagonal(d)).matmul(&qi);
            }
        }
    }
}

/// Random matrix with real, simple, strictly dominant and negative `λ₁`.
pub fn random_dominant_stable(rng: &mut impl Rng, n: usize) -> Matrix {
    let l1 = -rng.gen_range(0.2..1.0);
    let mut d = vec![l1];
    for _ in 1..n {
        d.push(l1 - rng.gen_range(0.5..3.0));
    }
    with_spectrum(rng, &d)
}

//! Deterministic sample sets: Halton points in boxes and seeded directions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::scalar::Real;

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Radical inverse of `i` in base `b`.
pub fn radical_inverse(mut i: u64, b: u64) -> f64 {
    let inv = 1.0 / b as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % b) as f64;
        i /= b;
        f *= inv;
    }
    r
}

/// Axis-aligned box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Window {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        Window { lo, hi }
    }

    /// Box of half-width `r` around `c`.
    pub fn around(c: &[f64], r: f64) -> Self {
        Window { lo: c.iter().map(|x| x - r).collect(), hi: c.iter().map(|x| x + r).collect() }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.lo).zip(&self.hi).all(|((x, l), h)| *x >= *l && *x <= *h)
    }

    /// Degenerate axes (zero or negative width, or non-finite bounds).
    pub fn is_degenerate(&self) -> bool {
        self.lo
            .iter()
            .zip(&self.hi)
            .any(|(l, h)| !l.is_finite() || !h.is_finite() || h <= l)
    }

    /// `count` Halton points, skipping the origin of the sequence.
    pub fn halton<T: Real>(&self, count: usize) -> Vec<Vec<T>> {
        let d = self.dim();
        assert!(d <= PRIMES.len(), "Halton sampling supports up to {} dimensions", PRIMES.len());
        (1..=count as u64)
            .map(|i| {
                (0..d)
                    .map(|k| {
                        let u = radical_inverse(i, PRIMES[k]);
                        T::lit(self.lo[k] + u * (self.hi[k] - self.lo[k]))
                    })
                    .collect()
            })
            .collect()
    }
}

/// Seeded uniformly distributed unit vectors in `dim` dimensions.
pub fn unit_directions<T: Real>(dim: usize, count: usize, seed: u64) -> Vec<Vec<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let g: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            out.push(g.iter().map(|x| T::lit(x / n)).collect());
        }
    }
    out
}

/// `count` log-spaced times from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo && count >= 1);
    if count == 1 {
        return vec![hi];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| {
            if k + 1 == count {
                hi
            } else {
                (a + (b - a) * k as f64 / (count - 1) as f64).exp()
            }
        })
        .collect()
}

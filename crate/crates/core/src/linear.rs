//! Eventual positivity of linear systems `ẋ = Ax`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{LinalgError, Matrix};
use crate::sampling::{log_grid, unit_directions};
use crate::scalar::{FieldScalar, Real};
use crate::spectral::{
    check_dominance, decompose, matrix_exp, DominanceReport, SpectralDecomposition, SpectralError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvPosError {
    #[error("matrix is not diagonalizable within tolerance")]
    NotDiagonalizable,
    #[error("dominant eigenvalue must be real, simple and strictly dominant")]
    NotDominant,
    #[error("largest entry of w1 is too small to pivot on")]
    PivotTooSmall,
    #[error("fast block is singular")]
    SingularFastBlock,
    #[error("invalid index sets: {0}")]
    Indices(String),
    #[error("invalid cone parameters: {0}")]
    BadCone(String),
    #[error("t_max must be positive and finite")]
    BadHorizon,
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvPosVerdict {
    EventuallyPositive,
    StronglyEventuallyPositive,
    NotEventuallyPositive,
    Inconclusive,
}

/// An entry of `e^{At}` that is not positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntryWitness {
    pub row: usize,
    pub col: usize,
    pub t: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvPosReport {
    pub verdict: EvPosVerdict,
    pub tau0_estimate: Option<f64>,
    pub witness: Option<EntryWitness>,
    pub reason: String,
    pub dominance: DominanceReport,
    pub t_max: f64,
    pub n_samples: usize,
}

pub const DEFAULT_SAMPLES: usize = 400;

struct Scan {
    tau0: Option<f64>,
    last_failure: Option<EntryWitness>,
}

/// Scans `e^{(A-λ₁I)t}` on a log grid. The shift keeps entries O(1) without
/// changing their signs.
fn scan_positivity<T: Real>(a: &Matrix<T>, lambda1: T, t_max: f64, n: usize) -> Result<Scan, SpectralError> {
    let shifted = a.sub(&Matrix::identity(a.rows()).scale(lambda1));
    let times = log_grid(t_max * 1e-6, t_max, n);
    let failures: Vec<Option<EntryWitness>> = times
        .par_iter()
        .map(|&t| -> Result<Option<EntryWitness>, SpectralError> {
            let e = matrix_exp(&shifted, T::lit(t))?;
            let mut worst: Option<EntryWitness> = None;
            for i in 0..e.rows() {
                for j in 0..e.cols() {
                    let v = e[(i, j)].as_f64();
                    if v <= 0.0 && worst.as_ref().map_or(true, |w| v < w.value) {
                        worst = Some(EntryWitness { row: i, col: j, t, value: v });
                    }
                }
            }
            Ok(worst)
        })
        .collect::<Result<_, _>>()?;
    let last_bad = failures.iter().rposition(Option::is_some);
    let tau0 = match last_bad {
        None => Some(0.0),
        Some(k) if k + 1 < times.len() => Some(times[k + 1]),
        Some(_) => None,
    };
    Ok(Scan { tau0, last_failure: last_bad.and_then(|k| failures[k].clone()) })
}

fn mixed_signs<T: Real>(x: &[T], tol: T) -> bool {
    let scale = x.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    x.iter().any(|v| *v > tol * scale) && x.iter().any(|v| *v < -tol * scale)
}

fn strictly_positive<T: Real>(x: &[T], tol: T) -> bool {
    let scale = x.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    x.iter().all(|v| *v > tol * scale)
}

/// Verdict on eventual positivity of `ẋ = Ax`.
///
/// `t_max` defaults to `50/|λ₁|`; `n_samples` log-spaced times on
/// `(0, t_max]` are scanned.
pub fn check_eventual_positivity<T: Real>(
    a: &Matrix<T>,
    t_max: Option<f64>,
    n_samples: usize,
) -> Result<EvPosReport, EvPosError> {
    let dec = decompose(a)?;
    if !dec.diagonalizable {
        return Err(EvPosError::NotDiagonalizable);
    }
    let tol = dec.default_tol();
    let dominance = check_dominance(&dec, tol);
    let l1 = dec.eigenvalues[0];
    let t_max = match t_max {
        Some(t) if t > 0.0 && t.is_finite() => t,
        Some(_) => return Err(EvPosError::BadHorizon),
        None => 50.0 / l1.re.as_f64().abs().max(1e-3),
    };
    let n_samples = n_samples.max(2);
    let report = |verdict, tau0_estimate, witness, reason: &str| EvPosReport {
        verdict,
        tau0_estimate,
        witness,
        reason: reason.to_string(),
        dominance: dominance.clone(),
        t_max,
        n_samples,
    };
    if !dominance.lambda1_real {
        return Ok(report(EvPosVerdict::NotEventuallyPositive, None, None, "dominant eigenvalue is complex"));
    }
    let tie = dec.eigenvalues[1..]
        .iter()
        .any(|z| z.im.abs() >= tol && (z.re - l1.re).abs() <= tol);
    if tie {
        let scan = scan_positivity(a, l1.re, t_max, n_samples)?;
        return Ok(report(
            EvPosVerdict::NotEventuallyPositive,
            None,
            scan.last_failure,
            "a complex eigenvalue shares the dominant real part",
        ));
    }
    let v1 = dec.v_re(0);
    let w1 = dec.w_re(0);
    let sign_tol = T::lit(1e-9);
    if dominance.lambda1_simple && (mixed_signs(&v1, sign_tol) || mixed_signs(&w1, sign_tol)) {
        let scan = scan_positivity(a, l1.re, t_max, n_samples)?;
        return Ok(report(
            EvPosVerdict::NotEventuallyPositive,
            None,
            scan.last_failure,
            "dominant eigenvectors cannot be chosen nonnegative",
        ));
    }
    let strong = dominance.strictly_dominant
        && strictly_positive(&v1, sign_tol)
        && strictly_positive(&w1, sign_tol);
    if strong {
        // The spectral conditions guarantee a finite threshold; widen the
        // window until the scan sees the positive tail.
        let mut horizon = t_max;
        for _ in 0..8 {
            let scan = scan_positivity(a, l1.re, horizon, n_samples)?;
            if let Some(tau0) = scan.tau0 {
                let mut r = report(
                    EvPosVerdict::StronglyEventuallyPositive,
                    Some(tau0),
                    scan.last_failure,
                    "dominant eigenvalue simple, real and strictly dominant with positive eigenvectors",
                );
                r.t_max = horizon;
                return Ok(r);
            }
            horizon *= 4.0;
        }
        return Ok(report(
            EvPosVerdict::Inconclusive,
            None,
            None,
            "spectral conditions hold but no positive tail was observed",
        ));
    }
    if a.is_metzler() {
        return Ok(report(
            EvPosVerdict::EventuallyPositive,
            Some(0.0),
            None,
            "Metzler matrix generates a positive semigroup",
        ));
    }
    let scan = scan_positivity(a, l1.re, t_max, n_samples)?;
    Ok(report(
        EvPosVerdict::Inconclusive,
        scan.tau0.filter(|_| scan.last_failure.is_none()),
        scan.last_failure,
        "necessary spectral conditions hold only weakly",
    ))
}

/// `A_ss - A_sf A_ff⁻¹ A_fs`, computed by Gaussian elimination in the
/// scalar's own arithmetic (exact for rationals).
pub fn schur_reduce<F: FieldScalar>(
    a: &Matrix<F>,
    slow: &[usize],
    fast: &[usize],
) -> Result<Matrix<F>, EvPosError> {
    let n = a.rows();
    if !a.is_square() {
        return Err(EvPosError::Indices("matrix is not square".into()));
    }
    let mut seen = vec![false; n];
    for &i in slow.iter().chain(fast) {
        if i >= n {
            return Err(EvPosError::Indices(format!("index {i} out of range for {n}x{n}")));
        }
        if seen[i] {
            return Err(EvPosError::Indices(format!("index {i} listed twice")));
        }
        seen[i] = true;
    }
    if fast.is_empty() {
        return Ok(a.select(slow, slow));
    }
    let aff = a.select(fast, fast);
    let afs = a.select(fast, slow);
    let x = solve_exact(&aff, &afs).ok_or(EvPosError::SingularFastBlock)?;
    let asf = a.select(slow, fast);
    Ok(a.select(slow, slow).sub(&asf.matmul(&x)))
}

/// Solves `M X = B` with partial pivoting; `None` if `M` is singular.
fn solve_exact<F: FieldScalar>(m: &Matrix<F>, b: &Matrix<F>) -> Option<Matrix<F>> {
    let n = m.rows();
    let k = b.cols();
    let mut aug = Matrix::from_fn(n, n + k, |i, j| if j < n { m[(i, j)].clone() } else { b[(i, j - n)].clone() });
    let scale = m.as_slice().iter().fold(F::zero(), |s, v| if v.abs() > s { v.abs() } else { s });
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| aug[(i, c)].abs().partial_cmp(&aug[(j, c)].abs()).unwrap())?;
        if aug[(p, c)].negligible(&scale) {
            return None;
        }
        if p != c {
            for j in 0..n + k {
                let t = aug[(p, j)].clone();
                aug[(p, j)] = aug[(c, j)].clone();
                aug[(c, j)] = t;
            }
        }
        let piv = aug[(c, c)].clone();
        for j in c..n + k {
            aug[(c, j)] = aug[(c, j)].clone() / piv.clone();
        }
        for i in 0..n {
            if i == c || aug[(i, c)].is_zero() {
                continue;
            }
            let f = aug[(i, c)].clone();
            for j in c..n + k {
                let v = aug[(i, j)].clone() - f.clone() * aug[(c, j)].clone();
                aug[(i, j)] = v;
            }
        }
    }
    Some(Matrix::from_fn(n, k, |i, j| aug[(i, n + j)].clone()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    Inside,
    Boundary,
    Outside,
}

/// `K_α = {y : (Σ_{i≥2} α_i |w_iᵀy|²)^{1/2} ≤ w₁ᵀy}` in realified form:
/// row 0 of `w` is `w₁ᵀ`, the remaining rows carry the weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LorentzConeSpec<T> {
    pub w: Matrix<T>,
    pub alpha: Vec<T>,
    pub condition: T,
}

pub const BOUNDARY_BAND: f64 = 1e-10;

impl<T: Real> LorentzConeSpec<T> {
    /// Builds the cone from a decomposition with a real simple `λ₁`.
    /// Complex pairs `(i, i+1)` contribute rows `√(α_i+α_{i+1})·Re w_i`
    /// and `√(α_i+α_{i+1})·Im w_i`.
    pub fn from_decomposition(dec: &SpectralDecomposition<T>, alpha: &[T]) -> Result<Self, EvPosError> {
        let n = dec.n();
        if alpha.len() + 1 != n {
            return Err(EvPosError::BadCone(format!("need {} weights, got {}", n - 1, alpha.len())));
        }
        if alpha.iter().any(|a| !(*a > T::zero()) || !a.is_finite()) {
            return Err(EvPosError::BadCone("weights must be positive and finite".into()));
        }
        let tol = dec.default_tol();
        let dom = check_dominance(dec, tol);
        if !dom.lambda1_real || !dom.lambda1_simple || !dec.diagonalizable {
            return Err(EvPosError::NotDominant);
        }
        let mut rows = vec![dec.w_re(0)];
        let mut i = 1;
        while i < n {
            let z = dec.eigenvalues[i];
            if z.im != T::zero() && i + 1 < n && dec.eigenvalues[i + 1] == z.conj() {
                let s = (alpha[i - 1] + alpha[i]).sqrt();
                let w = dec.w(i);
                rows.push(w.iter().map(|c| s * c.re).collect());
                rows.push(w.iter().map(|c| s * c.im).collect());
                i += 2;
            } else {
                let s = alpha[i - 1].sqrt();
                rows.push(dec.w_re(i).iter().map(|c| s * *c).collect());
                i += 1;
            }
        }
        let w = Matrix::from_rows(rows)?;
        let condition = w.condition_1();
        Ok(LorentzConeSpec { w, alpha: alpha.to_vec(), condition })
    }

    /// `(w₁ᵀy, ‖rest‖₂)`.
    pub fn coordinates(&self, y: &[T]) -> (T, T) {
        let z = self.w.mul_vec(y);
        let rest = z[1..].iter().map(|v| *v * *v).sum::<T>().sqrt();
        (z[0], rest)
    }

    pub fn membership(&self, y: &[T]) -> Membership {
        let (head, rest) = self.coordinates(y);
        let band = T::lit(BOUNDARY_BAND) * head.abs().max(rest).max(T::min_positive_value());
        if (head - rest).abs() <= band {
            Membership::Boundary
        } else if head > rest {
            Membership::Inside
        } else {
            Membership::Outside
        }
    }

    /// `cᵀy ≥ 0` for every `y` in the cone, via `z = W⁻ᵀc` in the dual
    /// Lorentz cone (self-dual in these coordinates).
    pub fn dual_coordinates(&self, c: &[T]) -> Result<(T, T), EvPosError> {
        let z = self.w.transpose().solve(c)?;
        let rest = z[1..].iter().map(|v| *v * *v).sum::<T>().sqrt();
        Ok((z[0], rest))
    }
}

/// Weights for `K_β ⊂ int(ℝⁿ₊) ∪ {0}` and `ℝⁿ₊ ⊂ int(K_γ) ∪ {0}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct AlphaCertificates<T> {
    pub beta: Vec<T>,
    pub gamma: Vec<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case", bound = "T: Real")]
pub enum AlphaSearch<T> {
    Feasible(AlphaCertificates<T>),
    Infeasible { reason: String },
}

pub const ALPHA_BOUNDS: (f64, f64) = (1e-6, 1e6);
pub const SHELL_SAMPLES: usize = 20_000;
pub const SHELL_MARGIN: f64 = 1e-9;
const SHELL_SEED: u64 = 0x5eed_c0de;

fn gamma_ok<T: Real>(dec: &SpectralDecomposition<T>, gamma: &[T]) -> Result<bool, EvPosError> {
    let cone = LorentzConeSpec::from_decomposition(dec, gamma)?;
    let n = dec.n();
    Ok((0..n).all(|j| {
        let mut e = vec![T::zero(); n];
        e[j] = T::one();
        let (head, rest) = cone.coordinates(&e);
        head - rest > T::lit(SHELL_MARGIN) * head.abs().max(T::one())
    }))
}

fn beta_ok<T: Real>(dec: &SpectralDecomposition<T>, beta: &[T], shell: &[Vec<T>]) -> Result<bool, EvPosError> {
    let cone = LorentzConeSpec::from_decomposition(dec, beta)?;
    let winv = cone.w.inverse()?;
    Ok(shell.par_iter().all(|u| {
        let mut z = Vec::with_capacity(u.len() + 1);
        z.push(T::one());
        z.extend_from_slice(u);
        let y = winv.mul_vec(&z);
        let scale = y.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        y.iter().all(|v| *v > T::lit(SHELL_MARGIN) * scale)
    }))
}

/// Geometric search for `β` and `γ`: uniform values first (factor 2,
/// bounded), then per-component refinement.
pub fn find_alpha_certificates<T: Real>(dec: &SpectralDecomposition<T>) -> Result<AlphaSearch<T>, EvPosError> {
    let n = dec.n();
    let dom = check_dominance(dec, dec.default_tol());
    if !(dom.lambda1_real && dom.lambda1_simple && dom.strictly_dominant) || !dec.diagonalizable {
        return Err(EvPosError::NotDominant);
    }
    let (lo, hi) = (T::lit(ALPHA_BOUNDS.0), T::lit(ALPHA_BOUNDS.1));
    let two = T::lit(2.0);
    let m = n - 1;

    let mut gamma = vec![T::one(); m];
    while !gamma_ok(dec, &gamma)? {
        if gamma[0] / two < lo {
            return Ok(AlphaSearch::Infeasible {
                reason: "no γ puts the orthant inside K_γ (w1 is not positive)".into(),
            });
        }
        gamma.iter_mut().for_each(|g| *g = *g / two);
    }
    for i in 0..m {
        loop {
            let mut trial = gamma.clone();
            trial[i] = trial[i] * two;
            if trial[i] > hi || !gamma_ok(dec, &trial)? {
                break;
            }
            gamma = trial;
        }
    }

    let shell: Vec<Vec<T>> = if m == 1 {
        vec![vec![T::one()], vec![-T::one()]]
    } else {
        unit_directions(m, SHELL_SAMPLES, SHELL_SEED)
    };
    let mut beta = vec![T::one(); m];
    while !beta_ok(dec, &beta, &shell)? {
        if beta[0] * two > hi {
            return Ok(AlphaSearch::Infeasible {
                reason: "no β puts K_β inside the open orthant (v1 is not positive)".into(),
            });
        }
        beta.iter_mut().for_each(|b| *b = *b * two);
    }
    for i in 0..m {
        loop {
            let mut trial = beta.clone();
            trial[i] = trial[i] / two;
            if trial[i] < lo || !beta_ok(dec, &trial, &shell)? {
                break;
            }
            beta = trial;
        }
    }
    Ok(AlphaSearch::Feasible(AlphaCertificates { beta, gamma }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Construction {
    /// The explicit rank-one-update formula, after moving the largest
    /// entry of `w₁` to the front.
    Explicit,
    /// `S = v 1ᵀ/n + (I - v wᵀ)(I - 1 1ᵀ/n)`, used when the explicit
    /// formula is singular or badly conditioned.
    Projector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Positivizer<T> {
    pub s: Matrix<T>,
    pub construction: Construction,
    pub condition: T,
}

pub const POSITIVIZE_MAX_COND: f64 = 1e12;

/// Invertible `S` with `S·1 = v₁` and `w₁ᵀS = 1ᵀ/n`.
pub fn similarity_positivize<T: Real>(dec: &SpectralDecomposition<T>) -> Result<Positivizer<T>, EvPosError> {
    let n = dec.n();
    let tol = dec.default_tol();
    let dom = check_dominance(dec, tol);
    if !(dom.lambda1_real && dom.lambda1_simple && dom.strictly_dominant) || !dec.diagonalizable {
        return Err(EvPosError::NotDominant);
    }
    let v = dec.v_re(0);
    let w = dec.w_re(0);
    let p = (0..n).max_by(|&i, &j| w[i].abs().partial_cmp(&w[j].abs()).unwrap()).unwrap();
    let wscale = w.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    if !(w[p].abs() > T::lit(1e-12) * wscale.max(T::min_positive_value())) {
        return Err(EvPosError::PivotTooSmall);
    }
    let nf = T::lit(n as f64);
    let one_n = T::one() / nf;

    // Explicit construction on the permuted vectors, then S = P S'.
    let mut perm: Vec<usize> = (0..n).collect();
    perm.swap(0, p);
    let vp: Vec<T> = perm.iter().map(|&i| v[i]).collect();
    let wp: Vec<T> = perm.iter().map(|&i| w[i]).collect();
    let w0 = wp[0];
    let wsum: T = wp.iter().copied().sum();
    let sp = Matrix::from_fn(n, n, |i, j| {
        let mut s = if i == j { one_n } else { T::zero() };
        if j == 0 {
            s += vp[i] - one_n;
        }
        if i == 0 {
            s += (T::one() - wp[j]) / (w0 * nf);
        }
        if i == 0 && j == 0 {
            s += -T::one() / w0 + wsum / (w0 * nf);
        }
        s
    });
    let explicit = Matrix::from_fn(n, n, |i, j| sp[(perm[i], j)]);
    let cond = explicit.condition_1();
    if cond.is_finite() && cond.as_f64() < POSITIVIZE_MAX_COND {
        return Ok(Positivizer { s: explicit, construction: Construction::Explicit, condition: cond });
    }

    let projector = Matrix::from_fn(n, n, |i, j| {
        let delta = |a: usize, b: usize| if a == b { T::one() } else { T::zero() };
        let mut s = v[i] * one_n;
        for k in 0..n {
            s += (delta(i, k) - v[i] * w[k]) * (delta(k, j) - one_n);
        }
        s
    });
    let cond = projector.condition_1();
    if cond.is_finite() && cond.as_f64() < POSITIVIZE_MAX_COND {
        return Ok(Positivizer { s: projector, construction: Construction::Projector, condition: cond });
    }
    Err(EvPosError::Linalg(LinalgError::Singular))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    fn rat(rows: &[&[i64]]) -> Matrix<BigRational> {
        Matrix::from_rows(
            rows.iter()
                .map(|r| r.iter().map(|v| BigRational::from_integer((*v).into())).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn schur_reduction_is_exact() {
        let a = rat(&[&[-6, 10, 4], &[-7, 2, 12], &[3, -3, -4]]);
        let r = schur_reduce(&a, &[0, 1], &[2]).unwrap();
        assert_eq!(r, rat(&[&[-3, 7], &[2, -7]]));
    }

    #[test]
    fn schur_block_diagonal_and_errors() {
        let a = rat(&[&[1, 2, 0], &[3, 4, 0], &[0, 0, 5]]);
        assert_eq!(schur_reduce(&a, &[0, 1], &[2]).unwrap(), rat(&[&[1, 2], &[3, 4]]));
        let s = rat(&[&[1, 1], &[1, 0]]);
        assert_eq!(schur_reduce(&s, &[0], &[1]), Err(EvPosError::SingularFastBlock));
        assert!(matches!(schur_reduce(&s, &[0], &[0]), Err(EvPosError::Indices(_))));
    }

    #[test]
    fn metzler_reduced_matrix_is_strong_from_zero() {
        let r = check_eventual_positivity(&m(&[&[-3.0, 7.0], &[2.0, -7.0]]), None, DEFAULT_SAMPLES).unwrap();
        assert_eq!(r.verdict, EvPosVerdict::StronglyEventuallyPositive);
        assert_eq!(r.tau0_estimate, Some(0.0));
    }

    #[test]
    fn complex_counterexample_is_rejected() {
        let a = m(&[&[-10.0, -10.0, 14.0], &[4.0, 1.0, -11.0], &[0.0, 3.0, -9.0]]);
        let r = check_eventual_positivity(&a, None, DEFAULT_SAMPLES).unwrap();
        assert_eq!(r.verdict, EvPosVerdict::NotEventuallyPositive);
    }

    #[test]
    fn scaled_example_needs_positive_tau0() {
        let a = m(&[&[-6.0, 10.0, 4.0], &[-7.0, 2.0, 12.0], &[12.0, -12.0, -16.0]]);
        let r = check_eventual_positivity(&a, None, DEFAULT_SAMPLES).unwrap();
        assert_eq!(r.verdict, EvPosVerdict::StronglyEventuallyPositive);
        let tau0 = r.tau0_estimate.unwrap();
        assert!(tau0 > 0.0);
        let e = matrix_exp(&a, tau0 * 1.01).unwrap();
        assert!(e.as_slice().iter().all(|x| *x > 0.0));
    }

    #[test]
    fn defective_matrix_is_an_error() {
        let a = m(&[&[-1.0, 1.0], &[0.0, -1.0]]);
        assert_eq!(check_eventual_positivity(&a, None, 10), Err(EvPosError::NotDiagonalizable));
    }

    #[test]
    fn lorentz_membership_of_dominant_vector() {
        let a = m(&[&[-3.0, 7.0], &[2.0, -7.0]]);
        let dec = decompose(&a).unwrap();
        let cone = LorentzConeSpec::from_decomposition(&dec, &[1.0]).unwrap();
        let v1 = dec.v_re(0);
        assert_eq!(cone.membership(&v1), Membership::Inside);
        let neg: Vec<f64> = v1.iter().map(|x| -x).collect();
        assert_eq!(cone.membership(&neg), Membership::Outside);
    }

    #[test]
    fn boundary_crossing_matches_closed_form() {
        // y = v1 + c v2: w1ᵀy = 1, |w2ᵀy| = |c|, boundary at α c² = 1.
        let a = m(&[&[-3.0, 7.0], &[2.0, -7.0]]);
        let dec = decompose(&a).unwrap();
        let alpha = 4.0;
        let cone = LorentzConeSpec::from_decomposition(&dec, &[alpha]).unwrap();
        let (v1, v2) = (dec.v_re(0), dec.v_re(1));
        let y = |c: f64| -> Vec<f64> { v1.iter().zip(&v2).map(|(a, b)| a + c * b).collect() };
        let (mut lo, mut hi) = (0.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cone.membership(&y(mid)) == Membership::Inside {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((lo - 1.0 / alpha.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn alpha_certificates_feasible_for_metzler() {
        let dec = decompose(&m(&[&[-3.0, 7.0], &[2.0, -7.0]])).unwrap();
        match find_alpha_certificates(&dec).unwrap() {
            AlphaSearch::Feasible(c) => {
                assert_eq!(c.beta.len(), 1);
                assert_eq!(c.gamma.len(), 1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn alpha_certificates_reject_boundary_eigenvector() {
        // v1 = e1 lies on the orthant boundary.
        let dec = decompose(&m(&[&[-1.0, 1.0], &[0.0, -3.0]])).unwrap();
        assert!(matches!(find_alpha_certificates(&dec).unwrap(), AlphaSearch::Infeasible { .. }));
        let rot = decompose(&m(&[&[-1.0, -5.0], &[5.0, -1.0]])).unwrap();
        assert_eq!(find_alpha_certificates(&rot), Err(EvPosError::NotDominant));
    }

    #[test]
    fn positivize_negative_off_diagonal() {
        let a = m(&[&[-1.0, -0.1], &[-0.1, -2.0]]);
        let dec = decompose(&a).unwrap();
        let p = similarity_positivize(&dec).unwrap();
        let s1 = p.s.mul_vec(&[1.0, 1.0]);
        let v1 = dec.v_re(0);
        let ws = p.s.vec_mul(&dec.w_re(0));
        for i in 0..2 {
            assert!((s1[i] - v1[i]).abs() < 1e-12);
            assert!((ws[i] - 0.5).abs() < 1e-12);
        }
        let b = p.s.inverse().unwrap().matmul(&a).matmul(&p.s);
        let r = check_eventual_positivity(&b, None, DEFAULT_SAMPLES).unwrap();
        assert_eq!(r.verdict, EvPosVerdict::StronglyEventuallyPositive);
    }

    #[test]
    fn positivize_rejects_complex_dominant() {
        let dec = decompose(&m(&[&[-1.0, -5.0], &[5.0, -1.0]])).unwrap();
        assert_eq!(similarity_positivize(&dec), Err(EvPosError::NotDominant));
    }
}

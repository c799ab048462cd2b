//! Dense eigenstructure of small real matrices.
//!
//! Eigenvalues come from balancing, Hessenberg reduction and the Francis
//! double-shift QR iteration. Right eigenvectors are null vectors of
//! `A - λI` computed cluster by cluster; left eigenvectors are the rows of
//! `V⁻¹`, which makes the pair biorthonormal by construction.

use num_complex::Complex;
use num_traits::{Float, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{norm2, null_space, LinalgError, Matrix};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("matrix is {0}x{1}, expected square")]
    NotSquare(usize, usize),
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("QR iteration did not converge")]
    NoConvergence,
    #[error("matrix exponential overflowed")]
    Overflow,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Eigenvalues sorted by descending real part with biorthonormal
/// right (`v_i`) and left (`w_i`) eigenvectors stored as columns.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition<T> {
    pub eigenvalues: Vec<Complex<T>>,
    pub right: Matrix<Complex<T>>,
    pub left: Matrix<Complex<T>>,
    pub diagonalizable: bool,
    /// `‖A‖₁`, the scale relative tolerances refer to.
    pub scale: T,
}

impl<T: Real> SpectralDecomposition<T> {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn v(&self, i: usize) -> Vec<Complex<T>> {
        self.right.column(i)
    }

    pub fn w(&self, i: usize) -> Vec<Complex<T>> {
        self.left.column(i)
    }

    /// Real part of `v_i`.
    pub fn v_re(&self, i: usize) -> Vec<T> {
        self.right.column(i).iter().map(|z| z.re).collect()
    }

    /// Real part of `w_i`.
    pub fn w_re(&self, i: usize) -> Vec<T> {
        self.left.column(i).iter().map(|z| z.re).collect()
    }

    /// Default tolerance `1e-8·‖A‖₁`, floored so the zero matrix still
    /// gets a usable radius.
    pub fn default_tol(&self) -> T {
        T::lit(1e-8) * self.scale.max(T::one())
    }

    /// `Σ λ_i v_i w_iᵀ`.
    pub fn reconstruct(&self) -> Matrix<Complex<T>> {
        let n = self.n();
        Matrix::from_fn(n, n, |r, c| {
            (0..n).fold(Complex::zero(), |acc, i| {
                acc + self.eigenvalues[i] * self.right[(r, i)] * self.left[(c, i)]
            })
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub lambda1_real: bool,
    pub lambda1_simple: bool,
    pub lambda1_negative: bool,
    pub strictly_dominant: bool,
    pub a2_holds: bool,
    /// `λ₁ - max_{j≥2} Re λ_j`; infinite for 1×1 matrices.
    pub gap: f64,
}

impl DominanceReport {
    /// Real, simple, negative and strictly dominant.
    pub fn koopman_ready(&self) -> bool {
        self.lambda1_real && self.lambda1_simple && self.lambda1_negative && self.strictly_dominant
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PfClass {
    #[serde(rename = "PF_n")]
    PfN,
    #[serde(rename = "WPF_n_only")]
    WpfNOnly,
    #[serde(rename = "neither")]
    Neither,
}

fn balance<T: Real>(a: &mut Matrix<T>) {
    let n = a.rows();
    let radix = T::lit(2.0);
    let sqrdx = radix * radix;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut r = T::zero();
            let mut c = T::zero();
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c == T::zero() || r == T::zero() {
                continue;
            }
            let s = c + r;
            let mut f = T::one();
            let mut g = r / radix;
            while c < g {
                f *= radix;
                c *= sqrdx;
            }
            g = r * radix;
            while c > g {
                f /= radix;
                c /= sqrdx;
            }
            if (c + r) / f < T::lit(0.95) * s {
                done = false;
                let ginv = T::one() / f;
                for j in 0..n {
                    a[(i, j)] *= ginv;
                    a[(j, i)] *= f;
                }
            }
        }
    }
}

fn hessenberg<T: Real>(a: &mut Matrix<T>) {
    let n = a.rows();
    for m in 1..n.saturating_sub(1) {
        let mut x = T::zero();
        let mut piv = m;
        for j in m..n {
            if a[(j, m - 1)].abs() > x.abs() {
                x = a[(j, m - 1)];
                piv = j;
            }
        }
        if piv != m {
            for j in m - 1..n {
                let t = a[(piv, j)];
                a[(piv, j)] = a[(m, j)];
                a[(m, j)] = t;
            }
            for j in 0..n {
                let t = a[(j, piv)];
                a[(j, piv)] = a[(j, m)];
                a[(j, m)] = t;
            }
        }
        if x != T::zero() {
            for i in m + 1..n {
                let mut y = a[(i, m - 1)];
                if y != T::zero() {
                    y /= x;
                    a[(i, m - 1)] = y;
                    for j in m..n {
                        let v = a[(m, j)];
                        a[(i, j)] -= y * v;
                    }
                    for j in 0..n {
                        let v = a[(j, i)];
                        a[(j, m)] += y * v;
                    }
                }
            }
        }
    }
    for i in 2..n {
        for j in 0..i - 1 {
            a[(i, j)] = T::zero();
        }
    }
}

#[inline]
fn sign<T: Real>(a: T, b: T) -> T {
    if b >= T::zero() {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix.
fn hqr<T: Real>(a: &mut Matrix<T>) -> Result<Vec<Complex<T>>, SpectralError> {
    let n = a.rows();
    let mut wr = vec![T::zero(); n];
    let mut wi = vec![T::zero(); n];
    let mut anorm = T::zero();
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += a[(i, j)].abs();
        }
    }
    let mut nn = n as isize - 1;
    let mut t = T::zero();
    while nn >= 0 {
        let nu = nn as usize;
        let mut its = 0;
        loop {
            let mut l = nu;
            while l >= 1 {
                let mut s = a[(l - 1, l - 1)].abs() + a[(l, l)].abs();
                if s == T::zero() {
                    s = anorm;
                }
                if a[(l, l - 1)].abs() + s == s {
                    a[(l, l - 1)] = T::zero();
                    break;
                }
                l -= 1;
            }
            let mut x = a[(nu, nu)];
            if l == nu {
                wr[nu] = x + t;
                wi[nu] = T::zero();
                nn -= 1;
                break;
            }
            let mut y = a[(nu - 1, nu - 1)];
            let mut w = a[(nu, nu - 1)] * a[(nu - 1, nu)];
            if l == nu - 1 {
                let p = T::lit(0.5) * (y - x);
                let q = p * p + w;
                let mut z = q.abs().sqrt();
                x += t;
                if q >= T::zero() {
                    z = p + sign(z, p);
                    wr[nu - 1] = x + z;
                    wr[nu] = x + z;
                    if z != T::zero() {
                        wr[nu] = x - w / z;
                    }
                    wi[nu - 1] = T::zero();
                    wi[nu] = T::zero();
                } else {
                    wr[nu - 1] = x + p;
                    wr[nu] = x + p;
                    wi[nu - 1] = -z;
                    wi[nu] = z;
                }
                nn -= 2;
                break;
            }
            if its == 60 {
                return Err(SpectralError::NoConvergence);
            }
            if its == 10 || its == 20 || its == 40 {
                t += x;
                for i in 0..=nu {
                    a[(i, i)] -= x;
                }
                let s = a[(nu, nu - 1)].abs() + a[(nu - 1, nu - 2)].abs();
                x = T::lit(0.75) * s;
                y = x;
                w = T::lit(-0.4375) * s * s;
            }
            its += 1;
            let mut m = nu - 2;
            let (mut p, mut q, mut r);
            let mut z;
            loop {
                z = a[(m, m)];
                r = x - z;
                let s0 = y - z;
                p = (r * s0 - w) / a[(m + 1, m)] + a[(m, m + 1)];
                q = a[(m + 1, m + 1)] - z - r - s0;
                r = a[(m + 2, m + 1)];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = a[(m, m - 1)].abs() * (q.abs() + r.abs());
                let v = p.abs() * (a[(m - 1, m - 1)].abs() + z.abs() + a[(m + 1, m + 1)].abs());
                if u + v == v {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nu {
                a[(i, i - 2)] = T::zero();
                if i != m + 2 {
                    a[(i, i - 3)] = T::zero();
                }
            }
            let mut k = m;
            while k < nu {
                if k != m {
                    p = a[(k, k - 1)];
                    q = a[(k + 1, k - 1)];
                    r = T::zero();
                    if k + 1 != nu {
                        r = a[(k + 2, k - 1)];
                    }
                    x = p.abs() + q.abs() + r.abs();
                    if x != T::zero() {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = sign((p * p + q * q + r * r).sqrt(), p);
                if s != T::zero() {
                    if k == m {
                        if l != m {
                            a[(k, k - 1)] = -a[(k, k - 1)];
                        }
                    } else {
                        a[(k, k - 1)] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nu {
                        let mut pp = a[(k, j)] + q * a[(k + 1, j)];
                        if k + 1 != nu {
                            pp += r * a[(k + 2, j)];
                            a[(k + 2, j)] -= pp * z;
                        }
                        a[(k + 1, j)] -= pp * y;
                        a[(k, j)] -= pp * x;
                    }
                    let mmin = if nu < k + 3 { nu } else { k + 3 };
                    for i in l..=mmin {
                        let mut pp = x * a[(i, k)] + y * a[(i, k + 1)];
                        if k + 1 != nu {
                            pp += z * a[(i, k + 2)];
                            a[(i, k + 2)] -= pp * r;
                        }
                        a[(i, k + 1)] -= pp * q;
                        a[(i, k)] -= pp;
                    }
                }
                k += 1;
            }
        }
    }
    Ok(wr.into_iter().zip(wi).map(|(r, i)| Complex::new(r, i)).collect())
}

/// Eigenvalues of a real square matrix (unsorted).
pub fn eigenvalues<T: Real>(a: &Matrix<T>) -> Result<Vec<Complex<T>>, SpectralError> {
    if !a.is_square() {
        return Err(SpectralError::NotSquare(a.rows(), a.cols()));
    }
    if !a.is_finite() {
        return Err(SpectralError::NonFinite);
    }
    let mut h = a.clone();
    balance(&mut h);
    hessenberg(&mut h);
    hqr(&mut h)
}

/// Descending real part; real parts within `tol` are ordered by ascending
/// `|Im|` with the positive imaginary part first.
fn sort_eigenvalues<T: Real>(ev: &mut [Complex<T>], tol: T) {
    ev.sort_by(|a, b| b.re.partial_cmp(&a.re).unwrap());
    let mut start = 0;
    while start < ev.len() {
        let mut end = start + 1;
        while end < ev.len() && (ev[start].re - ev[end].re).abs() <= tol {
            end += 1;
        }
        ev[start..end].sort_by(|a, b| {
            a.im.abs()
                .partial_cmp(&b.im.abs())
                .unwrap()
                .then(b.im.partial_cmp(&a.im).unwrap())
        });
        start = end;
    }
}

/// Sign convention for a real eigenvector: at least as many clearly
/// positive entries as clearly negative ones, ties broken by making the
/// largest-magnitude entry positive.
pub fn sign_normalize<T: Real>(v: &mut [T]) {
    let scale = v.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    let tol = scale * T::lit(1e-9);
    let pos = v.iter().filter(|x| **x > tol).count();
    let neg = v.iter().filter(|x| **x < -tol).count();
    let flip = if pos != neg {
        neg > pos
    } else {
        let big = v.iter().fold(T::zero(), |m, x| if x.abs() > m.abs() { *x } else { m });
        big < T::zero()
    };
    if flip {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Full eigen-decomposition with the sorting and normalization conventions
/// used throughout the crate.
pub fn decompose<T: Real>(a: &Matrix<T>) -> Result<SpectralDecomposition<T>, SpectralError> {
    let mut ev = eigenvalues(a)?;
    let n = a.rows();
    let scale = a.norm_1();
    let unit = scale.max(T::min_positive_value());
    let sort_tol = T::lit(1e-8) * scale.max(T::one());
    // hqr returns exact conjugate pairs and exactly real values, so any
    // nonzero imaginary part marks a genuine complex pair.
    sort_eigenvalues(&mut ev, sort_tol);

    let cluster_radius = T::lit(1e-6) * unit;
    let residual_tol = T::lit(1e-7) * unit;
    let ac = a.to_complex();
    let mut columns: Vec<Option<Vec<Complex<T>>>> = vec![None; n];
    let mut diagonalizable = true;
    let mut i = 0;
    while i < n {
        if columns[i].is_some() {
            i += 1;
            continue;
        }
        let members: Vec<usize> = (i..n)
            .filter(|&j| columns[j].is_none() && (ev[j] - ev[i]).norm() <= cluster_radius)
            .collect();
        let m = members.len();
        let mu = members.iter().fold(Complex::zero(), |s, &j| s + ev[j]) / T::lit(m as f64);
        let real = ev[i].im == T::zero();
        let mut vecs: Vec<Vec<Complex<T>>> = if real {
            let shifted = a.sub(&Matrix::identity(n).scale(mu.re));
            null_space(&shifted, m)
                .into_iter()
                .map(|mut v| {
                    if m == 1 {
                        refine(a, mu.re, &mut v);
                        sign_normalize(&mut v);
                    }
                    v.into_iter().map(|x| Complex::new(x, T::zero())).collect()
                })
                .collect()
        } else {
            let shifted = ac.sub(&Matrix::identity(n).scale(mu));
            null_space(&shifted, m)
                .into_iter()
                .map(|mut v| {
                    if m == 1 {
                        refine(&ac, mu, &mut v);
                    }
                    fix_phase(&mut v);
                    v
                })
                .collect()
        };
        for v in &vecs {
            let r: Vec<Complex<T>> = ac
                .mul_vec(v)
                .iter()
                .zip(v)
                .map(|(av, x)| *av - mu * *x)
                .collect();
            if norm2(&r) > residual_tol {
                diagonalizable = false;
            }
        }
        for (k, &j) in members.iter().enumerate() {
            columns[j] = vecs.get_mut(k).map(std::mem::take);
        }
        // Conjugate partners reuse the conjugated vectors.
        if !real && ev[i].im > T::zero() {
            for &j in &members {
                let target = ev[j].conj();
                if let Some(partner) = (0..n).find(|&q| columns[q].is_none() && ev[q] == target) {
                    columns[partner] = columns[j].as_ref().map(|v| v.iter().map(|z| z.conj()).collect());
                }
            }
        }
        i += 1;
    }
    let cols: Vec<Vec<Complex<T>>> = columns
        .into_iter()
        .map(|c| c.unwrap_or_else(|| vec![Complex::zero(); n]))
        .collect();
    let right = Matrix::from_columns(&cols)?;
    let left = match right.inverse() {
        Ok(inv) if diagonalizable => inv.transpose(),
        _ => {
            diagonalizable = false;
            Matrix::zeros(n, n)
        }
    };
    Ok(SpectralDecomposition { eigenvalues: ev, right, left, diagonalizable, scale })
}

/// Two steps of shifted inverse iteration.
fn refine<E>(a: &Matrix<E>, mu: E, v: &mut Vec<E>)
where
    E: crate::linalg::Entry,
{
    let n = a.rows();
    let unit = a
        .as_slice()
        .iter()
        .fold(E::R::zero(), |m, x| m.max(x.modulus()))
        .max(E::R::min_positive_value());
    let shift = mu + E::from_real(E::R::lit(1e-10) * unit);
    let shifted = Matrix::from_fn(n, n, |i, j| {
        if i == j {
            a[(i, j)].clone() - shift.clone()
        } else {
            a[(i, j)].clone()
        }
    });
    let Ok(lu) = shifted.lu() else { return };
    for _ in 0..2 {
        let mut x = lu.solve(v);
        if x.iter().any(|z| !z.modulus().is_finite()) {
            return;
        }
        crate::linalg::normalize(&mut x);
        *v = x;
    }
}

/// Rotates a complex vector so its largest-modulus entry is real positive.
fn fix_phase<T: Real>(v: &mut [Complex<T>]) {
    let big = v.iter().fold(Complex::zero(), |m: Complex<T>, z| if z.norm() > m.norm() { *z } else { m });
    if big.norm() > T::zero() {
        let phase = big.conj() / big.norm();
        for z in v.iter_mut() {
            *z = *z * phase;
        }
    }
}

pub fn check_dominance<T: Real>(dec: &SpectralDecomposition<T>, tol: T) -> DominanceReport {
    let ev = &dec.eigenvalues;
    let l1 = ev[0];
    let lambda1_real = l1.im.abs() < tol;
    let lambda1_simple = ev[1..].iter().all(|z| (*z - l1).norm() > tol);
    let lambda1_negative = l1.re < -tol;
    let max_rest = ev[1..].iter().map(|z| z.re).fold(T::neg_infinity(), T::max);
    let gap = (l1.re - max_rest).as_f64();
    let strictly_dominant = lambda1_real && lambda1_simple && l1.re > max_rest + tol;
    let a2_holds = ev.iter().all(|z| z.re.abs() > tol);
    DominanceReport { lambda1_real, lambda1_simple, lambda1_negative, strictly_dominant, a2_holds, gap }
}

/// Perron-Frobenius classification.
pub fn classify_pf<T: Real>(a: &Matrix<T>, tol: T) -> Result<PfClass, SpectralError> {
    let dec = decompose(a)?;
    let rho = dec.eigenvalues.iter().map(|z| z.norm()).fold(T::zero(), T::max);
    if rho <= tol {
        return Ok(PfClass::Neither);
    }
    let peron: Vec<usize> = (0..dec.n())
        .filter(|&i| (dec.eigenvalues[i] - Complex::new(rho, T::zero())).norm() <= tol)
        .collect();
    if peron.is_empty() {
        return Ok(PfClass::Neither);
    }
    let oriented = |mut x: Vec<T>| {
        if x.iter().copied().sum::<T>() < T::zero() {
            x.iter_mut().for_each(|e| *e = -*e);
        }
        x
    };
    let imag_free = |c: &[Complex<T>]| c.iter().all(|z| z.im.abs() <= tol);
    let simple = peron.len() == 1;
    let dominant = dec
        .eigenvalues
        .iter()
        .enumerate()
        .all(|(i, z)| peron.contains(&i) || z.norm() < rho - tol);
    if simple && dominant && dec.diagonalizable {
        let i = peron[0];
        let (vc, wc) = (dec.v(i), dec.w(i));
        if imag_free(&vc) && imag_free(&wc) {
            let v = oriented(dec.v_re(i));
            let w = oriented(dec.w_re(i));
            let vt = tol * norm_inf(&v);
            let wt = tol * norm_inf(&w);
            if v.iter().all(|x| *x > vt) && w.iter().all(|x| *x > wt) {
                return Ok(PfClass::PfN);
            }
        }
    }
    // Weak version: a nonnegative eigenvector for ρ of both A and Aᵀ.
    let nonneg = |m: &Matrix<T>| -> bool {
        let n = m.rows();
        let shifted = m.sub(&Matrix::identity(n).scale(rho));
        null_space(&shifted, peron.len()).into_iter().any(|x| {
            let x = oriented(x);
            let t = tol * norm_inf(&x);
            x.iter().all(|e| *e >= -t)
        })
    };
    if nonneg(a) && nonneg(&a.transpose()) {
        Ok(PfClass::WpfNOnly)
    } else {
        Ok(PfClass::Neither)
    }
}

fn norm_inf<T: Real>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |m, e| m.max(e.abs()))
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// `e^{At}` by scaling and squaring with the degree-13 Padé approximant.
pub fn matrix_exp<T: Real>(a: &Matrix<T>, t: T) -> Result<Matrix<T>, SpectralError> {
    if !a.is_square() {
        return Err(SpectralError::NotSquare(a.rows(), a.cols()));
    }
    if !t.is_finite() || !a.is_finite() {
        return Err(SpectralError::NonFinite);
    }
    let n = a.rows();
    let at = a.scale(t);
    let norm = at.norm_1().as_f64();
    let s = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let x = at.scale(T::lit(2f64.powi(-s)));
    let b: Vec<T> = PADE13.iter().map(|c| T::lit(*c)).collect();
    let id = Matrix::<T>::identity(n);
    let x2 = x.matmul(&x);
    let x4 = x2.matmul(&x2);
    let x6 = x4.matmul(&x2);
    let lin = |c6: T, c4: T, c2: T, c0: T| -> Matrix<T> {
        x6.scale(c6).add(&x4.scale(c4)).add(&x2.scale(c2)).add(&id.scale(c0))
    };
    let u_inner = x6.matmul(&lin(b[13], b[11], b[9], T::zero())).add(&lin(b[7], b[5], b[3], b[1]));
    let u = x.matmul(&u_inner);
    let v = x6.matmul(&lin(b[12], b[10], b[8], T::zero())).add(&lin(b[6], b[4], b[2], b[0]));
    let lu = v.sub(&u).lu()?;
    let rhs = v.add(&u);
    let cols: Vec<Vec<T>> = (0..n).map(|j| lu.solve(&rhs.column(j))).collect();
    let mut r = Matrix::from_columns(&cols)?;
    for _ in 0..s {
        r = r.matmul(&r);
        if !r.is_finite() {
            return Err(SpectralError::Overflow);
        }
    }
    if !r.is_finite() {
        return Err(SpectralError::Overflow);
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    fn close(a: Complex<f64>, re: f64, im: f64, tol: f64) -> bool {
        (a.re - re).abs() < tol && (a.im - im).abs() < tol
    }

    #[test]
    fn complex_counterexample_spectrum() {
        let a = m(&[&[-10.0, -10.0, 14.0], &[4.0, 1.0, -11.0], &[0.0, 3.0, -9.0]]);
        let dec = decompose(&a).unwrap();
        assert!(close(dec.eigenvalues[0], -6.0, 0.0, 1e-8));
        assert!(close(dec.eigenvalues[1], -6.0, 6.0, 1e-8));
        assert!(close(dec.eigenvalues[2], -6.0, -6.0, 1e-8));
        assert!(dec.diagonalizable);
        let r = check_dominance(&dec, dec.default_tol());
        assert!(r.lambda1_real && r.lambda1_simple && !r.strictly_dominant);
    }

    #[test]
    fn reduced_matrix_spectrum() {
        let a = m(&[&[-3.0, 7.0], &[2.0, -7.0]]);
        let dec = decompose(&a).unwrap();
        let s18 = 18f64.sqrt();
        assert!(close(dec.eigenvalues[0], -5.0 + s18, 0.0, 1e-12));
        assert!(close(dec.eigenvalues[1], -5.0 - s18, 0.0, 1e-12));
        let r = check_dominance(&dec, dec.default_tol());
        assert!(r.koopman_ready() && r.a2_holds);
        assert!(dec.v_re(0).iter().all(|x| *x > 0.0));
        assert!(dec.w_re(0).iter().all(|x| *x > 0.0));
    }

    #[test]
    fn identity_and_zero() {
        let dec = decompose(&Matrix::<f64>::identity(2)).unwrap();
        assert!(dec.diagonalizable);
        assert_eq!(dec.eigenvalues, vec![Complex::new(1.0, 0.0); 2]);
        let z = decompose(&Matrix::<f64>::zeros(2, 2)).unwrap();
        assert!(!check_dominance(&z, z.default_tol()).a2_holds);
    }

    #[test]
    fn jordan_block_is_not_diagonalizable() {
        let dec = decompose(&m(&[&[-1.0, 1.0], &[0.0, -1.0]])).unwrap();
        assert!(!dec.diagonalizable);
    }

    #[test]
    fn biorthonormal_pairs() {
        let a = m(&[&[-10.0, -10.0, 14.0], &[4.0, 1.0, -11.0], &[0.0, 3.0, -9.0]]);
        let dec = decompose(&a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let d = (0..3).fold(Complex::zero(), |s, k| s + dec.left[(k, i)] * dec.right[(k, j)]);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!(close(d, want, 0.0, 1e-10), "{i}{j}: {d}");
            }
        }
    }

    #[test]
    fn pf_classes() {
        let tol = 1e-8;
        assert_eq!(classify_pf(&m(&[&[0.0, 1.0], &[1.0, 0.0]]), tol).unwrap(), PfClass::WpfNOnly);
        assert_eq!(classify_pf(&m(&[&[2.0, 1.0], &[1.0, 2.0]]), tol).unwrap(), PfClass::PfN);
        assert_eq!(classify_pf(&m(&[&[0.0, 1.0], &[0.0, 0.0]]), tol).unwrap(), PfClass::Neither);
    }

    #[test]
    fn expm_basics() {
        let a = m(&[&[-3.0, 7.0], &[2.0, -7.0]]);
        assert_eq!(matrix_exp(&a, 0.0).unwrap(), Matrix::identity(2));
        let d = matrix_exp(&m(&[&[-1.0, 0.0], &[0.0, -2.0]]), 1.0).unwrap();
        assert!((d[(0, 0)] - (-1f64).exp()).abs() < 1e-15);
        assert!((d[(1, 1)] - (-2f64).exp()).abs() < 1e-15);
        assert_eq!(d[(0, 1)], 0.0);
        for t in [0.1, 1.0, 10.0] {
            assert!(matrix_exp(&a, t).unwrap().as_slice().iter().all(|x| *x >= 0.0));
        }
        assert_eq!(matrix_exp(&m(&[&[800.0]]), 1.0), Err(SpectralError::Overflow));
    }

    #[test]
    fn expm_matches_eigen_formula() {
        // Rotation generator: e^{At} = [[cos t, -sin t], [sin t, cos t]].
        let a = m(&[&[0.0, -1.0], &[1.0, 0.0]]);
        let e = matrix_exp(&a, 40.0).unwrap();
        assert!((e[(0, 0)] - 40f64.cos()).abs() < 1e-10);
        assert!((e[(1, 0)] - 40f64.sin()).abs() < 1e-10);
    }
}

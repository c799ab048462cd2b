//! Dominant Koopman eigenfunction `s₁` and its gradient by Laplace
//! averages, grid evaluation and isostable extraction.
//!
//! Trajectories are integrated in the rescaled deviation
//! `z(t) = e^{-λ₁t}(φ(t,x) - x*)`, so the terminal estimate is simply
//! `w₁ᵀz(T)` and long horizons do not amplify absolute integration error.

use std::collections::HashMap;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{dot, Matrix};
use crate::ode::{solve, OdeError, Tolerances, Trajectory};
use crate::sampling::Window;
use crate::scalar::Real;
use crate::spectral::{check_dominance, decompose, DominanceReport, SpectralDecomposition, SpectralError};
use crate::vf::{EvalError, VectorField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KoopmanError {
    #[error("λ₁ at the equilibrium is not real, simple, negative and strictly dominant: {0:?}")]
    NotReady(DominanceReport),
    #[error("Jacobian at the equilibrium is not diagonalizable")]
    NotDiagonalizable,
    #[error("trajectory leaves the basin (estimate grew by {growth:.3e} between checkpoints)")]
    Divergent { growth: f64 },
    #[error("Laplace estimate did not settle by horizon {horizon} (spread {spread:.3e})")]
    NotConverged { horizon: f64, spread: f64 },
    #[error("bad grid: {0}")]
    BadGrid(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("integration failed: {0}")]
    Integration(#[from] OdeError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Equilibrium data for the dominant mode.
#[derive(Clone, Debug)]
pub struct KoopmanSpec<T> {
    pub x_star: Vec<T>,
    pub dec: SpectralDecomposition<T>,
    pub lambda1: T,
    /// Unit right eigenvector, sign-normalized.
    pub v1: Vec<T>,
    /// Left eigenvector with `w₁ᵀv₁ = 1`.
    pub w1: Vec<T>,
    pub dominance: DominanceReport,
    /// `J(x*)`.
    pub jacobian: Matrix<T>,
}

impl<T: Real> KoopmanSpec<T> {
    /// Linearizes `field` at `x_star`; refuses unless `λ₁` is real, simple,
    /// negative and strictly dominant.
    pub fn new(field: &VectorField, x_star: &[T]) -> Result<Self, KoopmanError> {
        if x_star.len() != field.dim() {
            return Err(KoopmanError::Dimension(format!("x* has {} entries, field has {}", x_star.len(), field.dim())));
        }
        let jac = field.jacobian(x_star)?;
        let dec = decompose(&jac)?;
        let dominance = check_dominance(&dec, dec.default_tol());
        if !dominance.koopman_ready() {
            return Err(KoopmanError::NotReady(dominance));
        }
        if !dec.diagonalizable {
            return Err(KoopmanError::NotDiagonalizable);
        }
        Ok(KoopmanSpec {
            x_star: x_star.to_vec(),
            lambda1: dec.eigenvalues[0].re,
            v1: dec.v_re(0),
            w1: dec.w_re(0),
            dominance,
            dec,
            jacobian: jac,
        })
    }

    pub fn dim(&self) -> usize {
        self.x_star.len()
    }

    /// `max(10/|λ₁|, 10/gap)`.
    pub fn default_horizon(&self) -> T {
        let a = T::lit(10.0) / self.lambda1.abs();
        let gap = T::lit(self.dominance.gap);
        if gap.is_finite() && gap > T::zero() {
            a.max(T::lit(10.0) / gap)
        } else {
            a
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplaceMethod {
    /// `e^{-λ₁T} w₁ᵀ(φ(T,x) - x*)` with the three-checkpoint gate.
    Terminal,
    /// `(1/T)∫₀ᵀ e^{-λ₁s} w₁ᵀ(φ(s,x) - x*) ds`, no gate.
    Average,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaplaceOptions {
    /// Defaults to [`KoopmanSpec::default_horizon`].
    pub horizon: Option<f64>,
    pub tol: Tolerances,
    pub gate_rel: f64,
    pub divergence_factor: f64,
    pub max_doublings: u32,
    pub method: LaplaceMethod,
}

impl Default for LaplaceOptions {
    fn default() -> Self {
        LaplaceOptions {
            horizon: None,
            tol: Tolerances::new(1e-10, 1e-12),
            gate_rel: 1e-3,
            divergence_factor: 10.0,
            max_doublings: 3,
            method: LaplaceMethod::Terminal,
        }
    }
}

const CHECKPOINTS: [f64; 3] = [0.6, 0.8, 1.0];

/// Right-hand side of `(z, Z_1..Z_k, τ)`:
/// `ż = e^{-λ₁τ} f(x* + e^{λ₁τ} z) - λ₁z`, `Ż_j = (J(x) - λ₁I) Z_j`, `τ̇ = 1`.
fn scaled_rhs<'a, T: Real>(
    spec: &'a KoopmanSpec<T>,
    field: &'a VectorField,
    k: usize,
) -> impl Fn(&[T], &mut [T]) -> Result<(), EvalError> + 'a {
    let n = spec.dim();
    let xs = spec.x_star.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let linear_radius = T::epsilon().sqrt() * (T::one() + xs);
    move |y: &[T], out: &mut [T]| {
        let tau = y[n * (k + 1)];
        let shrink = (spec.lambda1 * tau).exp();
        let grow = T::one() / shrink;
        let x: Vec<T> = (0..n).map(|i| spec.x_star[i] + shrink * y[i]).collect();
        let dev = shrink * y[..n].iter().fold(T::zero(), |m, v| m.max(v.abs()));
        if dev < linear_radius {
            // x* + δ no longer resolves δ; the linear part is exact to O(δ).
            let jz = spec.jacobian.mul_vec(&y[..n]);
            for i in 0..n {
                out[i] = jz[i] - spec.lambda1 * y[i];
            }
        } else {
            let f = field.eval(&x)?;
            for i in 0..n {
                out[i] = grow * f[i] - spec.lambda1 * y[i];
            }
        }
        for j in 0..k {
            let col = &y[n * (j + 1)..n * (j + 2)];
            let (_, jv) = field.jvp(&x, col)?;
            for i in 0..n {
                out[n * (j + 1) + i] = jv[i] - spec.lambda1 * col[i];
            }
        }
        out[n * (k + 1)] = T::one();
        Ok(())
    }
}

fn stiffest<T: Real>(spec: &KoopmanSpec<T>, field: &VectorField, y: &[T]) -> usize {
    let n = spec.dim();
    let shrink = (spec.lambda1 * y[y.len() - 1]).exp();
    let x: Vec<T> = (0..n).map(|i| spec.x_star[i] + shrink * y[i]).collect();
    field
        .jacobian(&x)
        .map(|j| {
            (0..n)
                .max_by(|&a, &b| j[(a, a)].abs().partial_cmp(&j[(b, b)].abs()).unwrap_or(std::cmp::Ordering::Equal))
                .unwrap_or(0)
        })
        .unwrap_or(0)
}

/// Integrates the rescaled system with `k` tangent directions, returning
/// the trajectory and states at the given fractions of `horizon`.
fn run_scaled<T: Real>(
    spec: &KoopmanSpec<T>,
    field: &VectorField,
    x: &[T],
    directions: Option<&Matrix<T>>,
    horizon: T,
    tol: Tolerances,
) -> Result<(Trajectory<T>, Vec<Vec<T>>), KoopmanError> {
    let n = spec.dim();
    if x.len() != n {
        return Err(KoopmanError::Dimension(format!("point has {} entries, field has {n}", x.len())));
    }
    let k = directions.map_or(0, |d| d.cols());
    let mut y0: Vec<T> = x.iter().zip(&spec.x_star).map(|(a, b)| *a - *b).collect();
    if let Some(d) = directions {
        for j in 0..k {
            y0.extend(d.column(j));
        }
    }
    y0.push(T::zero());
    let stops: Vec<T> = CHECKPOINTS.iter().map(|c| horizon * T::lit(*c)).collect();
    Ok(solve(scaled_rhs(spec, field, k), &y0, horizon, &stops, tol, |y| stiffest(spec, field, y))?)
}

/// Checkpoint agreement and divergence test on a sequence of estimates.
enum Gate {
    Accept,
    Diverged(f64),
    Unsettled(f64),
}

fn gate<T: Real>(est: &[Vec<T>], floor: T, contracting: bool, opts: &LaplaceOptions) -> Gate {
    let mag = |v: &[T]| v.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    for w in est.windows(2) {
        let (a, b) = (mag(&w[0]), mag(&w[1]));
        if !contracting && b > T::lit(opts.divergence_factor) * a.max(floor) {
            return Gate::Diverged((b / a.max(floor)).as_f64());
        }
    }
    if est.iter().any(|e| e.iter().any(|v| !v.is_finite())) {
        return Gate::Diverged(f64::INFINITY);
    }
    let scale = est.iter().fold(floor * T::lit(1e-2), |m, e| m.max(mag(e)));
    let mut spread = T::zero();
    for i in 0..est.len() {
        for j in i + 1..est.len() {
            let d: Vec<T> = est[i].iter().zip(&est[j]).map(|(a, b)| *a - *b).collect();
            spread = spread.max(mag(&d));
        }
    }
    if spread <= T::lit(opts.gate_rel) * scale {
        Gate::Accept
    } else {
        Gate::Unsettled(if scale > T::zero() { (spread / scale).as_f64() } else { f64::INFINITY })
    }
}

/// Whether `‖φ(t,x) - x*‖` at least halves between the first and last
/// checkpoint. Slow transients inside the basin still contract; orbits
/// captured by another attractor do not.
fn contracting<T: Real>(spec: &KoopmanSpec<T>, stops: &[Vec<T>]) -> bool {
    let n = spec.dim();
    let dev = |y: &[T]| {
        let tau = y[y.len() - 1];
        (spec.lambda1 * tau).exp() * y[..n].iter().fold(T::zero(), |m, v| m.max(v.abs()))
    };
    let (first, last) = (dev(&stops[0]), dev(&stops[stops.len() - 1]));
    first == T::zero() || last < T::lit(0.5) * first
}

/// Exact integral of the cubic Hermite interpolant of `w₁ᵀz` over the
/// accepted steps, divided by the horizon.
fn hermite_average<T: Real>(spec: &KoopmanSpec<T>, traj: &Trajectory<T>) -> T {
    let n = spec.dim();
    let g = |i: usize| dot(&spec.w1, &traj.states[i][..n]);
    let dg = |i: usize| dot(&spec.w1, &traj.derivs[i][..n]);
    let mut acc = T::zero();
    for i in 0..traj.times.len() - 1 {
        let h = traj.times[i + 1] - traj.times[i];
        acc += h / T::lit(2.0) * (g(i) + g(i + 1)) + h * h / T::lit(12.0) * (dg(i) - dg(i + 1));
    }
    acc / traj.t_end()
}

/// `s₁(x)` by the Laplace average with observable `w₁ᵀ(x - x*)`.
pub fn eval_s1<T: Real>(
    spec: &KoopmanSpec<T>,
    field: &VectorField,
    x: &[T],
    opts: &LaplaceOptions,
) -> Result<T, KoopmanError> {
    let n = spec.dim();
    let floor: T = x.iter().zip(&spec.x_star).zip(&spec.w1).map(|((a, b), w)| ((*a - *b) * *w).abs()).sum();
    let mut horizon = opts.horizon.map(T::lit).unwrap_or_else(|| spec.default_horizon());
    let mut last = 0.0;
    for _ in 0..=opts.max_doublings {
        let (traj, stops) = run_scaled(spec, field, x, None, horizon, opts.tol)?;
        let est: Vec<Vec<T>> = stops.iter().map(|y| vec![dot(&spec.w1, &y[..n])]).collect();
        match gate(&est, floor, contracting(spec, &stops), opts) {
            Gate::Diverged(growth) => return Err(KoopmanError::Divergent { growth }),
            Gate::Accept if opts.method == LaplaceMethod::Terminal => return Ok(est[2][0]),
            _ if opts.method == LaplaceMethod::Average => return Ok(hermite_average(spec, &traj)),
            Gate::Unsettled(s) => last = s,
            Gate::Accept => unreachable!(),
        }
        horizon = horizon * T::lit(2.0);
    }
    Err(KoopmanError::NotConverged { horizon: (horizon / T::lit(2.0)).as_f64(), spread: last })
}

/// `∇s₁(x)` from the prolonged system with observable `w₁ᵀδx`.
pub fn eval_grad_s1<T: Real>(
    spec: &KoopmanSpec<T>,
    field: &VectorField,
    x: &[T],
    opts: &LaplaceOptions,
) -> Result<Vec<T>, KoopmanError> {
    eval_s1_and_grad(spec, field, x, opts).map(|(_, g)| g)
}

/// `s₁(x)` and `∇s₁(x)` from one prolonged integration; both must pass
/// the gate.
pub fn eval_s1_and_grad<T: Real>(
    spec: &KoopmanSpec<T>,
    field: &VectorField,
    x: &[T],
    opts: &LaplaceOptions,
) -> Result<(T, Vec<T>), KoopmanError> {
    let n = spec.dim();
    let eye = Matrix::identity(n);
    let s_floor: T = x.iter().zip(&spec.x_star).zip(&spec.w1).map(|((a, b), w)| ((*a - *b) * *w).abs()).sum();
    let g_floor = spec.w1.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let mut horizon = opts.horizon.map(T::lit).unwrap_or_else(|| spec.default_horizon());
    let mut last = 0.0;
    for _ in 0..=opts.max_doublings {
        let (_, stops) = run_scaled(spec, field, x, Some(&eye), horizon, opts.tol)?;
        let s_est: Vec<Vec<T>> = stops.iter().map(|y| vec![dot(&spec.w1, &y[..n])]).collect();
        let g_est: Vec<Vec<T>> = stops
            .iter()
            .map(|y| (0..n).map(|j| dot(&spec.w1, &y[n * (j + 1)..n * (j + 2)])).collect())
            .collect();
        let c = contracting(spec, &stops);
        let gs = gate(&s_est, s_floor, c, opts);
        let gg = gate(&g_est, g_floor, c, opts);
        match (gs, gg) {
            (Gate::Diverged(growth), _) | (_, Gate::Diverged(growth)) => {
                return Err(KoopmanError::Divergent { growth })
            }
            (Gate::Accept, Gate::Accept) => return Ok((s_est[2][0], g_est[2].clone())),
            (a, b) => {
                let s = |g: Gate| if let Gate::Unsettled(s) = g { s } else { 0.0 };
                last = s(a).max(s(b));
            }
        }
        horizon = horizon * T::lit(2.0);
    }
    Err(KoopmanError::NotConverged { horizon: (horizon / T::lit(2.0)).as_f64(), spread: last })
}

/// `s₁` (and optionally `∇s₁`) sampled on a regular grid over selected
/// axes, with the remaining coordinates frozen at `base`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct EigenfunctionField<T> {
    pub window: Window,
    /// State indices spanned by the grid, one per window axis.
    pub axes: Vec<usize>,
    /// Full-dimensional point supplying the frozen coordinates.
    pub base: Vec<T>,
    pub grid_shape: Vec<usize>,
    /// Row-major over `grid_shape` (last axis fastest).
    pub s1_values: Vec<T>,
    pub grad_values: Option<Vec<Vec<T>>>,
    pub divergent_mask: Vec<bool>,
}

impl<T: Real> EigenfunctionField<T> {
    pub fn len(&self) -> usize {
        self.grid_shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.grid_shape).fold(0, |acc, (i, m)| acc * m + i)
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.grid_shape.len()];
        for (k, m) in self.grid_shape.iter().enumerate().rev() {
            idx[k] = flat % m;
            flat /= m;
        }
        idx
    }

    /// Coordinate of grid node `i` along window axis `k`.
    pub fn axis_coord(&self, k: usize, i: usize) -> T {
        let (lo, hi) = (self.window.lo[k], self.window.hi[k]);
        T::lit(lo + (hi - lo) * i as f64 / (self.grid_shape[k] - 1) as f64)
    }

    /// Full-dimensional state at a grid node.
    pub fn point(&self, flat: usize) -> Vec<T> {
        let idx = self.multi_index(flat);
        let mut x = self.base.clone();
        for (k, &ax) in self.axes.iter().enumerate() {
            x[ax] = self.axis_coord(k, idx[k]);
        }
        x
    }

    /// Multilinear interpolation in window coordinates; `None` outside the
    /// window or when a contributing corner is divergent.
    pub fn interpolate(&self, y: &[T]) -> Option<T> {
        let d = self.grid_shape.len();
        if y.len() != d {
            return None;
        }
        let mut cell = vec![0usize; d];
        let mut frac = vec![T::zero(); d];
        for k in 0..d {
            let (lo, hi) = (T::lit(self.window.lo[k]), T::lit(self.window.hi[k]));
            if y[k] < lo || y[k] > hi {
                return None;
            }
            let m = self.grid_shape[k] - 1;
            let u = (y[k] - lo) / (hi - lo) * T::lit(m as f64);
            let i = u.floor().as_f64().max(0.0).min((m - 1) as f64) as usize;
            cell[k] = i;
            frac[k] = u - T::lit(i as f64);
        }
        let mut acc = T::zero();
        for corner in 0..(1usize << d) {
            let mut w = T::one();
            let mut idx = cell.clone();
            for k in 0..d {
                if corner >> k & 1 == 1 {
                    idx[k] += 1;
                    w = w * frac[k];
                } else {
                    w = w * (T::one() - frac[k]);
                }
            }
            if w == T::zero() {
                continue;
            }
            let f = self.flat_index(&idx);
            if self.divergent_mask[f] {
                return None;
            }
            acc += w * self.s1_values[f];
        }
        Some(acc)
    }

    /// Plain-text dump `x1 ... xn s1 [ds1_1 ... ds1_n] divergent`.
    pub fn write_dump<W: Write>(&self, mut w: W) -> io::Result<()> {
        for f in 0..self.len() {
            for v in self.point(f) {
                write!(w, "{:e} ", v.as_f64())?;
            }
            if self.divergent_mask[f] {
                write!(w, "nan")?;
            } else {
                write!(w, "{:e}", self.s1_values[f].as_f64())?;
            }
            if let Some(g) = &self.grad_values {
                for v in &g[f] {
                    if self.divergent_mask[f] {
                        write!(w, " nan")?;
                    } else {
                        write!(w, " {:e}", v.as_f64())?;
                    }
                }
            }
            writeln!(w, " {}", u8::from(self.divergent_mask[f]))?;
        }
        Ok(())
    }
}

/// Full-dimensional grid over `window`.
pub fn eval_field_on_grid<T: Real>(
    spec: &KoopmanSpec<T>,
    field: &VectorField,
    window: &Window,
    grid_shape: &[usize],
    with_gradients: bool,
    opts: &LaplaceOptions,
) -> Result<EigenfunctionField<T>, KoopmanError> {
    let axes: Vec<usize> = (0..spec.dim()).collect();
    let base = spec.x_star.clone();
    eval_section_on_grid(spec, field, &base, &axes, window, grid_shape, with_gradients, opts)
}

/// Grid over the state indices `axes`, other coordinates taken from `base`.
#[allow(clippy::too_many_arguments)]
pub fn eval_section_on_grid<T: Real>(
    spec: &KoopmanSpec<T>,
    field: &VectorField,
    base: &[T],
    axes: &[usize],
    window: &Window,
    grid_shape: &[usize],
    with_gradients: bool,
    opts: &LaplaceOptions,
) -> Result<EigenfunctionField<T>, KoopmanError> {
    let n = spec.dim();
    if base.len() != n {
        return Err(KoopmanError::Dimension(format!("base point has {} entries, field has {n}", base.len())));
    }
    if window.dim() != axes.len() || grid_shape.len() != axes.len() {
        return Err(KoopmanError::BadGrid("window, axes and grid shape disagree in dimension".into()));
    }
    if axes.iter().any(|a| *a >= n) || (1..axes.len()).any(|i| axes[..i].contains(&axes[i])) {
        return Err(KoopmanError::BadGrid("axes must be distinct state indices".into()));
    }
    if window.is_degenerate() {
        return Err(KoopmanError::BadGrid("window has a degenerate or non-finite axis".into()));
    }
    if grid_shape.iter().any(|m| *m < 2) {
        return Err(KoopmanError::BadGrid("each axis needs at least 2 nodes".into()));
    }
    let mut out = EigenfunctionField {
        window: window.clone(),
        axes: axes.to_vec(),
        base: base.to_vec(),
        grid_shape: grid_shape.to_vec(),
        s1_values: Vec::new(),
        grad_values: None,
        divergent_mask: Vec::new(),
    };
    let results: Vec<Option<(T, Option<Vec<T>>)>> = (0..out.len())
        .into_par_iter()
        .map(|f| {
            let x = out.point(f);
            if with_gradients {
                eval_s1_and_grad(spec, field, &x, opts).ok().map(|(s, g)| (s, Some(g)))
            } else {
                eval_s1(spec, field, &x, opts).ok().map(|s| (s, None))
            }
        })
        .collect();
    let nan = T::nan();
    out.divergent_mask = results.iter().map(|r| r.is_none()).collect();
    out.s1_values = results.iter().map(|r| r.as_ref().map_or(nan, |(s, _)| *s)).collect();
    if with_gradients {
        out.grad_values = Some(
            results
                .iter()
                .map(|r| r.as_ref().and_then(|(_, g)| g.clone()).unwrap_or_else(|| vec![nan; n]))
                .collect(),
        );
    }
    Ok(out)
}

/// Contour of `|s₁| = level` on the branch `s₁ = sign·level`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Polyline<T> {
    pub level: T,
    pub sign: i8,
    pub closed: bool,
    /// Points in window coordinates of the cross-section.
    pub points: Vec<[T; 2]>,
}

/// Marching squares on a 2D field. Each level `α` is traced on both
/// branches `s₁ = ±α` (once for `α = 0`); cells touching a divergent
/// node are skipped.
pub fn extract_isostables<T: Real>(
    field2d: &EigenfunctionField<T>,
    levels: &[T],
) -> Result<Vec<Polyline<T>>, KoopmanError> {
    if field2d.grid_shape.len() != 2 {
        return Err(KoopmanError::BadGrid("isostables need a 2D cross-section".into()));
    }
    let mut out = Vec::new();
    for &level in levels {
        let level = level.abs();
        let signs: &[i8] = if level == T::zero() { &[1] } else { &[1, -1] };
        for &sign in signs {
            let target = if sign > 0 { level } else { -level };
            for (closed, points) in march(field2d, target) {
                out.push(Polyline { level, sign, closed, points });
            }
        }
    }
    Ok(out)
}

/// Edge identity: (`i`, `j`, horizontal?) for the edge leaving node `(i, j)`
/// along axis 0 (`true`) or axis 1.
type EdgeKey = (usize, usize, bool);

fn march<T: Real>(g: &EigenfunctionField<T>, c: T) -> Vec<(bool, Vec<[T; 2]>)> {
    let (m0, m1) = (g.grid_shape[0], g.grid_shape[1]);
    let val = |i: usize, j: usize| g.s1_values[i * m1 + j];
    let bad = |i: usize, j: usize| g.divergent_mask[i * m1 + j];
    let mut points: HashMap<EdgeKey, [T; 2]> = HashMap::new();
    let mut segments: Vec<(EdgeKey, EdgeKey)> = Vec::new();
    let mut crossing = |e: EdgeKey| -> [T; 2] {
        *points.entry(e).or_insert_with(|| {
            let (i, j, along0) = e;
            let (i2, j2) = if along0 { (i + 1, j) } else { (i, j + 1) };
            let (a, b) = (val(i, j), val(i2, j2));
            let t = if b == a { T::lit(0.5) } else { ((c - a) / (b - a)).max(T::zero()).min(T::one()) };
            let p0 = [g.axis_coord(0, i), g.axis_coord(1, j)];
            let p1 = [g.axis_coord(0, i2), g.axis_coord(1, j2)];
            [p0[0] + t * (p1[0] - p0[0]), p0[1] + t * (p1[1] - p0[1])]
        })
    };
    for i in 0..m0 - 1 {
        for j in 0..m1 - 1 {
            if bad(i, j) || bad(i + 1, j) || bad(i, j + 1) || bad(i + 1, j + 1) {
                continue;
            }
            // Corners counter-clockwise: (i,j), (i+1,j), (i+1,j+1), (i,j+1).
            let v = [val(i, j), val(i + 1, j), val(i + 1, j + 1), val(i, j + 1)];
            let above: Vec<bool> = v.iter().map(|x| *x >= c).collect();
            let case = above.iter().enumerate().fold(0u8, |acc, (k, b)| acc | (u8::from(*b) << k));
            // Edges between consecutive corners.
            let edge = [(i, j, true), (i + 1, j, false), (i, j + 1, true), (i, j, false)];
            let segs: &[(usize, usize)] = match case {
                0 | 15 => &[],
                1 | 14 => &[(3, 0)],
                2 | 13 => &[(0, 1)],
                3 | 12 => &[(3, 1)],
                4 | 11 => &[(1, 2)],
                6 | 9 => &[(0, 2)],
                7 | 8 => &[(2, 3)],
                5 | 10 => {
                    let centre = (v[0] + v[1] + v[2] + v[3]) / T::lit(4.0);
                    // Saddle: join the corners on the centre's side.
                    if (centre >= c) == (case == 5) {
                        &[(3, 2), (0, 1)]
                    } else {
                        &[(3, 0), (1, 2)]
                    }
                }
                _ => unreachable!(),
            };
            for &(a, b) in segs {
                crossing(edge[a]);
                crossing(edge[b]);
                segments.push((edge[a], edge[b]));
            }
        }
    }
    chain(&segments, &points)
}

/// Joins segments sharing an edge crossing into polylines.
fn chain<T: Real>(segments: &[(EdgeKey, EdgeKey)], points: &HashMap<EdgeKey, [T; 2]>) -> Vec<(bool, Vec<[T; 2]>)> {
    let mut at: HashMap<EdgeKey, Vec<usize>> = HashMap::new();
    for (s, (a, b)) in segments.iter().enumerate() {
        at.entry(*a).or_default().push(s);
        at.entry(*b).or_default().push(s);
    }
    let mut used = vec![false; segments.len()];
    let mut out = Vec::new();
    let other = |s: usize, e: EdgeKey| if segments[s].0 == e { segments[s].1 } else { segments[s].0 };
    let next_unused = |e: EdgeKey, used: &[bool]| at[&e].iter().copied().find(|s| !used[*s]);
    // Open chains first (start at degree-1 endpoints), then loops; segment
    // order keeps the output deterministic.
    let mut starts: Vec<(usize, EdgeKey)> = Vec::new();
    for (s, (a, b)) in segments.iter().enumerate() {
        for e in [*a, *b] {
            if at[&e].len() == 1 {
                starts.push((s, e));
            }
        }
    }
    starts.extend(segments.iter().enumerate().map(|(s, (a, _))| (s, *a)));
    for (s0, e0) in starts {
        if used[s0] {
            continue;
        }
        used[s0] = true;
        let mut keys = vec![e0, other(s0, e0)];
        loop {
            let tail = *keys.last().unwrap();
            match next_unused(tail, &used) {
                Some(s) => {
                    used[s] = true;
                    keys.push(other(s, tail));
                }
                None => break,
            }
        }
        let closed = keys.len() > 2 && keys.first() == keys.last();
        if closed {
            keys.pop();
        }
        out.push((closed, keys.iter().map(|k| points[k]).collect()));
    }
    out
}

/// `level sign x y` rows, a blank line between polylines; closed loops
/// repeat their first point.
pub fn write_polylines<T: Real, W: Write>(polylines: &[Polyline<T>], mut w: W) -> io::Result<()> {
    for p in polylines {
        let mut pts = p.points.clone();
        if p.closed {
            pts.push(p.points[0]);
        }
        for q in pts {
            writeln!(w, "{:e} {} {:e} {:e}", p.level.as_f64(), p.sign, q[0].as_f64(), q[1].as_f64())?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::linear_field;

    fn linear2() -> (VectorField, KoopmanSpec<f64>) {
        let a = Matrix::from_rows(vec![vec![-1.0, 0.5], vec![0.3, -2.0]]).unwrap();
        let f = linear_field(&a);
        let spec = KoopmanSpec::new(&f, &[0.0, 0.0]).unwrap();
        (f, spec)
    }

    #[test]
    fn linear_s1_is_w1_dot_x() {
        let (f, spec) = linear2();
        let opts = LaplaceOptions::default();
        for x in [[1.0, 0.0], [0.3, -2.0], [-1.5, 0.7]] {
            let s = eval_s1(&spec, &f, &x, &opts).unwrap();
            let want = dot(&spec.w1, &x);
            assert!((s - want).abs() <= 1e-6 * want.abs().max(1.0), "{s} vs {want}");
            let (s2, g) = eval_s1_and_grad(&spec, &f, &x, &opts).unwrap();
            assert!((s2 - want).abs() <= 1e-6 * want.abs().max(1.0));
            for k in 0..2 {
                assert!((g[k] - spec.w1[k]).abs() < 1e-7);
            }
        }
        assert_eq!(eval_s1(&spec, &f, &[0.0, 0.0], &opts).unwrap(), 0.0);
        assert!((dot(&spec.v1, &spec.w1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn average_form_approaches_terminal() {
        let (f, spec) = linear2();
        let x = [1.0, 1.0];
        let opts = LaplaceOptions { method: LaplaceMethod::Average, horizon: Some(200.0), ..Default::default() };
        let avg = eval_s1(&spec, &f, &x, &opts).unwrap();
        let want = dot(&spec.w1, &x);
        assert!((avg - want).abs() < 1e-2 * want.abs(), "{avg} vs {want}");
    }

    #[test]
    fn unstable_point_refused() {
        let f = linear_field(&Matrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, -1.0]]).unwrap());
        assert!(matches!(KoopmanSpec::<f64>::new(&f, &[0.0, 0.0]), Err(KoopmanError::NotReady(_))));
    }

    #[test]
    fn divergence_detected() {
        // Bistable: x* = -1 stable, x = 1 stable, 0 unstable.
        let f = VectorField::parse("x - x^3", &["x"], &Default::default()).unwrap();
        let spec = KoopmanSpec::new(&f, &[-1.0]).unwrap();
        let opts = LaplaceOptions::default();
        assert!(eval_s1(&spec, &f, &[-0.5], &opts).is_ok());
        assert!(matches!(eval_s1(&spec, &f, &[0.5], &opts), Err(KoopmanError::Divergent { .. })));
    }

    #[test]
    fn grid_plane_and_contours() {
        let (f, spec) = linear2();
        let w = Window::new(vec![-1.0, -1.0], vec![1.0, 1.0]);
        let opts = LaplaceOptions::default();
        let g = eval_field_on_grid(&spec, &f, &w, &[21, 21], false, &opts).unwrap();
        for k in 0..g.len() {
            let x = g.point(k);
            assert!((g.s1_values[k] - dot(&spec.w1, &x)).abs() < 1e-4);
        }
        assert!(!g.divergent_mask.iter().any(|d| *d));
        let y = [0.13, -0.41];
        assert!((g.interpolate(&y).unwrap() - dot(&spec.w1, &y)).abs() < 1e-6);

        let lines = extract_isostables(&g, &[0.0, 0.3, 50.0]).unwrap();
        assert!(lines.iter().all(|p| p.level != 50.0));
        let zero: Vec<_> = lines.iter().filter(|p| p.level == 0.0).collect();
        assert_eq!(zero.len(), 1);
        for p in &lines {
            for q in &p.points {
                let s = spec.w1[0] * q[0] + spec.w1[1] * q[1];
                assert!((s - p.sign as f64 * p.level).abs() < 1e-9);
            }
        }
        assert_eq!(lines.iter().filter(|p| p.level == 0.3).count(), 2);

        let bad = Window::new(vec![0.0, 0.0], vec![0.0, 1.0]);
        assert!(matches!(
            eval_field_on_grid(&spec, &f, &bad, &[2, 2], false, &opts),
            Err(KoopmanError::BadGrid(_))
        ));
    }

    #[test]
    fn closed_contour_on_bowl() {
        let mut g = EigenfunctionField {
            window: Window::new(vec![-1.0, -1.0], vec![1.0, 1.0]),
            axes: vec![0, 1],
            base: vec![0.0, 0.0],
            grid_shape: vec![11, 11],
            s1_values: vec![],
            grad_values: None,
            divergent_mask: vec![false; 121],
        };
        g.s1_values = (0..121)
            .map(|f| {
                let p = g.point(f);
                p[0] * p[0] + p[1] * p[1]
            })
            .collect();
        let lines = extract_isostables(&g, &[0.25]).unwrap();
        let pos: Vec<_> = lines.iter().filter(|p| p.sign > 0).collect();
        assert_eq!(pos.len(), 1);
        assert!(pos[0].closed);
        assert!(pos[0].points.len() >= 8);
    }
}

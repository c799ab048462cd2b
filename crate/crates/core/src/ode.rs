//! Adaptive Dormand-Prince 5(4) integration, variational equations,
//! equilibria and basin probes.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::scalar::Real;
use crate::vf::{EvalError, VectorField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t}; stiffest state is index {state}")]
    StepUnderflow { t: f64, state: usize },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("step budget of {0} exhausted")]
    TooManySteps(usize),
    #[error("tolerances must lie in [1e-13, 1e-2], got rel {rel}, abs {abs}")]
    BadTolerance { rel: f64, abs: f64 },
    #[error("t_end must be positive and finite")]
    BadHorizon,
    #[error("output times must be sorted and lie in [0, t_end]")]
    BadTimes,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("singular Jacobian at Newton iterate {iter}")]
    SingularJacobian { iter: usize },
    #[error("Newton did not converge in {iters} iterations (residual {residual:e})")]
    NoConvergence { iters: usize, residual: f64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { rel: 1e-9, abs: 1e-12 }
    }
}

impl Tolerances {
    pub fn new(rel: f64, abs: f64) -> Self {
        Tolerances { rel, abs }
    }

    fn validate(&self) -> Result<(), OdeError> {
        let ok = |v: f64| (1e-13..=1e-2).contains(&v);
        if ok(self.rel) && ok(self.abs) {
            Ok(())
        } else {
            Err(OdeError::BadTolerance { rel: self.rel, abs: self.abs })
        }
    }

    /// Both tolerances divided by `factor`, clamped to the valid range.
    pub fn tightened(&self, factor: f64) -> Self {
        Tolerances { rel: (self.rel / factor).max(1e-13), abs: (self.abs / factor).max(1e-13) }
    }
}

pub const MAX_STEPS: usize = 2_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub states: Vec<Vec<T>>,
    pub derivs: Vec<Vec<T>>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub tol_used: Tolerances,
}

impl<T: Real> Trajectory<T> {
    pub fn final_state(&self) -> &[T] {
        self.states.last().expect("trajectory holds at least the initial state")
    }

    pub fn t_end(&self) -> T {
        *self.times.last().unwrap()
    }

    /// Cubic Hermite interpolation between accepted steps.
    pub fn interpolate(&self, t: T) -> Vec<T> {
        let k = match self.times.binary_search_by(|s| s.partial_cmp(&t).unwrap()) {
            Ok(k) => return self.states[k].clone(),
            Err(0) => return self.states[0].clone(),
            Err(k) if k >= self.times.len() => return self.final_state().to_vec(),
            Err(k) => k - 1,
        };
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let h00 = (T::one() + two * s) * (T::one() - s) * (T::one() - s);
        let h10 = s * (T::one() - s) * (T::one() - s);
        let h01 = s * s * (three - two * s);
        let h11 = s * s * (s - T::one());
        (0..self.states[k].len())
            .map(|i| {
                h00 * self.states[k][i]
                    + h10 * h * self.derivs[k][i]
                    + h01 * self.states[k + 1][i]
                    + h11 * h * self.derivs[k + 1][i]
            })
            .collect()
    }

    /// Plain-text dump: `t x1 ... xn`, one row per accepted step.
    pub fn write_dump<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (t, x) in self.times.iter().zip(&self.states) {
            write!(w, "{:e}", t.as_f64())?;
            for v in x {
                write!(w, " {:e}", v.as_f64())?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// State together with tracked tangent directions.
#[derive(Clone, Debug, PartialEq)]
pub struct ProlongedState<T> {
    pub t: T,
    pub x: Vec<T>,
    /// Columns are `∂φ(t,x)·d_k` for the injected directions `d_k`.
    pub dx: Matrix<T>,
}

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `ẏ = rhs(y)` from `t = 0` to `t_end`, landing exactly on each
/// of `stops`. Every accepted step is recorded. `stiffest` names the state
/// to blame on step-size underflow.
pub fn solve<T, F, S>(
    rhs: F,
    y0: &[T],
    t_end: T,
    stops: &[T],
    tol: Tolerances,
    stiffest: S,
) -> Result<(Trajectory<T>, Vec<Vec<T>>), OdeError>
where
    T: Real,
    F: Fn(&[T], &mut [T]) -> Result<(), EvalError>,
    S: Fn(&[T]) -> usize,
{
    tol.validate()?;
    if !(t_end > T::zero()) || !t_end.is_finite() {
        return Err(OdeError::BadHorizon);
    }
    if stops.windows(2).any(|w| w[1] < w[0]) || stops.iter().any(|s| *s < T::zero() || *s > t_end) {
        return Err(OdeError::BadTimes);
    }
    let n = y0.len();
    let (rtol, atol) = (T::lit(tol.rel), T::lit(tol.abs));
    let mut y = y0.to_vec();
    if y.iter().any(|v| !v.is_finite()) {
        return Err(OdeError::NonFinite { t: 0.0 });
    }
    let mut f0 = vec![T::zero(); n];
    rhs(&y, &mut f0)?;
    if f0.iter().any(|v| !v.is_finite()) {
        return Err(OdeError::NonFinite { t: 0.0 });
    }
    let mut traj = Trajectory {
        times: vec![T::zero()],
        states: vec![y.clone()],
        derivs: vec![f0.clone()],
        accepted_steps: 0,
        rejected_steps: 0,
        tol_used: tol,
    };
    let mut stop_states = Vec::with_capacity(stops.len());
    let mut next_stop = 0;
    while next_stop < stops.len() && stops[next_stop] == T::zero() {
        stop_states.push(y.clone());
        next_stop += 1;
    }

    let scale = |a: &[T], b: &[T], i: usize| atol + rtol * a[i].abs().max(b[i].abs());
    let wnorm = |v: &[T], a: &[T], b: &[T]| -> T {
        let s: T = (0..n).map(|i| (v[i] / scale(a, b, i)).powi(2)).sum();
        (s / T::lit(n.max(1) as f64)).sqrt()
    };

    // Initial step (Hairer & Wanner, II.4).
    let mut h = {
        let d0 = wnorm(&y, &y, &y);
        let d1 = wnorm(&f0, &y, &y);
        let h0 = if d0 < T::lit(1e-5) || d1 < T::lit(1e-5) { T::lit(1e-6) } else { T::lit(0.01) * d0 / d1 };
        let h0 = h0.min(t_end);
        let y1: Vec<T> = (0..n).map(|i| y[i] + h0 * f0[i]).collect();
        let mut f1 = vec![T::zero(); n];
        let d2 = match rhs(&y1, &mut f1) {
            Ok(()) => {
                let diff: Vec<T> = (0..n).map(|i| f1[i] - f0[i]).collect();
                wnorm(&diff, &y, &y) / h0
            }
            Err(_) => T::infinity(),
        };
        let m = d1.max(d2);
        let h1 = if m <= T::lit(1e-15) {
            (h0 * T::lit(1e-3)).max(T::lit(1e-6))
        } else {
            (T::lit(0.01) / m).powf(T::lit(0.2))
        };
        (T::lit(100.0) * h0).min(h1).min(t_end)
    };

    let mut t = T::zero();
    let mut k: Vec<Vec<T>> = vec![vec![T::zero(); n]; 7];
    k[0].clone_from(&f0);
    let mut ytmp = vec![T::zero(); n];
    let mut ynew = vec![T::zero(); n];
    let mut err = vec![T::zero(); n];
    let mut steps = 0usize;
    let eps = T::epsilon();
    while t < t_end {
        steps += 1;
        if steps > MAX_STEPS {
            return Err(OdeError::TooManySteps(MAX_STEPS));
        }
        let target = if next_stop < stops.len() { stops[next_stop] } else { t_end };
        let mut landing = false;
        if t + h >= target || target - (t + h) < T::lit(1e-12) * target.abs().max(T::one()) {
            h = target - t;
            landing = true;
        }
        if h <= T::lit(16.0) * eps * t.abs().max(T::one()) {
            return Err(OdeError::StepUnderflow { t: t.as_f64(), state: stiffest(&y) });
        }
        let mut stage_ok = true;
        for s in 1..7 {
            for i in 0..n {
                let mut acc = T::zero();
                for j in 0..s {
                    let a = A[s][j];
                    if a != 0.0 {
                        acc += T::lit(a) * k[j][i];
                    }
                }
                ytmp[i] = y[i] + h * acc;
            }
            let (head, tail) = k.split_at_mut(s);
            let _ = head;
            if rhs(&ytmp, &mut tail[0]).is_err() || tail[0].iter().any(|v| !v.is_finite()) {
                stage_ok = false;
                break;
            }
            if s == 6 {
                ynew.clone_from(&ytmp);
            }
        }
        if !stage_ok {
            traj.rejected_steps += 1;
            h *= T::lit(0.25);
            continue;
        }
        for i in 0..n {
            let mut acc = T::zero();
            for j in 0..7 {
                if E[j] != 0.0 {
                    acc += T::lit(E[j]) * k[j][i];
                }
            }
            err[i] = h * acc;
        }
        let en = wnorm(&err, &y, &ynew);
        if !en.is_finite() {
            traj.rejected_steps += 1;
            h *= T::lit(0.25);
            continue;
        }
        let fac = if en == T::zero() {
            T::lit(10.0)
        } else {
            (T::lit(0.9) * en.powf(T::lit(-0.2))).max(T::lit(0.2)).min(T::lit(10.0))
        };
        if en <= T::one() {
            t = if landing { target } else { t + h };
            y.clone_from(&ynew);
            let (first, rest) = k.split_at_mut(6);
            first[0].clone_from(&rest[0]);
            traj.accepted_steps += 1;
            traj.times.push(t);
            traj.states.push(y.clone());
            traj.derivs.push(k[0].clone());
            if landing && next_stop < stops.len() && t == stops[next_stop] {
                while next_stop < stops.len() && stops[next_stop] == t {
                    stop_states.push(y.clone());
                    next_stop += 1;
                }
            }
            h *= fac;
        } else {
            traj.rejected_steps += 1;
            h *= fac.min(T::one());
        }
    }
    Ok((traj, stop_states))
}

fn stiffest_state<T: Real>(field: &VectorField, x: &[T]) -> usize {
    let n = field.dim();
    match field.jacobian(&x[..n]) {
        Ok(j) => (0..n)
            .max_by(|&a, &b| j[(a, a)].abs().partial_cmp(&j[(b, b)].abs()).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap_or(0),
        Err(_) => 0,
    }
}

/// `φ(t, x0)` for `t ∈ [0, t_end]`.
pub fn integrate<T: Real>(
    field: &VectorField,
    x0: &[T],
    t_end: T,
    tol: Tolerances,
) -> Result<Trajectory<T>, OdeError> {
    integrate_with_stops(field, x0, t_end, &[], tol).map(|(t, _)| t)
}

/// As [`integrate`], also returning the states at `stops`.
pub fn integrate_with_stops<T: Real>(
    field: &VectorField,
    x0: &[T],
    t_end: T,
    stops: &[T],
    tol: Tolerances,
) -> Result<(Trajectory<T>, Vec<Vec<T>>), OdeError> {
    if x0.len() != field.dim() {
        return Err(OdeError::Dimension(format!("x0 has {} entries, field has {}", x0.len(), field.dim())));
    }
    solve(|x, out| field.eval_into(x, out), x0, t_end, stops, tol, |x| stiffest_state(field, x))
}

/// Joint integration of `ẋ = f(x)` and `Ẋ = J(x) X` with `X(0) = directions`,
/// sampled at `times`.
pub fn integrate_prolonged<T: Real>(
    field: &VectorField,
    x0: &[T],
    directions: &Matrix<T>,
    t_end: T,
    times: &[T],
    tol: Tolerances,
) -> Result<Vec<ProlongedState<T>>, OdeError> {
    let n = field.dim();
    if x0.len() != n || directions.rows() != n {
        return Err(OdeError::Dimension(format!(
            "x0 has {} entries and directions {} rows, field has dimension {n}",
            x0.len(),
            directions.rows()
        )));
    }
    let k = directions.cols();
    let mut y0 = x0.to_vec();
    for j in 0..k {
        y0.extend(directions.column(j));
    }
    let rhs = |y: &[T], out: &mut [T]| -> Result<(), EvalError> {
        let x = &y[..n];
        field.eval_into(x, &mut out[..n])?;
        for j in 0..k {
            let col = &y[n * (j + 1)..n * (j + 2)];
            let (_, jv) = field.jvp(x, col)?;
            out[n * (j + 1)..n * (j + 2)].copy_from_slice(&jv);
        }
        Ok(())
    };
    let (_, stops) = solve(rhs, &y0, t_end, times, tol, |y| stiffest_state(field, &y[..n]))?;
    Ok(times
        .iter()
        .zip(stops)
        .map(|(t, y)| ProlongedState {
            t: *t,
            x: y[..n].to_vec(),
            dx: Matrix::from_fn(n, k, |i, j| y[n * (j + 1) + i]),
        })
        .collect())
}

fn residual_inf<T: Real>(field: &VectorField, x: &[T]) -> Result<T, EvalError> {
    let f = field.eval(x)?;
    Ok(f.iter()
        .zip(field.epsilon_scaling())
        .fold(T::zero(), |m, (v, e)| m.max((*v * T::lit(*e)).abs())))
}

/// Damped Newton on `f(x) = 0` (unscaled right-hand sides), halving the
/// step until the residual decreases, down to a floor of `2⁻²⁰`.
pub fn find_equilibrium<T: Real>(
    field: &VectorField,
    guess: &[T],
    tol: T,
    max_iter: usize,
) -> Result<Vec<T>, OdeError> {
    let n = field.dim();
    if guess.len() != n {
        return Err(OdeError::Dimension(format!("guess has {} entries, field has {n}", guess.len())));
    }
    let mut x = guess.to_vec();
    let mut r = residual_inf(field, &x)?;
    for iter in 0..max_iter {
        if r <= tol {
            return Ok(polish(field, x, r));
        }
        let f = field.eval(&x)?;
        let jac = field.jacobian(&x)?;
        let neg: Vec<T> = f.iter().map(|v| -*v).collect();
        let dx = jac.solve(&neg).map_err(|_| OdeError::SingularJacobian { iter })?;
        let mut lam = T::one();
        let floor = T::lit(2f64.powi(-20));
        loop {
            let trial: Vec<T> = x.iter().zip(&dx).map(|(a, d)| *a + lam * *d).collect();
            let rt = residual_inf(field, &trial).unwrap_or(T::infinity());
            if rt < r || lam <= floor {
                if rt.is_finite() {
                    x = trial;
                    r = rt;
                }
                break;
            }
            lam = lam * T::lit(0.5);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(OdeError::NonFinite { t: 0.0 });
        }
    }
    if r <= tol {
        Ok(polish(field, x, r))
    } else {
        Err(OdeError::NoConvergence { iters: max_iter, residual: r.as_f64() })
    }
}

/// One extra undamped Newton step, kept only if the residual does not grow.
/// Laplace estimates amplify any leftover `f(x*)` by `e^{|λ₁|T}`.
fn polish<T: Real>(field: &VectorField, x: Vec<T>, r: T) -> Vec<T> {
    let step = || -> Option<Vec<T>> {
        let f = field.eval(&x).ok()?;
        let neg: Vec<T> = f.iter().map(|v| -*v).collect();
        let dx = field.jacobian(&x).ok()?.solve(&neg).ok()?;
        Some(x.iter().zip(&dx).map(|(a, d)| *a + *d).collect())
    };
    match step() {
        Some(y) if residual_inf(field, &y).map_or(false, |ry| ry <= r) => y,
        _ => x,
    }
}

/// Default capture radius `1e-3·(1 + ‖x*‖)`.
pub fn default_capture_radius<T: Real>(x_star: &[T]) -> T {
    let norm = x_star.iter().map(|v| *v * *v).sum::<T>().sqrt();
    T::lit(1e-3) * (T::one() + norm)
}

/// Whether the trajectory from `x0` stays within `capture_radius` of
/// `x_star` over the final 10% of `horizon`.
pub fn basin_probe<T: Real>(
    field: &VectorField,
    x_star: &[T],
    x0: &[T],
    horizon: T,
    capture_radius: T,
    tol: Tolerances,
) -> Result<bool, OdeError> {
    let from = horizon * T::lit(0.9);
    let (traj, stops) = integrate_with_stops(field, x0, horizon, &[from], tol)?;
    let dist = |x: &[T]| x.iter().zip(x_star).map(|(a, b)| (*a - *b).powi(2)).sum::<T>().sqrt();
    let tail_ok = traj
        .times
        .iter()
        .zip(&traj.states)
        .filter(|(t, _)| **t >= from)
        .all(|(_, x)| dist(x) <= capture_radius);
    Ok(tail_ok && dist(&stops[0]) <= capture_radius)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::matrix_exp;
    use std::collections::BTreeMap;

    fn linear() -> (VectorField, Matrix<f64>) {
        let f = VectorField::parse("-3*x + 7*y; 2*x - 7*y", &["x", "y"], &BTreeMap::new()).unwrap();
        let a = Matrix::from_rows(vec![vec![-3.0, 7.0], vec![2.0, -7.0]]).unwrap();
        (f, a)
    }

    #[test]
    fn linear_trajectory_matches_expm() {
        let (f, a) = linear();
        let x0 = [1.0, -0.5];
        let traj = integrate(&f, &x0, 3.0, Tolerances::new(1e-9, 1e-12)).unwrap();
        for (t, x) in traj.times.iter().zip(&traj.states) {
            let want = matrix_exp(&a, *t).unwrap().mul_vec(&x0);
            assert!((x[0] - want[0]).abs() < 1e-7 && (x[1] - want[1]).abs() < 1e-7);
        }
        assert_eq!(traj.t_end(), 3.0);
        let mid = traj.interpolate(1.2345);
        let want = matrix_exp(&a, 1.2345).unwrap().mul_vec(&x0);
        assert!((mid[0] - want[0]).abs() < 1e-6);
    }

    #[test]
    fn equilibrium_is_fixed() {
        let (f, _) = linear();
        let traj = integrate(&f, &[0.0f64, 0.0], 5.0, Tolerances::default()).unwrap();
        assert!(traj.states.iter().all(|x| x.iter().all(|v| v.abs() <= 1e-12)));
    }

    #[test]
    fn prolonged_linear_matches_expm() {
        let (f, a) = linear();
        let dirs = Matrix::identity(2);
        let out = integrate_prolonged(&f, &[0.3, 0.1], &dirs, 2.0, &[0.0, 0.5, 2.0], Tolerances::new(1e-10, 1e-12))
            .unwrap();
        assert_eq!(out[0].dx, dirs);
        for s in &out[1..] {
            let e = matrix_exp(&a, s.t).unwrap();
            assert!(s.dx.sub(&e).max_abs() < 1e-7);
        }
        let zero = integrate_prolonged(&f, &[0.3, 0.1], &Matrix::zeros(2, 1), 1.0, &[1.0], Tolerances::default())
            .unwrap();
        assert_eq!(zero[0].dx.max_abs(), 0.0);
    }

    #[test]
    fn newton_on_linear_field_is_one_step() {
        let (f, _) = linear();
        let x = find_equilibrium(&f, &[4.0f64, -9.0], 1e-12, 1).unwrap();
        assert!(x.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn bad_inputs() {
        let (f, _) = linear();
        assert!(matches!(integrate(&f, &[0.0, 0.0], 1.0, Tolerances::new(1.0, 1e-9)), Err(OdeError::BadTolerance { .. })));
        assert_eq!(integrate(&f, &[0.0, 0.0], -1.0, Tolerances::default()), Err(OdeError::BadHorizon));
    }

    #[test]
    fn blow_up_reports_underflow() {
        let f = VectorField::parse("x^2", &["x"], &BTreeMap::new()).unwrap();
        let e = integrate(&f, &[1.0], 2.0, Tolerances::default()).unwrap_err();
        assert!(matches!(e, OdeError::StepUnderflow { state: 0, .. } | OdeError::TooManySteps(_)), "{e:?}");
    }

    #[test]
    fn basin_probe_at_equilibrium() {
        let (f, _) = linear();
        assert!(basin_probe(&f, &[0.0, 0.0], &[0.0, 0.0], 10.0, 1e-3, Tolerances::default()).unwrap());
        assert!(basin_probe(&f, &[0.0, 0.0], &[1.0, 1.0], 30.0, 1e-3, Tolerances::default()).unwrap());
    }
}

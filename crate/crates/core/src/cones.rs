//! Cones, monotonicity checks, sampled eventual-monotonicity certificates
//! and simulation probes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::koopman::{eval_s1_and_grad, KoopmanError, KoopmanSpec, LaplaceOptions, Polyline};
use crate::linalg::{dot, null_space, Matrix};
use crate::linear::{LorentzConeSpec, Membership};
use crate::ode::{integrate_with_stops, Tolerances};
use crate::sampling::log_grid;
use crate::scalar::Real;
use crate::vf::VectorField;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConeError {
    #[error("invalid cone: {0}")]
    BadCone(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("no samples given")]
    NoSamples,
    #[error("every sample diverged; none lies in the basin")]
    AllDivergent,
    #[error(transparent)]
    Koopman(#[from] KoopmanError),
}

/// Relative tolerance for (non-strict) membership tests.
pub const MEMBERSHIP_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "T: Real")]
pub enum Cone<T> {
    /// `diag(σ)·ℝⁿ₊`.
    OrthantSignature { sigma: Vec<i8> },
    TransformedLorentz { spec: LorentzConeSpec<T> },
    /// Conic hull of `generators`; `facets` are inward normals of its
    /// supporting half-spaces.
    PolyhedralGenerated { generators: Vec<Vec<T>>, facets: Vec<Vec<T>> },
}

fn inf_norm<T: Real>(y: &[T]) -> T {
    y.iter().fold(T::zero(), |m, v| m.max(v.abs()))
}

fn unit<T: Real>(y: &[T]) -> Vec<T> {
    let n = dot(y, y).sqrt();
    y.iter().map(|v| *v / n).collect()
}

impl<T: Real> Cone<T> {
    pub fn orthant(sigma: Vec<i8>) -> Result<Self, ConeError> {
        if sigma.is_empty() || sigma.iter().any(|s| *s != 1 && *s != -1) {
            return Err(ConeError::BadCone("orthant signature entries must be ±1".into()));
        }
        Ok(Cone::OrthantSignature { sigma })
    }

    pub fn lorentz(spec: LorentzConeSpec<T>) -> Self {
        Cone::TransformedLorentz { spec }
    }

    /// Polyhedral cone from generators spanning a pointed, full-dimensional cone.
    pub fn polyhedral(generators: Vec<Vec<T>>) -> Result<Self, ConeError> {
        let n = generators.first().map_or(0, |g| g.len());
        if n == 0 || generators.iter().any(|g| g.len() != n) {
            return Err(ConeError::BadCone("generators must be non-empty and of equal length".into()));
        }
        if generators.iter().any(|g| g.iter().any(|v| !v.is_finite()) || inf_norm(g) == T::zero()) {
            return Err(ConeError::BadCone("generators must be finite and non-zero".into()));
        }
        let gens: Vec<Vec<T>> = generators.iter().map(|g| unit(g)).collect();
        let facets = facets_of(&gens);
        if facets.len() < n {
            return Err(ConeError::BadCone("generators do not span a pointed full-dimensional cone".into()));
        }
        Ok(Cone::PolyhedralGenerated { generators: gens, facets })
    }

    pub fn dim(&self) -> usize {
        match self {
            Cone::OrthantSignature { sigma } => sigma.len(),
            Cone::TransformedLorentz { spec } => spec.w.cols(),
            Cone::PolyhedralGenerated { generators, .. } => generators[0].len(),
        }
    }

    /// `y ∈ K` up to a relative band of [`MEMBERSHIP_TOL`].
    pub fn contains(&self, y: &[T]) -> bool {
        let tol = T::lit(MEMBERSHIP_TOL) * inf_norm(y);
        match self {
            Cone::OrthantSignature { sigma } => y.iter().zip(sigma).all(|(v, s)| T::lit(*s as f64) * *v >= -tol),
            Cone::TransformedLorentz { spec } => spec.membership(y) != Membership::Outside,
            Cone::PolyhedralGenerated { facets, .. } => facets.iter().all(|h| dot(h, y) >= -tol),
        }
    }

    /// `y ∈ int K` with relative margin `margin·‖y‖∞`.
    pub fn strictly_contains(&self, y: &[T], margin: T) -> bool {
        let scale = inf_norm(y);
        if scale == T::zero() {
            return false;
        }
        let tol = margin.max(T::lit(MEMBERSHIP_TOL)) * scale;
        match self {
            Cone::OrthantSignature { sigma } => y.iter().zip(sigma).all(|(v, s)| T::lit(*s as f64) * *v > tol),
            Cone::TransformedLorentz { spec } => {
                let (head, rest) = spec.coordinates(y);
                head - rest > margin.max(T::lit(MEMBERSHIP_TOL)) * head.abs().max(rest)
                    && spec.membership(y) == Membership::Inside
            }
            Cone::PolyhedralGenerated { facets, .. } => facets.iter().all(|h| dot(h, y) > tol),
        }
    }

    /// `cᵀy ≥ 0` for all `y ∈ K`.
    pub fn dual_contains(&self, c: &[T]) -> bool {
        let tol = T::lit(MEMBERSHIP_TOL) * inf_norm(c);
        match self {
            Cone::OrthantSignature { .. } => self.contains(c),
            Cone::TransformedLorentz { spec } => match spec.dual_coordinates(c) {
                Ok((head, rest)) => head - rest >= -T::lit(MEMBERSHIP_TOL) * head.abs().max(rest),
                Err(_) => false,
            },
            Cone::PolyhedralGenerated { generators, .. } => generators.iter().all(|g| dot(c, g) >= -tol),
        }
    }

    /// `c ∈ int K*`: `cᵀy > 0` for every non-zero `y ∈ K`.
    pub fn strictly_dual_contains(&self, c: &[T], margin: T) -> bool {
        let m = margin.max(T::lit(MEMBERSHIP_TOL));
        match self {
            Cone::OrthantSignature { .. } => self.strictly_contains(c, margin),
            Cone::TransformedLorentz { spec } => match spec.dual_coordinates(c) {
                Ok((head, rest)) => head - rest > m * head.abs().max(rest),
                Err(_) => false,
            },
            Cone::PolyhedralGenerated { generators, .. } => {
                let tol = m * inf_norm(c);
                tol > T::zero() && generators.iter().all(|g| dot(c, g) > tol)
            }
        }
    }

    /// Short human-readable description.
    pub fn describe(&self) -> String {
        match self {
            Cone::OrthantSignature { sigma } => {
                let s: Vec<String> = sigma.iter().map(|v| format!("{v}")).collect();
                format!("orthant ({})", s.join(","))
            }
            Cone::TransformedLorentz { spec } => format!("transformed Lorentz cone (α = {:?})", spec.alpha.iter().map(|a| a.as_f64()).collect::<Vec<_>>()),
            Cone::PolyhedralGenerated { generators, .. } => format!("polyhedral cone with {} generators", generators.len()),
        }
    }
}

/// Inward normals of supporting half-spaces spanned by `n - 1` generators.
fn facets_of<T: Real>(gens: &[Vec<T>]) -> Vec<Vec<T>> {
    let n = gens[0].len();
    let tol = T::lit(1e-12);
    let mut out: Vec<Vec<T>> = Vec::new();
    let mut push = |h: Vec<T>| {
        let h = unit(&h);
        let mut h = h;
        let above = gens.iter().all(|g| dot(&h, g) >= -tol);
        let below = gens.iter().all(|g| dot(&h, g) <= tol);
        if above == below {
            return;
        }
        if below {
            h.iter_mut().for_each(|v| *v = -*v);
        }
        if !out.iter().any(|o| o.iter().zip(&h).all(|(a, b)| (*a - *b).abs() < T::lit(1e-9))) {
            out.push(h);
        }
    };
    if n == 1 {
        push(vec![T::one()]);
        return out;
    }
    let mut idx: Vec<usize> = (0..n - 1).collect();
    let m = gens.len();
    if m < n - 1 {
        return out;
    }
    loop {
        let a = Matrix::from_rows(idx.iter().map(|&i| gens[i].clone()).collect()).expect("equal lengths");
        let h = null_space(&a, 1).into_iter().next().unwrap_or_default();
        let independent = !h.is_empty() && idx.iter().all(|&i| dot(&h, &gens[i]).abs() < T::lit(1e-9));
        if independent && rank_full(&a) {
            push(h);
        }
        // Next combination.
        let mut k = n - 1;
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            if idx[k] < m - (n - 1 - k) {
                idx[k] += 1;
                for l in k + 1..n - 1 {
                    idx[l] = idx[l - 1] + 1;
                }
                break;
            }
        }
    }
}

fn rank_full<T: Real>(a: &Matrix<T>) -> bool {
    a.matmul(&a.transpose()).lu().is_ok()
}

/// Kamke-Müller sign test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case", bound = "T: Real")]
pub enum KamkeMuller<T> {
    MonotoneConsistent,
    Violated { x: Vec<T>, i: usize, j: usize, value: T },
}

/// Checks that `D·J(x)·D` has nonnegative off-diagonal entries for
/// `D = diag(σ)` at every sample.
pub fn kamke_muller_check<T: Real>(
    field: &VectorField,
    samples: &[Vec<T>],
    sigma: &[i8],
) -> Result<KamkeMuller<T>, ConeError> {
    if samples.is_empty() {
        return Err(ConeError::NoSamples);
    }
    if sigma.len() != field.dim() {
        return Err(ConeError::Dimension(format!("signature has {} entries, field has {}", sigma.len(), field.dim())));
    }
    for x in samples {
        let j = field.jacobian(x).map_err(KoopmanError::from)?;
        let tol = T::lit(1e-12) * j.max_abs().max(T::one());
        for r in 0..j.rows() {
            for c in 0..j.cols() {
                if r == c {
                    continue;
                }
                let v = T::lit((sigma[r] * sigma[c]) as f64) * j[(r, c)];
                if v < -tol {
                    return Ok(KamkeMuller::Violated { x: x.clone(), i: r, j: c, value: v });
                }
            }
        }
    }
    Ok(KamkeMuller::MonotoneConsistent)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertVerdict {
    StronglyEventuallyMonotone,
    NecessaryConditionsHold,
    Falsified,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Witness<T> {
    pub point: Vec<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gradient: Option<Vec<T>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<T>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Check<T> {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness<T>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CertReport<T> {
    pub verdict: CertVerdict,
    pub cone: Option<Cone<T>>,
    /// Verdict for the supplied cone hint, when one was given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hint_verdict: Option<CertVerdict>,
    pub evidence: Vec<Check<T>>,
    pub samples_used: usize,
    pub samples_dropped: usize,
    pub margin: T,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl<T: Real> CertReport<T> {
    /// Report for a model whose equilibrium data rule out the analysis.
    pub fn inconclusive(reason: impl Into<String>, margin: T) -> Self {
        CertReport {
            verdict: CertVerdict::Inconclusive,
            cone: None,
            hint_verdict: None,
            evidence: Vec::new(),
            samples_used: 0,
            samples_dropped: 0,
            margin,
            reason: Some(reason.into()),
        }
    }

    pub fn check(&self, name: &str) -> Option<&Check<T>> {
        self.evidence.iter().find(|c| c.name == name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertOptions {
    /// Strictness margin relative to `‖∇s₁‖`.
    pub margin: f64,
    pub laplace: LaplaceOptions,
    /// Tolerance tightening applied before a violation is accepted.
    pub refine_factor: f64,
}

impl Default for CertOptions {
    fn default() -> Self {
        CertOptions { margin: 1e-6, laplace: LaplaceOptions::default(), refine_factor: 100.0 }
    }
}

/// Gradients at the samples that stayed in the basin, in input order.
pub struct SampledGradients<T> {
    pub points: Vec<Vec<T>>,
    pub values: Vec<T>,
    pub gradients: Vec<Vec<T>>,
    pub dropped: usize,
}

pub fn sample_gradients<T: Real>(
    spec: &KoopmanSpec<T>,
    field: &VectorField,
    samples: &[Vec<T>],
    opts: &LaplaceOptions,
) -> SampledGradients<T> {
    let res: Vec<Option<(T, Vec<T>)>> =
        samples.par_iter().map(|x| eval_s1_and_grad(spec, field, x, opts).ok()).collect();
    let mut out = SampledGradients { points: Vec::new(), values: Vec::new(), gradients: Vec::new(), dropped: 0 };
    for (x, r) in samples.iter().zip(res) {
        match r {
            Some((s, g)) => {
                out.points.push(x.clone());
                out.values.push(s);
                out.gradients.push(g);
            }
            None => out.dropped += 1,
        }
    }
    out
}

/// Sampled check of `v₁ᵀ∇s₁(x) > 0`, plus cone membership of `v₁` and
/// dual membership of `∇s₁` when a hint is given. Without a hint a
/// candidate cone is synthesized from the gradients.
pub fn certify_sem<T: Real>(
    spec: &KoopmanSpec<T>,
    field: &VectorField,
    sample_points: &[Vec<T>],
    cone_hint: Option<&Cone<T>>,
    opts: &CertOptions,
) -> Result<CertReport<T>, ConeError> {
    if sample_points.is_empty() {
        return Err(ConeError::NoSamples);
    }
    if let Some(c) = cone_hint {
        if c.dim() != spec.dim() {
            return Err(ConeError::Dimension(format!("cone has dimension {}, field {}", c.dim(), spec.dim())));
        }
    }
    let margin = T::lit(opts.margin);
    let sg = sample_gradients(spec, field, sample_points, &opts.laplace);
    if sg.points.is_empty() {
        return Err(ConeError::AllDivergent);
    }
    let mut evidence = Vec::new();
    evidence.push(Check {
        name: "basin_samples".into(),
        passed: true,
        detail: format!("{} of {} samples converged, {} dropped", sg.points.len(), sample_points.len(), sg.dropped),
        witness: None,
    });

    // Cone-free condition, violations confirmed under tighter tolerances.
    let refined = LaplaceOptions { tol: opts.laplace.tol.tightened(opts.refine_factor), ..opts.laplace };
    let violates = |g: &[T]| dot(&spec.v1, g) <= margin * dot(g, g).sqrt();
    let mut cond_witness = None;
    let mut min_ratio = T::infinity();
    for (x, g) in sg.points.iter().zip(&sg.gradients) {
        let gn = dot(g, g).sqrt();
        if gn > T::zero() {
            min_ratio = min_ratio.min(dot(&spec.v1, g) / gn);
        }
        if violates(g) && cond_witness.is_none() {
            if let Ok((_, g2)) = eval_s1_and_grad(spec, field, x, &refined) {
                if violates(&g2) {
                    cond_witness = Some(Witness {
                        point: x.clone(),
                        gradient: Some(g2.clone()),
                        vector: Some(spec.v1.clone()),
                        value: Some(dot(&spec.v1, &g2)),
                    });
                }
            }
        }
    }
    let cond_ok = cond_witness.is_none();
    evidence.push(Check {
        name: "v1_dot_grad_positive".into(),
        passed: cond_ok,
        detail: format!(
            "min v1·∇s1/‖∇s1‖ = {:.6e} over {} samples, margin {:e}",
            min_ratio.as_f64(),
            sg.points.len(),
            opts.margin
        ),
        witness: cond_witness,
    });

    let mut report = CertReport {
        verdict: if cond_ok { CertVerdict::NecessaryConditionsHold } else { CertVerdict::Falsified },
        cone: None,
        hint_verdict: None,
        evidence,
        samples_used: sg.points.len(),
        samples_dropped: sg.dropped,
        margin,
        reason: None,
    };

    if let Some(cone) = cone_hint {
        let ok = check_cone(spec, field, cone, &sg, &refined, margin, &mut report.evidence, "hint");
        report.hint_verdict = Some(if ok { CertVerdict::StronglyEventuallyMonotone } else { CertVerdict::Falsified });
        if ok && cond_ok {
            report.verdict = CertVerdict::StronglyEventuallyMonotone;
            report.cone = Some(cone.clone());
        }
    } else if cond_ok {
        let synth = synthesize_candidate_cone(&spec.v1, &sg.gradients, margin);
        report.evidence.push(Check {
            name: "cone_synthesis".into(),
            passed: synth.cone.is_some(),
            detail: synth.reason.clone(),
            witness: None,
        });
        if let Some(cone) = synth.cone {
            if check_cone(spec, field, &cone, &sg, &refined, margin, &mut report.evidence, "synthesized") {
                report.verdict = CertVerdict::StronglyEventuallyMonotone;
                report.cone = Some(cone);
            }
        }
    }
    if report.verdict == CertVerdict::NecessaryConditionsHold {
        report.reason = Some("v1·∇s1 > 0 on the samples but no cone was exhibited".into());
    }
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn check_cone<T: Real>(
    spec: &KoopmanSpec<T>,
    field: &VectorField,
    cone: &Cone<T>,
    sg: &SampledGradients<T>,
    refined: &LaplaceOptions,
    margin: T,
    evidence: &mut Vec<Check<T>>,
    tag: &str,
) -> bool {
    let v1_in = cone.strictly_contains(&spec.v1, margin);
    evidence.push(Check {
        name: format!("v1_in_{tag}_cone"),
        passed: v1_in,
        detail: format!("v1 strictly inside {}: {v1_in}", cone.describe()),
        witness: if v1_in {
            None
        } else {
            Some(Witness { point: spec.x_star.clone(), gradient: None, vector: Some(spec.v1.clone()), value: None })
        },
    });
    let mut witness = None;
    for (x, g) in sg.points.iter().zip(&sg.gradients) {
        if !cone.strictly_dual_contains(g, margin) {
            let confirmed = match eval_s1_and_grad(spec, field, x, refined) {
                Ok((_, g2)) => !cone.strictly_dual_contains(&g2, margin),
                Err(_) => false,
            };
            if confirmed {
                witness = Some(Witness { point: x.clone(), gradient: Some(g.clone()), vector: None, value: None });
                break;
            }
        }
    }
    let grads_in = witness.is_none();
    evidence.push(Check {
        name: format!("gradients_in_{tag}_dual"),
        passed: grads_in,
        detail: format!("∇s1 strictly inside the dual cone at {} samples: {grads_in}", sg.points.len()),
        witness,
    });
    v1_in && grads_in
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Synthesis<T> {
    pub cone: Option<Cone<T>>,
    pub reason: String,
}

/// Candidate cone `K` with `∇s₁(x) ∈ int K*` at the samples and
/// `v₁ ∈ int K`: the common strict orthant when there is one, otherwise
/// (n ≤ 3) the dual of the gradients' conic hull.
pub fn synthesize_candidate_cone<T: Real>(v1: &[T], gradients: &[Vec<T>], margin: T) -> Synthesis<T> {
    let n = v1.len();
    let none = |r: &str| Synthesis { cone: None, reason: r.to_string() };
    if gradients.is_empty() || gradients.iter().any(|g| g.len() != n || g.iter().any(|v| !v.is_finite())) {
        return none("gradients must be non-empty, finite and match v1");
    }
    // Common strict sign pattern; near-zero components block it.
    let sign = |v: T, scale: T| {
        if v > margin * scale {
            1
        } else if v < -margin * scale {
            -1
        } else {
            0
        }
    };
    let v1s = inf_norm(v1);
    let mut sigma: Vec<i8> = v1.iter().map(|v| sign(*v, v1s)).collect();
    for g in gradients {
        let s = inf_norm(g);
        for k in 0..n {
            if sign(g[k], s) != sigma[k] {
                sigma[k] = 0;
            }
        }
    }
    if sigma.iter().all(|s| *s != 0) {
        return Synthesis {
            cone: Some(Cone::OrthantSignature { sigma }),
            reason: "common strict sign pattern of v1 and all gradients".into(),
        };
    }
    let cone = match n {
        2 => dual_wedge_2d(gradients, margin),
        3 => dual_hull_3d(gradients, margin),
        _ => return none("polyhedral synthesis limited to n ≤ 3"),
    };
    match cone {
        Err(reason) => none(&reason),
        Ok(c) if c.strictly_contains(v1, margin) => {
            Synthesis { cone: Some(c), reason: "dual of the gradients' conic hull".into() }
        }
        Ok(_) => none("v1 is not strictly inside the synthesized cone"),
    }
}

fn dual_wedge_2d<T: Real>(gradients: &[Vec<T>], margin: T) -> Result<Cone<T>, String> {
    let pi = T::lit(std::f64::consts::PI);
    let two_pi = T::lit(2.0) * pi;
    let mut angles: Vec<T> = gradients.iter().map(|g| g[1].atan2(g[0])).collect();
    angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // The gradients occupy the complement of the largest empty arc.
    let m = angles.len();
    let mut best = (T::zero(), 0usize);
    for i in 0..m {
        let next = if i + 1 < m { angles[i + 1] } else { angles[0] + two_pi };
        if next - angles[i] > best.0 {
            best = (next - angles[i], i);
        }
    }
    let i = best.1;
    let pad = T::lit(2.0) * margin.max(T::lit(MEMBERSHIP_TOL));
    let a = angles[(i + 1) % m] - pad;
    let mut b = angles[i] + pad;
    if b < a {
        b += two_pi;
    }
    if b - a >= pi {
        return Err("gradients are not contained in an open half-plane".into());
    }
    let half = pi / T::lit(2.0);
    let (r1, r2) = (b - half, a + half);
    Cone::polyhedral(vec![vec![r1.cos(), r1.sin()], vec![r2.cos(), r2.sin()]]).map_err(|e| e.to_string())
}

fn cross<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    vec![a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dual_hull_3d<T: Real>(gradients: &[Vec<T>], margin: T) -> Result<Cone<T>, String> {
    let units: Vec<Vec<T>> = gradients.iter().filter(|g| inf_norm(g) > T::zero()).map(|g| unit(g)).collect();
    if units.is_empty() {
        return Err("all gradients vanish".into());
    }
    let mut c = vec![T::zero(); 3];
    for u in &units {
        for k in 0..3 {
            c[k] += u[k];
        }
    }
    if inf_norm(&c) == T::zero() {
        return Err("gradients are not contained in an open half-space".into());
    }
    let c = unit(&c);
    if units.iter().any(|u| dot(u, &c) <= T::lit(1e-9)) {
        return Err("gradients are not contained in an open half-space".into());
    }
    // Orthonormal basis (e1, e2) of c⊥ and gnomonic projection.
    let pick = if c[0].abs() < T::lit(0.9) { vec![T::one(), T::zero(), T::zero()] } else { vec![T::zero(), T::one(), T::zero()] };
    let e1 = unit(&cross(&c, &pick));
    let e2 = cross(&c, &e1);
    let proj: Vec<[T; 2]> = units
        .iter()
        .map(|u| {
            let s = dot(u, &c);
            [dot(u, &e1) / s, dot(u, &e2) / s]
        })
        .collect();
    let hull = convex_hull(&proj);
    if hull.len() < 3 {
        return Err("gradient hull is degenerate; no full-dimensional candidate".into());
    }
    // Lift back and take inward facet normals, tilted towards c so every
    // gradient clears them by the margin.
    let lift: Vec<Vec<T>> =
        hull.iter().map(|p| (0..3).map(|i| c[i] + p[0] * e1[i] + p[1] * e2[i]).collect()).collect();
    let min_c = units.iter().fold(T::infinity(), |m, u| m.min(dot(u, &c)));
    let tilt = T::lit(4.0) * margin.max(T::lit(MEMBERSHIP_TOL)) / min_c;
    let mut normals = Vec::new();
    for i in 0..lift.len() {
        let j = (i + 1) % lift.len();
        let mut h = unit(&cross(&lift[i], &lift[j]));
        if dot(&h, &c) < T::zero() {
            h.iter_mut().for_each(|v| *v = -*v);
        }
        normals.push(h.iter().zip(&c).map(|(a, b)| *a + tilt * *b).collect::<Vec<T>>());
    }
    Cone::polyhedral(normals).map_err(|e| e.to_string())
}

/// Andrew's monotone chain, counter-clockwise, collinear points dropped.
fn convex_hull<T: Real>(pts: &[[T; 2]]) -> Vec<[T; 2]> {
    let mut p = pts.to_vec();
    p.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap().then(a[1].partial_cmp(&b[1]).unwrap()));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let turn = |o: [T; 2], a: [T; 2], b: [T; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut h: Vec<[T; 2]> = Vec::with_capacity(2 * p.len());
    let mut lower: Vec<[T; 2]> = Vec::new();
    for q in &p {
        while lower.len() >= 2 && turn(lower[lower.len() - 2], lower[lower.len() - 1], *q) <= T::zero() {
            lower.pop();
        }
        lower.push(*q);
    }
    let mut upper: Vec<[T; 2]> = Vec::new();
    for q in p.iter().rev() {
        while upper.len() >= 2 && turn(upper[upper.len() - 2], upper[upper.len() - 1], *q) <= T::zero() {
            upper.pop();
        }
        upper.push(*q);
    }
    lower.pop();
    upper.pop();
    h.extend(lower);
    h.extend(upper);
    h
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case", bound = "T: Real")]
pub enum PairOutcome<T> {
    /// Ordered from `tau0` through the horizon.
    Ordered { tau0: T },
    /// Order fails within the final quarter of the checkpoints.
    Counterexample { t: T },
    /// Not ordered at t = 0.
    Rejected,
    Failed { error: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PairResult<T> {
    pub index: usize,
    pub x: Vec<T>,
    pub y: Vec<T>,
    pub outcome: PairOutcome<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct OrderProbeReport<T> {
    pub horizon: T,
    pub checkpoints: Vec<T>,
    pub pairs: Vec<PairResult<T>>,
    /// First pair (by index) with a persistent order failure, and the time.
    pub counterexample: Option<(usize, T)>,
}

impl<T: Real> OrderProbeReport<T> {
    pub fn tau0_estimates(&self) -> Vec<Option<T>> {
        self.pairs
            .iter()
            .map(|p| match p.outcome {
                PairOutcome::Ordered { tau0 } => Some(tau0),
                _ => None,
            })
            .collect()
    }
}

pub const ORDER_CHECKPOINTS: usize = 32;

/// Integrates each pair and tracks `φ(t,x) - φ(t,y) ∈ K` at log-spaced
/// checkpoints on `(0, horizon]`.
pub fn empirical_order_probe<T: Real>(
    field: &VectorField,
    cone: &Cone<T>,
    pairs: &[(Vec<T>, Vec<T>)],
    horizon: T,
    n_checkpoints: usize,
    tol: Tolerances,
) -> Result<OrderProbeReport<T>, ConeError> {
    if cone.dim() != field.dim() {
        return Err(ConeError::Dimension(format!("cone has dimension {}, field {}", cone.dim(), field.dim())));
    }
    let h = horizon.as_f64();
    let checkpoints: Vec<T> = log_grid(h * 1e-3, h, n_checkpoints.max(2)).into_iter().map(T::lit).collect();
    let tail_from = checkpoints.len() - (checkpoints.len() / 4).max(1);
    let results: Vec<PairResult<T>> = pairs
        .par_iter()
        .enumerate()
        .map(|(index, (x, y))| {
            let d0: Vec<T> = x.iter().zip(y).map(|(a, b)| *a - *b).collect();
            let outcome = if x.len() != field.dim() || y.len() != field.dim() {
                PairOutcome::Failed { error: "dimension mismatch".into() }
            } else if !cone.contains(&d0) {
                PairOutcome::Rejected
            } else {
                let run = |p: &[T]| integrate_with_stops(field, p, horizon, &checkpoints, tol).map(|(_, s)| s);
                match (run(x), run(y)) {
                    (Ok(sx), Ok(sy)) => {
                        let inside: Vec<bool> = sx
                            .iter()
                            .zip(&sy)
                            .map(|(a, b)| {
                                let d: Vec<T> = a.iter().zip(b).map(|(p, q)| *p - *q).collect();
                                cone.contains(&d)
                            })
                            .collect();
                        match inside.iter().rposition(|ok| !ok) {
                            None => PairOutcome::Ordered { tau0: T::zero() },
                            Some(k) if k >= tail_from => PairOutcome::Counterexample { t: checkpoints[k] },
                            Some(k) => PairOutcome::Ordered { tau0: checkpoints[k + 1] },
                        }
                    }
                    (Err(e), _) | (_, Err(e)) => PairOutcome::Failed { error: e.to_string() },
                }
            };
            PairResult { index, x: x.clone(), y: y.clone(), outcome }
        })
        .collect();
    let counterexample = results.iter().find_map(|r| match r.outcome {
        PairOutcome::Counterexample { t } => Some((r.index, t)),
        _ => None,
    });
    Ok(OrderProbeReport { horizon, checkpoints, pairs: results, counterexample })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Violation<T> {
    pub level: T,
    pub sign: i8,
    /// `a - b` lies strictly in the cone.
    pub a: [T; 2],
    pub b: [T; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ComparabilityScan<T> {
    pub pairs_checked: usize,
    pub violation_count: usize,
    /// Up to [`MAX_REPORTED_VIOLATIONS`] examples.
    pub violations: Vec<Violation<T>>,
}

pub const MAX_REPORTED_VIOLATIONS: usize = 100;

/// All-pairs scan within each isostable branch `s₁ = ±α` for points
/// ordered strictly by a 2D cone.
pub fn isostable_comparability_scan<T: Real>(
    polylines: &[Polyline<T>],
    cone: &Cone<T>,
    margin: T,
) -> Result<ComparabilityScan<T>, ConeError> {
    if cone.dim() != 2 {
        return Err(ConeError::Dimension("comparability scan works on 2D cross-sections".into()));
    }
    let mut groups: Vec<((T, i8), Vec<[T; 2]>)> = Vec::new();
    for p in polylines {
        match groups.iter_mut().find(|(k, _)| k.0 == p.level && k.1 == p.sign) {
            Some((_, pts)) => pts.extend(&p.points),
            None => groups.push(((p.level, p.sign), p.points.clone())),
        }
    }
    let mut out = ComparabilityScan { pairs_checked: 0, violation_count: 0, violations: Vec::new() };
    for ((level, sign), pts) in &groups {
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                out.pairs_checked += 1;
                let d = [pts[i][0] - pts[j][0], pts[i][1] - pts[j][1]];
                let nd = [-d[0], -d[1]];
                let hit = if cone.strictly_contains(&d, margin) {
                    Some((pts[i], pts[j]))
                } else if cone.strictly_contains(&nd, margin) {
                    Some((pts[j], pts[i]))
                } else {
                    None
                };
                if let Some((a, b)) = hit {
                    out.violation_count += 1;
                    if out.violations.len() < MAX_REPORTED_VIOLATIONS {
                        out.violations.push(Violation { level: *level, sign: *sign, a, b });
                    }
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FlowProbeReport<T> {
    pub checked: usize,
    /// Samples not strictly above `x*` in the cone order.
    pub skipped: usize,
    pub violations: Vec<Witness<T>>,
}

/// For samples `x ≻_K x*`, `f(x)` must not lie strictly in `K`.
pub fn flow_direction_probe<T: Real>(
    field: &VectorField,
    spec: &KoopmanSpec<T>,
    cone: &Cone<T>,
    samples: &[Vec<T>],
    margin: T,
) -> Result<FlowProbeReport<T>, ConeError> {
    let mut out = FlowProbeReport { checked: 0, skipped: 0, violations: Vec::new() };
    for x in samples {
        let d: Vec<T> = x.iter().zip(&spec.x_star).map(|(a, b)| *a - *b).collect();
        if !cone.strictly_contains(&d, margin) {
            out.skipped += 1;
            continue;
        }
        out.checked += 1;
        let f = field.eval(x).map_err(KoopmanError::from)?;
        if cone.strictly_contains(&f, margin) {
            out.violations.push(Witness { point: x.clone(), gradient: None, vector: Some(f), value: None });
        }
    }
    Ok(out)
}

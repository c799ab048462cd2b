//! Builtin example systems.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::sampling::Window;
use crate::vf::{VectorField, VfError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown model '{name}'; available: {}", available.join(", "))]
    Unknown { name: String, available: Vec<String> },
    #[error("model '{model}' has no default parameters; supply values for: {}", missing.join(", "))]
    MissingParams { model: String, missing: Vec<String> },
    #[error(transparent)]
    Field(#[from] VfError),
}

/// Where a registered value comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Printed in the source publication.
    Published,
    /// Computed here (Newton, hand-derived Jacobian, ...).
    Computed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnownEquilibrium {
    pub label: String,
    pub x: Vec<f64>,
    /// Newton starting point used to re-solve for `x`.
    pub guess: Vec<f64>,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Expected {
    pub value: Json,
    pub provenance: Provenance,
}

#[derive(Clone, Debug)]
pub struct ModelEntry {
    pub name: String,
    pub field: VectorField,
    pub default_window: Window,
    pub known_equilibria: Vec<KnownEquilibrium>,
    pub expected: BTreeMap<String, Expected>,
    /// System matrix for linear models.
    pub matrix: Option<Matrix<f64>>,
}

impl ModelEntry {
    pub fn equilibrium(&self, label: &str) -> Option<&KnownEquilibrium> {
        self.known_equilibria.iter().find(|e| e.label == label)
    }

    /// First registered equilibrium.
    pub fn primary_equilibrium(&self) -> &KnownEquilibrium {
        &self.known_equilibria[0]
    }
}

pub const MODEL_NAMES: [&str; 7] = [
    "complex_counterexample",
    "fitzhugh_nagumo",
    "gut_kinetics",
    "linear_example1",
    "reduced_two_state",
    "three_state",
    "toxin_antitoxin",
];

pub fn list_models() -> Vec<String> {
    MODEL_NAMES.iter().map(|s| s.to_string()).collect()
}

/// Registered model with its default parameters.
pub fn get_model(name: &str) -> Result<ModelEntry, ModelError> {
    get_model_with(name, &BTreeMap::new())
}

/// Registered model with parameter overrides applied. Overrides naming
/// unknown parameters are rejected.
pub fn get_model_with(name: &str, overrides: &BTreeMap<String, f64>) -> Result<ModelEntry, ModelError> {
    let mut entry = match name {
        "linear_example1" => linear_example1(overrides)?,
        "complex_counterexample" => complex_counterexample()?,
        "three_state" => three_state()?,
        "reduced_two_state" => reduced_two_state()?,
        "toxin_antitoxin" => toxin_antitoxin()?,
        "fitzhugh_nagumo" => fitzhugh_nagumo()?,
        "gut_kinetics" => return gut_kinetics(overrides),
        _ => return Err(ModelError::Unknown { name: name.to_string(), available: list_models() }),
    };
    for (k, v) in overrides {
        entry.field.set_param(k, *v)?;
    }
    Ok(entry)
}

/// `ẋ = A x` with states `x1..xn`.
pub fn linear_field(a: &Matrix<f64>) -> VectorField {
    let n = a.rows();
    let states: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    let src: Vec<String> = (0..n)
        .map(|r| {
            (0..n)
                .map(|c| format!("({:e})*x{}", a[(r, c)], c + 1))
                .collect::<Vec<_>>()
                .join(" + ")
        })
        .collect();
    VectorField::parse(&src.join("\n"), &states, &BTreeMap::new()).expect("generated linear field parses")
}

fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn expected(pairs: Vec<(&str, Json, Provenance)>) -> BTreeMap<String, Expected> {
    pairs.into_iter().map(|(k, value, provenance)| (k.to_string(), Expected { value, provenance })).collect()
}

fn eq(label: &str, x: &[f64], guess: &[f64], provenance: Provenance) -> KnownEquilibrium {
    KnownEquilibrium { label: label.into(), x: x.to_vec(), guess: guess.to_vec(), provenance, note: None }
}

fn linear_example1(overrides: &BTreeMap<String, f64>) -> Result<ModelEntry, ModelError> {
    let field = VectorField::parse(
        "-6*x1 + 10*x2 + 4*x3\n-7*x1 + 2*x2 + 12*x3\n(3*x1 - 3*x2 - 4*x3)/eps",
        &["x1", "x2", "x3"],
        &params(&[("eps", 1.0)]),
    )?;
    let eps = overrides.get("eps").copied().unwrap_or(1.0);
    let matrix = Matrix::from_rows(vec![
        vec![-6.0, 10.0, 4.0],
        vec![-7.0, 2.0, 12.0],
        vec![3.0 / eps, -3.0 / eps, -4.0 / eps],
    ])
    .expect("square");
    Ok(ModelEntry {
        name: "linear_example1".into(),
        field,
        default_window: Window::new(vec![-1.0; 3], vec![1.0; 3]),
        known_equilibria: vec![eq("origin", &[0.0; 3], &[0.1, -0.1, 0.1], Provenance::Computed)],
        expected: expected(vec![(
            "reduced_matrix_fast_3",
            json!([[-3, 7], [2, -7]]),
            Provenance::Published,
        )]),
        matrix: Some(matrix),
    })
}

fn complex_counterexample() -> Result<ModelEntry, ModelError> {
    let a = Matrix::from_rows(vec![vec![-10.0, -10.0, 14.0], vec![4.0, 1.0, -11.0], vec![0.0, 3.0, -9.0]])
        .expect("square");
    Ok(ModelEntry {
        name: "complex_counterexample".into(),
        field: linear_field(&a),
        default_window: Window::new(vec![-1.0; 3], vec![1.0; 3]),
        known_equilibria: vec![eq("origin", &[0.0; 3], &[0.1, -0.1, 0.1], Provenance::Computed)],
        expected: expected(vec![
            ("eigenvalues", json!([[-6, 0], [-6, 6], [-6, -6]]), Provenance::Published),
            ("verdict", json!("not_eventually_positive"), Provenance::Published),
        ]),
        matrix: Some(a),
    })
}

fn three_state() -> Result<ModelEntry, ModelError> {
    let field = VectorField::parse(
        "10/(1 + x2^2) - x1\nx1/(x1 + 1) + 3*x3 - x2\n(1/(1 + x1) - x3)/eps",
        &["x1", "x2", "x3"],
        &params(&[("eps", 1.0)]),
    )?;
    let mut star = eq("x_star", &[3.1179, 1.4857, 0.2428], &[3.0, 1.5, 0.25], Provenance::Computed);
    star.note = Some("the published listing (3.1179, 0.2428, 1.4857) is this point with x2 and x3 swapped".into());
    Ok(ModelEntry {
        name: "three_state".into(),
        field,
        default_window: Window::new(vec![1.0, 0.5, 0.05], vec![6.0, 3.0, 0.5]),
        known_equilibria: vec![star],
        expected: expected(vec![
            ("cone_signature", json!([-1, 1, 1]), Provenance::Published),
            ("v1", json!([-0.96, 0.07, 0.24]), Provenance::Published),
            ("v1_sign_pattern", json!("-++"), Provenance::Published),
        ]),
        matrix: None,
    })
}

fn reduced_two_state() -> Result<ModelEntry, ModelError> {
    let field = VectorField::parse(
        "10/(1 + x2^2) - x1\n1 + 2/(x1 + 1) - x2",
        &["x1", "x2"],
        &BTreeMap::new(),
    )?;
    Ok(ModelEntry {
        name: "reduced_two_state".into(),
        field,
        default_window: Window::new(vec![1.0, 0.5], vec![6.0, 3.0]),
        known_equilibria: vec![eq("x_star", &[3.1179, 1.4857], &[3.0, 1.5], Provenance::Computed)],
        expected: expected(vec![("monotone_orthant", json!([1, -1]), Provenance::Published)]),
        matrix: None,
    })
}

fn toxin_antitoxin() -> Result<ModelEntry, ModelError> {
    let field = VectorField::parse(
        "sigmaT/((1 + Af*Tf/K0)*(1 + betaM*Tf)) - T/(1 + betaC*Tf)\n\
         sigmaA/((1 + Af*Tf/K0)*(1 + betaM*Tf)) - GammaA*A\n\
         (A - (Af + Af*Tf/KT + Af*Tf^2/(KT*KTT)))/eps\n\
         (T - (Tf + Af*Tf/KT + 2*Af*Tf^2/(KT*KTT)))/eps",
        &["T", "A", "Af", "Tf"],
        &params(&[
            ("sigmaT", 166.28),
            ("K0", 1.0),
            ("betaM", 0.16),
            ("betaC", 0.16),
            ("sigmaA", 100.0),
            ("GammaA", 0.2),
            ("KT", 0.3),
            ("KTT", 0.3),
            ("eps", 1e-6),
        ]),
    )?;
    Ok(ModelEntry {
        name: "toxin_antitoxin".into(),
        field,
        default_window: Window::new(vec![5.0, 40.0, 40.0, 0.05], vec![60.0, 120.0, 80.0, 0.15]),
        known_equilibria: vec![
            eq(
                "x_star",
                &[27.1517, 80.5151, 58.4429, 0.0877],
                &[27.0, 80.0, 58.0, 0.1],
                Provenance::Published,
            ),
            eq(
                "x_bullet",
                &[162.8103, 26.2221, 0.0002, 110.4375],
                &[163.0, 26.0, 0.0, 110.0],
                Provenance::Published,
            ),
        ],
        expected: expected(vec![("cross_section_orthant", json!([1, -1]), Provenance::Published)]),
        matrix: None,
    })
}

fn fitzhugh_nagumo() -> Result<ModelEntry, ModelError> {
    let field = VectorField::parse(
        "-w - v*(v - 1)*(v - a) + I\neps*(v - gamma*w)",
        &["v", "w"],
        &params(&[("a", 1.0), ("I", 0.05), ("eps", 0.08), ("gamma", 1.0)]),
    )?;
    let x = [0.025_62, 0.025_62];
    Ok(ModelEntry {
        name: "fitzhugh_nagumo".into(),
        field,
        default_window: Window::around(&x, 1.5),
        known_equilibria: vec![eq("x_star", &x, &[0.0, 0.0], Provenance::Computed)],
        expected: expected(vec![("eigenvalues", json!([-0.193, -0.786]), Provenance::Computed)]),
        matrix: None,
    })
}

pub const GUT_PARAMS: [&str; 8] = ["k21", "kmin", "kmax", "kabs", "alpha", "beta", "b", "c"];

fn gut_kinetics(overrides: &BTreeMap<String, f64>) -> Result<ModelEntry, ModelError> {
    let missing: Vec<String> =
        GUT_PARAMS.iter().filter(|p| !overrides.contains_key(**p)).map(|p| p.to_string()).collect();
    if !missing.is_empty() {
        return Err(ModelError::MissingParams { model: "gut_kinetics".into(), missing });
    }
    let kempt = "(kmin + (kmax - kmin)/2*(tanh(alpha*(Q1 + Q2 - b)) - tanh(beta*(Q1 + Q2 - c)) + 2))";
    let src = format!("-k21*Q1\n-{kempt}*Q2 + k21*Q1\n-kabs*Qgut + {kempt}*Q2");
    let field = VectorField::parse(&src, &["Q1", "Q2", "Qgut"], overrides)?;
    Ok(ModelEntry {
        name: "gut_kinetics".into(),
        field,
        default_window: Window::new(vec![0.0; 3], vec![1.0; 3]),
        known_equilibria: vec![eq("origin", &[0.0; 3], &[0.01, 0.01, 0.01], Provenance::Computed)],
        expected: expected(vec![("v1_first_component", json!(0.0), Provenance::Computed)]),
        matrix: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_lookup() {
        assert_eq!(list_models().len(), 7);
        for name in list_models() {
            if name != "gut_kinetics" {
                let m = get_model(&name).unwrap();
                assert_eq!(m.name, name);
                assert_eq!(m.default_window.dim(), m.field.dim());
            }
        }
        match get_model("nope") {
            Err(ModelError::Unknown { available, .. }) => assert!(available.contains(&"three_state".to_string())),
            other => panic!("{other:?}"),
        }
        assert!(matches!(get_model("gut_kinetics"), Err(ModelError::MissingParams { .. })));
    }

    #[test]
    fn linear_fields_match_matrices() {
        for name in ["linear_example1", "complex_counterexample"] {
            let m = get_model(name).unwrap();
            let j = m.field.jacobian(&[0.3, -0.2, 0.5]).unwrap();
            assert!(j.sub(m.matrix.as_ref().unwrap()).max_abs() < 1e-12);
        }
        let m = get_model_with("linear_example1", &params(&[("eps", 0.25)])).unwrap();
        let j = m.field.jacobian(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(j.row(2), vec![12.0, -12.0, -16.0]);
    }

    #[test]
    fn unknown_override_rejected() {
        assert!(get_model_with("three_state", &params(&[("zeta", 1.0)])).is_err());
    }
}

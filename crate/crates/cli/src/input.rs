//! Parsing of flags, matrix files, model sources and cone descriptions.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use evmono::linalg::Matrix;
use evmono::models::{get_model_with, ModelEntry, MODEL_NAMES};
use evmono::sampling::Window;
use evmono::scalar::parse_rational;
use evmono::{RationalMatrix, VectorField};
use serde::Deserialize;

use crate::Failure;

pub fn floats(s: &str, what: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| Failure::usage(format!("{what}: cannot parse '{t}' as a number"))))
        .collect()
}

pub fn finite(v: f64, what: &str) -> Result<f64, Failure> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Failure::usage(format!("{what} must be finite")))
    }
}

/// `lo:hi,lo:hi,...`
pub fn window(s: &str, dim: usize) -> Result<Window, Failure> {
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for part in s.split(',') {
        let (a, b) = part
            .split_once(':')
            .ok_or_else(|| Failure::usage(format!("window axis '{part}' is not lo:hi")))?;
        let a: f64 = a.trim().parse().map_err(|_| Failure::usage(format!("bad window bound '{a}'")))?;
        let b: f64 = b.trim().parse().map_err(|_| Failure::usage(format!("bad window bound '{b}'")))?;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Failure::usage(format!("window axis '{part}' needs finite lo < hi")));
        }
        lo.push(a);
        hi.push(b);
    }
    if lo.len() != dim {
        return Err(Failure::usage(format!("window has {} axes, expected {dim}", lo.len())));
    }
    Ok(Window::new(lo, hi))
}

/// One count for every axis or one per axis.
pub fn grid(s: &str, dim: usize) -> Result<Vec<usize>, Failure> {
    let v: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| Failure::usage(format!("bad grid count '{t}'"))))
        .collect::<Result<_, _>>()?;
    let v = if v.len() == 1 { vec![v[0]; dim] } else { v };
    if v.len() != dim || v.iter().any(|m| *m < 2) {
        return Err(Failure::usage(format!("grid needs {dim} counts of at least 2")));
    }
    Ok(v)
}

pub fn params(items: &[String]) -> Result<BTreeMap<String, f64>, Failure> {
    let mut out = BTreeMap::new();
    for it in items {
        let (k, v) = it.split_once('=').ok_or_else(|| Failure::usage(format!("--param '{it}' is not name=value")))?;
        let v: f64 = v.trim().parse().map_err(|_| Failure::usage(format!("--param {k}: bad value '{v}'")))?;
        out.insert(k.trim().to_string(), finite(v, k)?);
    }
    Ok(out)
}

/// A vector field with whatever defaults its source provides.
pub struct Model {
    pub name: String,
    pub field: VectorField,
    pub entry: Option<ModelEntry>,
}

impl Model {
    pub fn window(&self, flag: Option<&str>) -> Result<Window, Failure> {
        match (flag, &self.entry) {
            (Some(s), _) => window(s, self.field.dim()),
            (None, Some(e)) => Ok(e.default_window.clone()),
            (None, None) => Err(Failure::usage("model file has no default window; pass --window")),
        }
    }

    /// Newton starting point: `--guess`, else the labelled or first
    /// registered equilibrium.
    pub fn guess(&self, guess: Option<&str>, label: Option<&str>) -> Result<Vec<f64>, Failure> {
        if let Some(g) = guess {
            let g = floats(g, "--guess")?;
            if g.len() != self.field.dim() {
                return Err(Failure::usage(format!("--guess has {} entries, model has {}", g.len(), self.field.dim())));
            }
            return Ok(g);
        }
        let entry = self.entry.as_ref().ok_or_else(|| Failure::usage("model file has no equilibria; pass --guess"))?;
        match label {
            Some(l) => entry.equilibrium(l).map(|e| e.guess.clone()).ok_or_else(|| {
                let known: Vec<&str> = entry.known_equilibria.iter().map(|e| e.label.as_str()).collect();
                Failure::usage(format!("no equilibrium labelled '{l}'; known: {}", known.join(", ")))
            }),
            None => Ok(entry.primary_equilibrium().guess.clone()),
        }
    }
}

pub fn model(source: &str, overrides: &BTreeMap<String, f64>) -> Result<Model, Failure> {
    if MODEL_NAMES.contains(&source) {
        let entry = get_model_with(source, overrides).map_err(|e| Failure::usage(e.to_string()))?;
        return Ok(Model { name: source.to_string(), field: entry.field.clone(), entry: Some(entry) });
    }
    let path = Path::new(source);
    if !path.exists() {
        return Err(Failure::usage(format!(
            "'{source}' is neither a builtin model ({}) nor a file",
            MODEL_NAMES.join(", ")
        )));
    }
    let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("cannot read {source}: {e}")))?;
    let mut field = VectorField::from_model_json(&text).map_err(|e| Failure::usage(format!("{source}: {e}")))?;
    for (k, v) in overrides {
        field.set_param(k, *v).map_err(|e| Failure::usage(e.to_string()))?;
    }
    Ok(Model { name: source.to_string(), field, entry: None })
}

fn matrix_rows(path: &Path) -> Result<Vec<Vec<String>>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
    let rows: Vec<Vec<String>> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| l.split_whitespace().map(str::to_string).collect())
        .collect();
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Failure::usage(format!("{}: expected a square matrix of space-separated rows", path.display())));
    }
    Ok(rows)
}

pub fn real_matrix(path: &Path) -> Result<Matrix<f64>, Failure> {
    let rows = matrix_rows(path)?;
    let parsed: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            r.iter()
                .map(|t| match t.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(Failure::usage(format!("{}: bad entry '{t}'", path.display()))),
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    Matrix::from_rows(parsed).map_err(|e| Failure::usage(e.to_string()))
}

pub fn rational_matrix(path: &Path) -> Result<RationalMatrix, Failure> {
    let rows = matrix_rows(path)?;
    let parsed: Vec<Vec<_>> = rows
        .iter()
        .map(|r| {
            r.iter()
                .map(|t| parse_rational(t).ok_or_else(|| Failure::usage(format!("{}: bad entry '{t}'", path.display()))))
                .collect()
        })
        .collect::<Result<_, _>>()?;
    Matrix::from_rows(parsed).map_err(|e| Failure::usage(e.to_string()))
}

/// 1-based indices to 0-based, checked against `n`.
pub fn indices(s: &str, n: usize) -> Result<Vec<usize>, Failure> {
    let mut out = Vec::new();
    for t in s.split(',') {
        let i: usize = t.trim().parse().map_err(|_| Failure::usage(format!("bad index '{t}'")))?;
        if i == 0 || i > n {
            return Err(Failure::usage(format!("index {i} outside 1..={n}")));
        }
        if out.contains(&(i - 1)) {
            return Err(Failure::usage(format!("index {i} repeated")));
        }
        out.push(i - 1);
    }
    Ok(out)
}

/// `name_or_index=value,...` into fixed coordinates (0-based).
pub fn cross_section(s: &str, names: &[String]) -> Result<BTreeMap<usize, f64>, Failure> {
    let mut out = BTreeMap::new();
    for part in s.split(',') {
        let (k, v) = part.split_once('=').ok_or_else(|| Failure::usage(format!("cross-section '{part}' is not key=value")))?;
        let k = k.trim();
        let idx = match names.iter().position(|n| n == k) {
            Some(i) => i,
            None => match k.parse::<usize>() {
                Ok(i) if i >= 1 && i <= names.len() => i - 1,
                _ => return Err(Failure::usage(format!("unknown state '{k}' in cross-section"))),
            },
        };
        let v: f64 = v.trim().parse().map_err(|_| Failure::usage(format!("bad cross-section value '{v}'")))?;
        out.insert(idx, finite(v, k)?);
    }
    Ok(out)
}

pub enum Levels {
    Auto(usize),
    Fixed(Vec<f64>),
}

pub fn levels(s: &str) -> Result<Levels, Failure> {
    if let Some(n) = s.strip_prefix("auto:") {
        let n: usize = n.parse().map_err(|_| Failure::usage(format!("bad level count '{n}'")))?;
        if n == 0 {
            return Err(Failure::usage("auto levels need a positive count"));
        }
        return Ok(Levels::Auto(n));
    }
    let v = floats(s, "--levels")?;
    if v.iter().any(|l| !l.is_finite() || *l < 0.0) {
        return Err(Failure::usage("levels must be finite and nonnegative"));
    }
    Ok(Levels::Fixed(v))
}

/// `k·max|s₁|/(N+1)` for `k = 1..N`.
pub fn auto_levels(values: &[f64], n: usize) -> Vec<f64> {
    let max = values.iter().filter(|v| v.is_finite()).fold(0.0f64, |a, v| a.max(v.abs()));
    (1..=n).map(|k| k as f64 * max / (n + 1) as f64).collect()
}

pub fn sigma(s: &str) -> Result<Vec<i8>, Failure> {
    s.split(',')
        .map(|t| match t.trim() {
            "1" | "+1" | "+" => Ok(1),
            "-1" | "-" => Ok(-1),
            other => Err(Failure::usage(format!("orthant signature entries must be ±1, got '{other}'"))),
        })
        .collect()
}

/// Cone file contents before it is bound to an equilibrium.
#[derive(Debug, Clone, Deserialize, serde::Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConeSource {
    OrthantSignature { sigma: Vec<i8> },
    PolyhedralGenerated { generators: Vec<Vec<f64>> },
    /// `K_α` built from the Jacobian at the equilibrium.
    TransformedLorentz { alpha: Vec<f64> },
}

pub fn cone_source(cone: Option<&str>, file: Option<&Path>) -> Result<Option<ConeSource>, Failure> {
    match (cone, file) {
        (Some(s), _) => Ok(Some(ConeSource::OrthantSignature { sigma: sigma(s)? })),
        (None, Some(p)) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::usage(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text).map(Some).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))
        }
        (None, None) => Ok(None),
    }
}

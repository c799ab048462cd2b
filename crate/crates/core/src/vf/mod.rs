//! Vector-field definitions parsed from text.
//!
//! A field is a list of expressions over named states and parameters.
//! Evaluation is generic over plain reals and [`Dual`] numbers, so the same
//! tree walk produces values, Jacobian columns and Jacobian-vector products.

mod parse;

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dual::Dual;
use crate::linalg::Matrix;
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VfError {
    #[error("lexical error at byte {pos}: {msg}")]
    Lexical { pos: usize, msg: String },
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier `{name}` at byte {pos}")]
    UnknownIdentifier { pos: usize, name: String },
    #[error("`{function}` takes 1 argument, found {found} (byte {pos})")]
    Arity { pos: usize, function: String, found: usize },
    #[error("expected {expected} equations, found {found}")]
    ComponentCount { expected: usize, found: usize },
    #[error("denominator is identically zero at byte {pos}")]
    ZeroDenominator { pos: usize },
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("epsilon scaling must have {expected} nonzero finite entries")]
    BadScaling { expected: usize },
    #[error("invalid model file: {0}")]
    Model(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("division by zero in component {component}")]
    DivisionByZero { component: usize },
    #[error("state has length {found}, field has dimension {expected}")]
    Dimension { expected: usize, found: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    State(usize),
    Param(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, i32),
    Tanh(Box<Expr>),
    Exp(Box<Expr>),
}

impl Expr {
    pub fn is_state_free(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Param(_) => true,
            Expr::State(_) => false,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.is_state_free() && b.is_state_free()
            }
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Tanh(a) | Expr::Exp(a) => a.is_state_free(),
        }
    }

    /// Value of a state-free expression; `None` if it references a state
    /// or divides by zero along the way.
    pub fn eval_const(&self, params: &[f64]) -> Option<f64> {
        if !self.is_state_free() {
            return None;
        }
        eval_expr::<f64, f64>(self, &[], params).ok()
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Param(_) | Expr::State(_) => 1,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                1 + a.depth().max(b.depth())
            }
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Tanh(a) | Expr::Exp(a) => 1 + a.depth(),
        }
    }

    fn write(&self, out: &mut String, states: &[String], params: &[String]) {
        let bin = |out: &mut String, a: &Expr, op: &str, b: &Expr| {
            out.push('(');
            a.write(out, states, params);
            out.push_str(op);
            b.write(out, states, params);
            out.push(')');
        };
        match self {
            Expr::Const(c) => {
                if *c < 0.0 {
                    let _ = write!(out, "(-{:?})", -c);
                } else {
                    let _ = write!(out, "{c:?}");
                }
            }
            Expr::State(i) => out.push_str(&states[*i]),
            Expr::Param(i) => out.push_str(&params[*i]),
            Expr::Add(a, b) => bin(out, a, " + ", b),
            Expr::Sub(a, b) => bin(out, a, " - ", b),
            Expr::Mul(a, b) => bin(out, a, " * ", b),
            Expr::Div(a, b) => bin(out, a, " / ", b),
            Expr::Neg(a) => {
                out.push_str("(-");
                a.write(out, states, params);
                out.push(')');
            }
            Expr::Pow(a, k) => {
                out.push('(');
                a.write(out, states, params);
                let _ = write!(out, "^{k})");
            }
            Expr::Tanh(a) | Expr::Exp(a) => {
                out.push_str(if matches!(self, Expr::Tanh(_)) { "tanh(" } else { "exp(" });
                a.write(out, states, params);
                out.push(')');
            }
        }
    }
}

/// Values an expression tree can be evaluated over.
pub trait Value<T: Real>:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn konst(c: T) -> Self;
    fn re(&self) -> T;
    fn tanh(self) -> Self;
    fn exp(self) -> Self;
}

impl<T: Real> Value<T> for T {
    #[inline]
    fn konst(c: T) -> Self {
        c
    }
    #[inline]
    fn re(&self) -> T {
        *self
    }
    #[inline]
    fn tanh(self) -> Self {
        num_traits::Float::tanh(self)
    }
    #[inline]
    fn exp(self) -> Self {
        num_traits::Float::exp(self)
    }
}

impl<T: Real> Value<T> for Dual<T> {
    #[inline]
    fn konst(c: T) -> Self {
        Dual::constant(c)
    }
    #[inline]
    fn re(&self) -> T {
        self.re
    }
    #[inline]
    fn tanh(self) -> Self {
        Dual::tanh(self)
    }
    #[inline]
    fn exp(self) -> Self {
        Dual::exp(self)
    }
}

struct DivZero;

fn checked_div<T: Real, V: Value<T>>(a: V, b: V) -> Result<V, DivZero> {
    if b.re() == T::zero() {
        Err(DivZero)
    } else {
        Ok(a / b)
    }
}

fn eval_expr<T: Real, V: Value<T>>(e: &Expr, x: &[V], p: &[T]) -> Result<V, DivZero> {
    Ok(match e {
        Expr::Const(c) => V::konst(T::lit(*c)),
        Expr::State(i) => x[*i],
        Expr::Param(i) => V::konst(p[*i]),
        Expr::Add(a, b) => eval_expr(a, x, p)? + eval_expr(b, x, p)?,
        Expr::Sub(a, b) => eval_expr(a, x, p)? - eval_expr(b, x, p)?,
        Expr::Mul(a, b) => eval_expr(a, x, p)? * eval_expr(b, x, p)?,
        Expr::Div(a, b) => checked_div(eval_expr(a, x, p)?, eval_expr(b, x, p)?)?,
        Expr::Neg(a) => -eval_expr(a, x, p)?,
        Expr::Pow(a, k) => {
            let base = eval_expr(a, x, p)?;
            let m = k.unsigned_abs();
            let mut acc = V::konst(T::one());
            if m > 0 {
                acc = base;
                for _ in 1..m {
                    acc = acc * base;
                }
            }
            if *k < 0 {
                checked_div(V::konst(T::one()), acc)?
            } else {
                acc
            }
        }
        Expr::Tanh(a) => eval_expr(a, x, p)?.tanh(),
        Expr::Exp(a) => eval_expr(a, x, p)?.exp(),
    })
}

/// Parsed vector field `ε_i ẋ_i = f_i(x; p)`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    states: Vec<String>,
    param_names: Vec<String>,
    param_values: Vec<f64>,
    exprs: Vec<Expr>,
    epsilon: Vec<f64>,
}

/// JSON model document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub states: Vec<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub equations: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_scaling: Option<Vec<f64>>,
}

/// Parses `src` into a field over `states`. Expressions are separated by
/// `;` or newlines; blank segments are ignored.
pub fn parse_vector_field<S: AsRef<str>>(
    src: &str,
    states: &[S],
    params: &BTreeMap<String, f64>,
) -> Result<VectorField, VfError> {
    VectorField::parse(src, states, params)
}

impl VectorField {
    pub fn parse<S: AsRef<str>>(
        src: &str,
        states: &[S],
        params: &BTreeMap<String, f64>,
    ) -> Result<Self, VfError> {
        let states: Vec<String> = states.iter().map(|s| s.as_ref().to_string()).collect();
        let param_names: Vec<String> = params.keys().cloned().collect();
        let param_values: Vec<f64> = params.values().copied().collect();
        for (i, s) in states.iter().enumerate() {
            if states[..i].contains(s) || params.contains_key(s) || is_function(s) {
                return Err(VfError::DuplicateName(s.clone()));
            }
        }
        if let Some(p) = param_names.iter().find(|p| is_function(p)) {
            return Err(VfError::DuplicateName(p.clone()));
        }
        let scope = parse::Scope { states: &states, params: &param_names, values: &param_values };
        let mut exprs = Vec::new();
        let mut offset = 0;
        for seg in src.split(['\n', ';']) {
            if !seg.trim().is_empty() {
                exprs.push(parse::parse_expr(seg, offset, &scope)?);
            }
            offset += seg.len() + 1;
        }
        if exprs.len() != states.len() {
            return Err(VfError::ComponentCount { expected: states.len(), found: exprs.len() });
        }
        let epsilon = vec![1.0; states.len()];
        Ok(VectorField { states, param_names, param_values, exprs, epsilon })
    }

    pub fn from_model(model: &ModelFile) -> Result<Self, VfError> {
        let src = model.equations.join("\n");
        for (i, eq) in model.equations.iter().enumerate() {
            if eq.contains(['\n', ';']) {
                return Err(VfError::Model(format!("equation {i} contains a separator")));
            }
        }
        let mut f = VectorField::parse(&src, &model.states, &model.params)?;
        if let Some(eps) = &model.epsilon_scaling {
            f.set_epsilon_scaling(eps.clone())?;
        }
        Ok(f)
    }

    pub fn from_model_json(json: &str) -> Result<Self, VfError> {
        let model: ModelFile =
            serde_json::from_str(json).map_err(|e| VfError::Model(e.to_string()))?;
        VectorField::from_model(&model)
    }

    pub fn to_model(&self) -> ModelFile {
        ModelFile {
            states: self.states.clone(),
            params: self.params(),
            equations: self.equations(),
            epsilon_scaling: if self.epsilon.iter().all(|e| *e == 1.0) {
                None
            } else {
                Some(self.epsilon.clone())
            },
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn state_names(&self) -> &[String] {
        &self.states
    }

    pub fn params(&self) -> BTreeMap<String, f64> {
        self.param_names.iter().cloned().zip(self.param_values.iter().copied()).collect()
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.param_names.iter().position(|p| p == name).map(|i| self.param_values[i])
    }

    pub fn set_param(&mut self, name: &str, value: f64) -> Result<(), VfError> {
        let i = self
            .param_names
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| VfError::UnknownParam(name.to_string()))?;
        self.param_values[i] = value;
        Ok(())
    }

    pub fn exprs(&self) -> &[Expr] {
        &self.exprs
    }

    pub fn epsilon_scaling(&self) -> &[f64] {
        &self.epsilon
    }

    pub fn set_epsilon_scaling(&mut self, eps: Vec<f64>) -> Result<(), VfError> {
        if eps.len() != self.dim() || eps.iter().any(|e| *e == 0.0 || !e.is_finite()) {
            return Err(VfError::BadScaling { expected: self.dim() });
        }
        self.epsilon = eps;
        Ok(())
    }

    /// Fully parenthesized source of each component, re-parseable.
    pub fn equations(&self) -> Vec<String> {
        self.exprs
            .iter()
            .map(|e| {
                let mut s = String::new();
                e.write(&mut s, &self.states, &self.param_names);
                s
            })
            .collect()
    }

    fn check_dim(&self, n: usize) -> Result<(), EvalError> {
        if n != self.dim() {
            return Err(EvalError::Dimension { expected: self.dim(), found: n });
        }
        Ok(())
    }

    fn params_as<T: Real>(&self) -> Vec<T> {
        self.param_values.iter().map(|v| T::lit(*v)).collect()
    }

    fn eval_values<T: Real, V: Value<T>>(&self, x: &[V], p: &[T], out: &mut [V]) -> Result<(), EvalError> {
        for (i, e) in self.exprs.iter().enumerate() {
            let v = eval_expr(e, x, p).map_err(|_| EvalError::DivisionByZero { component: i })?;
            out[i] = if self.epsilon[i] == 1.0 { v } else { v / V::konst(T::lit(self.epsilon[i])) };
        }
        Ok(())
    }

    /// `ẋ = f(x) / ε` componentwise.
    pub fn eval<T: Real>(&self, x: &[T]) -> Result<Vec<T>, EvalError> {
        let mut out = vec![T::zero(); self.dim()];
        self.eval_into(x, &mut out)?;
        Ok(out)
    }

    pub fn eval_into<T: Real>(&self, x: &[T], out: &mut [T]) -> Result<(), EvalError> {
        self.check_dim(x.len())?;
        self.eval_values(x, &self.params_as::<T>(), out)
    }

    /// Value and directional derivative `J(x)·dir` in one dual pass.
    pub fn jvp<T: Real>(&self, x: &[T], dir: &[T]) -> Result<(Vec<T>, Vec<T>), EvalError> {
        self.check_dim(x.len())?;
        self.check_dim(dir.len())?;
        let p = self.params_as::<T>();
        let xd: Vec<Dual<T>> = x.iter().zip(dir).map(|(a, b)| Dual::new(*a, *b)).collect();
        let mut out = vec![Dual::constant(T::zero()); self.dim()];
        self.eval_values(&xd, &p, &mut out)?;
        Ok((out.iter().map(|d| d.re).collect(), out.iter().map(|d| d.eps).collect()))
    }

    /// `J(x)[i][j] = ∂(f_i/ε_i)/∂x_j`, one dual pass per state direction.
    pub fn jacobian<T: Real>(&self, x: &[T]) -> Result<Matrix<T>, EvalError> {
        self.check_dim(x.len())?;
        let n = self.dim();
        let p = self.params_as::<T>();
        let mut jac = Matrix::zeros(n, n);
        let mut xd: Vec<Dual<T>> = x.iter().map(|v| Dual::constant(*v)).collect();
        let mut out = vec![Dual::constant(T::zero()); n];
        for j in 0..n {
            xd[j].eps = T::one();
            self.eval_values(&xd, &p, &mut out)?;
            xd[j].eps = T::zero();
            for i in 0..n {
                jac[(i, j)] = out[i].eps;
            }
        }
        Ok(jac)
    }
}

impl fmt::Display for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for eq in self.equations() {
            writeln!(f, "{eq}")?;
        }
        Ok(())
    }
}

fn is_function(name: &str) -> bool {
    matches!(name, "tanh" | "exp")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn states3() -> Vec<&'static str> {
        vec!["x1", "x2", "x3"]
    }

    #[test]
    fn precedence_and_associativity() {
        let p = BTreeMap::new();
        let f = parse_vector_field("-x^2 + 8 - 2 - 1; 12/3/2; 2*z^-1", &["x", "y", "z"], &p).unwrap();
        let v = f.eval(&[3.0, 0.0, 4.0]).unwrap();
        assert_eq!(v, vec![-4.0, 2.0, 0.5]);
    }

    #[test]
    fn example_component_and_zero() {
        let p = BTreeMap::new();
        let f = parse_vector_field("10/(1 + x2^2) - x1\n0\nx1/(x1+1)", &states3(), &p).unwrap();
        let v = f.eval(&[3.0, 2.0, 0.0]).unwrap();
        assert_eq!(v, vec![-1.0, 0.0, 0.75]);
    }

    #[test]
    fn linear_field_jacobian_is_exact() {
        let p = BTreeMap::new();
        let f = parse_vector_field("-3*x + 7*y; 2*x - 7*y", &["x", "y"], &p).unwrap();
        assert_eq!(f.eval(&[1.0, 0.0]).unwrap(), vec![-3.0, 2.0]);
        let j = f.jacobian(&[0.3, -2.0]).unwrap();
        assert_eq!(j.to_rows(), vec![vec![-3.0, 7.0], vec![2.0, -7.0]]);
    }

    #[test]
    fn errors_are_specific() {
        let mut p = BTreeMap::new();
        p.insert("k".to_string(), 0.0);
        let s = ["x"];
        assert!(matches!(
            parse_vector_field("x $ 1", &s, &p),
            Err(VfError::Lexical { pos: 2, .. })
        ));
        assert!(matches!(
            parse_vector_field("y", &s, &p),
            Err(VfError::UnknownIdentifier { ref name, .. }) if name == "y"
        ));
        assert!(matches!(parse_vector_field("tanh(x, x)", &s, &p), Err(VfError::Arity { found: 2, .. })));
        assert!(matches!(parse_vector_field("x / (k*2)", &s, &p), Err(VfError::ZeroDenominator { .. })));
        assert!(matches!(parse_vector_field("x; x", &s, &p), Err(VfError::ComponentCount { .. })));
        assert!(matches!(parse_vector_field("x^1.5", &s, &p), Err(VfError::Syntax { .. })));
    }

    #[test]
    fn runtime_division_by_zero_names_component() {
        let f = parse_vector_field("1; 1/(x - 1)", &["x", "y"], &BTreeMap::new()).unwrap();
        assert_eq!(f.eval(&[1.0, 0.0]), Err(EvalError::DivisionByZero { component: 1 }));
        assert!(f.jacobian(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn epsilon_scaling_divides() {
        let model = r#"{"states":["a","b"],"params":{"k":2.0},
            "equations":["-k*a","a - b"],"epsilon_scaling":[1.0,0.5]}"#;
        let f = VectorField::from_model_json(model).unwrap();
        assert_eq!(f.eval(&[1.0, 0.0]).unwrap(), vec![-2.0, 2.0]);
        let again = VectorField::from_model(&f.to_model()).unwrap();
        assert_eq!(again.eval(&[0.3, 0.7]).unwrap(), f.eval(&[0.3, 0.7]).unwrap());
    }

    #[test]
    fn pretty_print_round_trip() {
        let mut p = BTreeMap::new();
        p.insert("eps".to_string(), 1e-6);
        let f = parse_vector_field(
            "-(x1 - 0.1)^3 / eps + tanh(x2)*exp(-x1); 1.5e-3 - -x2^-2",
            &["x1", "x2"],
            &p,
        )
        .unwrap();
        let src = f.to_string();
        let g = parse_vector_field(&src, &["x1", "x2"], &p).unwrap();
        let x = [0.37, -1.3];
        assert_eq!(f.eval(&x).unwrap(), g.eval(&x).unwrap());
    }
}

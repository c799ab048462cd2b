//! Eventual monotonicity analysis for linear and nonlinear systems:
//! spectral tools, eventual positivity of `ẋ = Ax`, Koopman eigenfunctions
//! by Laplace averages and cone certificates.
//!
//! Numerical code is generic over [`scalar::Real`]; the aliases below fix
//! the scalar to `f64`.

pub mod cones;
pub mod dual;
pub mod koopman;
pub mod linalg;
pub mod linear;
pub mod models;
pub mod ode;
pub mod sampling;
pub mod scalar;
pub mod spectral;
pub mod vf;

use num_rational::BigRational;
use thiserror::Error;

pub use vf::{parse_vector_field, ModelFile, VectorField};

pub type Matrix = linalg::Matrix<f64>;
pub type RationalMatrix = linalg::Matrix<BigRational>;
pub type SpectralDecomposition = spectral::SpectralDecomposition<f64>;
pub use linear::EvPosReport;
pub type LorentzConeSpec = linear::LorentzConeSpec<f64>;
pub type Trajectory = ode::Trajectory<f64>;
pub type KoopmanSpec = koopman::KoopmanSpec<f64>;
pub type EigenfunctionField = koopman::EigenfunctionField<f64>;
pub type Cone = cones::Cone<f64>;
pub type CertReport = cones::CertReport<f64>;

/// Any error raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Field(#[from] vf::VfError),
    #[error(transparent)]
    Eval(#[from] vf::EvalError),
    #[error(transparent)]
    Linalg(#[from] linalg::LinalgError),
    #[error(transparent)]
    Spectral(#[from] spectral::SpectralError),
    #[error(transparent)]
    EvPos(#[from] linear::EvPosError),
    #[error(transparent)]
    Ode(#[from] ode::OdeError),
    #[error(transparent)]
    Koopman(#[from] koopman::KoopmanError),
    #[error(transparent)]
    Cone(#[from] cones::ConeError),
    #[error(transparent)]
    Model(#[from] models::ModelError),
}

//! Electromagnetic scattering from a penetrable inhomogeneity: forward solver for the
//! volume integral equation, far-field amplitudes, scalar data extraction, and a
//! regularized Fourier-type inversion recovering the complex contrast and permittivity.

pub mod amplitude;
pub mod born;
pub mod cli;
pub mod forward;
pub mod geometry;
pub mod inversion;
pub mod medium;
pub mod oracle;

use thiserror::Error;

pub type C64 = num_complex::Complex64;
pub type V3 = nalgebra::Vector3<f64>;
pub type CV3 = nalgebra::Vector3<num_complex::Complex64>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("evaluation point coincides with a source point (separation {0:.3e})")]
    SingularPoint(f64),
    #[error("degenerate medium: |k^2 + p| = {value:.3e} at ({x:.4}, {y:.4}, {z:.4})")]
    DegenerateMedium { value: f64, x: f64, y: f64, z: f64 },
    #[error("negative absorption: Im(amplitude) = {0:.3e} < 0")]
    NegativeAbsorption(f64),
    #[error("iterative solver stalled at relative residual {residual:.3e} after {iterations} iterations")]
    NonConvergence { residual: f64, iterations: usize },
    #[error("dense factorization failed: {0}")]
    SingularSystem(String),
    #[error("grid too coarse: {0} cells per axis, need at least 3 for interior differences")]
    GridTooCoarse(usize),
    #[error("point at radius {0:.4} lies inside the source region of radius {1:.4}")]
    PointInsideDomain(f64, f64),
    #[error("polarization nearly parallel to observation direction: sin^2(theta) = {0:.3e} < {1:.3e}")]
    PolarizationDegenerate(f64, f64),
    #[error("inconsistent quadratures: {0}")]
    InconsistentQuadratures(String),
    #[error("reference contrast vanishes on the grid; relative error undefined")]
    ZeroTruth,
    #[error("far-field amplitude vanishes; residual undefined")]
    ZeroAmplitude,
    #[error("instance too large for a brute-force reference: {0}")]
    InstanceTooLarge(String),
    #[error("invalid {field}: {message}")]
    InvalidParameter { field: String, message: String },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    fn invalid(field: &str, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

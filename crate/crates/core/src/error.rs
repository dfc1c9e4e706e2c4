//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid site {site:?}: {reason}")]
    InvalidSite { site: Vec<i64>, reason: String },

    #[error("parameter error: {0}")]
    Param(String),

    #[error("eigensolver did not converge after {iterations} iterations (last residual {residual:.3e})")]
    Eigensolver { iterations: usize, residual: f64 },

    #[error("fixed-point iteration left the contraction regime: {0}")]
    Regime(String),

    #[error("shift {lambda} collides with the spectrum (solve residual {residual:.3e})")]
    SpectrumCollision { lambda: f64, residual: f64 },

    #[error("step size underflow at t={t}: system too stiff, use the spectral solver")]
    Stiffness { t: f64 },

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("quadrature failed to reach tolerance {tol:.1e} (estimate {estimate:.3e})")]
    Quadrature { tol: f64, estimate: f64 },

    #[error("sample size too small: {0}")]
    SampleSize(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;

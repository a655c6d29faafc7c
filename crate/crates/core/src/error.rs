//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A named construction invariant failed.
    #[error("invariant `{name}` violated: deviation {dev:.3e} exceeds tolerance {tol:.3e}")]
    Invariant {
        name: &'static str,
        dev: f64,
        tol: f64,
    },

    /// Numerical quadrature did not converge or was handed a bad integrand.
    #[error("quadrature failure: {0}")]
    Quadrature(String),

    /// A dense linear-algebra routine failed or produced unusable output.
    #[error("numerical failure: {0}")]
    Numeric(String),

    /// Block/sector structure expected by the theory is absent; usually a
    /// tolerance problem upstream.
    #[error("structural error: {0}")]
    Structural(String),

    /// Configuration file or run parameters are invalid.
    #[error("config error: {0}")]
    Config(String),

    #[error("full Hilbert dimension {dim} exceeds configured cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    /// Truncated thermal state leaks too much occupation weight.
    #[error(
        "bath cutoff leakage: truncated thermal tail mass {mass:.3e} exceeds {threshold:.3e}; \
         suggested per-mode cutoff: {suggested}"
    )]
    TailMass {
        mass: f64,
        threshold: f64,
        suggested: usize,
    },

    #[error("trajectory grids do not match: {0}")]
    GridMismatch(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

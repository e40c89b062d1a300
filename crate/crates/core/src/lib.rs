//! Desk-scale numerical toolkit for the energy-critical cubic defocusing
//! nonlinear Schrödinger equation
//!
//! ```text
//!     (i ∂_t + Δ) u = u |u|²,   u(x, t) ∈ ℂ,   x ∈ ℝ × T³,
//! ```
//!
//! built around the structures that make its well-posedness theory
//! quantitative: Littlewood–Paley projectors and the free propagator
//! ([`spectral`]), the critical norms Z, Z′ and the Duhamel functional
//! ([`norms`]), a split-step solver with conservation/stability/Euclidean
//! comparison experiments ([`solver`]), empirical Strichartz, dispersive,
//! local-smoothing, bilinear and extinction scans ([`strichartz`]), the
//! circle-method machinery for the propagator kernel — Weyl sums, Dirichlet
//! approximation, Farey bump coefficients, divisor bounds, the kernel
//! decomposition and the distributional inequality ([`circle`]) — and
//! concentration-compactness profile extraction ([`profiles`]).
//!
//! The line ℝ is modeled as a long circle of circumference 2πL1, so every
//! computation lives on a flat 4-torus with one elongated direction; L1 is a
//! convergence knob. All transforms follow one fixed normalization described
//! in [`grid`].

pub mod circle;
mod fft;
pub mod grid;
pub mod norms;
pub mod profiles;
pub mod solver;
pub mod spectral;
pub mod strichartz;

pub(crate) mod ensemble;

pub use grid::{EuclidField, Field, GridSpec, Spectrum};

use thiserror::Error;

/// Complex sample type used throughout (matches the f64 FFT kernels).
pub type C64 = num_complex::Complex64;

/// Errors shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Grid construction rejected (sizes not powers of two, etc.).
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    /// Two objects that must share a grid do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    /// A parameter is outside its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// Field-file header could not be parsed.
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    /// Field-file payload shorter than the header promises.
    #[error("truncated payload: expected {expected} bytes, got {got}")]
    TruncatedPayload { expected: usize, got: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    /// Initial data carries too much energy near the Nyquist frequency.
    #[error("resolution guard: {0}")]
    Resolution(String),
    /// NaN/overflow detected mid-computation.
    #[error("numerical abort: {0}")]
    Numerical(String),
    /// Fixed-point iteration failed to contract.
    #[error("smallness condition violated: {0}")]
    NonContraction(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Install a global rayon thread pool honoring the `SPNLS_THREADS`
/// environment variable (no-op if a pool is already installed).
///
/// Returns the number of threads the pool will use.
pub fn configure_threads_from_env() -> usize {
    let requested = std::env::var("SPNLS_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n >= 1);
    if let Some(n) = requested {
        // Ignore the error: a pool may already exist (tests, repeated calls).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    rayon::current_num_threads()
}

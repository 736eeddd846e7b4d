//! Cyclic and alternating U-statistics of order 2.
//!
//! The crate evaluates five variants of the order-2 U-statistic
//! `U_n(f) = Σ_{i<j} f(X_i, X_j)` on i.i.d. data:
//!
//! * `classic`    — the plain sum over increasing pairs,
//! * `cyclic`     — indices on Z_n, each pair oriented along its shorter arc,
//! * `alt-first`  — signs `(-1)^{i+1}`,
//! * `alt-second` — signs `(-1)^j`,
//! * `bialt`      — signs `(-1)^{i+j}`,
//!
//! plus the symmetrized cyclic variant and the full sum over ordered pairs.
//!
//! Around the evaluators sit the pieces needed to check their asymptotics at
//! desk scale: the Hoeffding projections of a kernel under a sampling measure
//! ([`hoeffding`]), Nystrom discretization and eigenvalue extraction for the
//! integral operators whose spectra parametrize the degenerate limit laws
//! ([`spectral`]), samplers and characteristic functions for those limit laws
//! ([`limitlaws`]), and a Monte Carlo / exact-enumeration harness
//! ([`harness`]).
//!
//! Everything is deterministic given a master seed; see [`rng`] for the
//! stream-derivation contract that makes results independent of worker count.

pub mod harness;
pub mod hoeffding;
pub mod kernels;
pub mod limitlaws;
mod linalg;
pub mod rng;
pub mod spectral;
pub mod ustats;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum UstatError {
    #[error("point shape does not match the declared sample space")]
    DomainMismatch,
    #[error("invalid space or measure: {0}")]
    InvalidSpace(String),
    #[error("declared symmetry `{declared}` violated on the probe grid (max deviation {deviation:.3e})")]
    SymmetryViolation { declared: &'static str, deviation: f64 },
    #[error("quadrature resolution must be at least 2 (got {0})")]
    BadResolution(usize),
    #[error("data vector too short: need n >= {need}, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("pair lift needs even n >= 4, got {0}")]
    BadPairLiftLength(usize),
    #[error("not a permutation of 1..=n")]
    NotAPermutation,
    #[error("permutation enumeration capped at n <= 9, got {0}")]
    EnumerationTooLarge(usize),
    #[error("no fast path for this kernel/statistic combination")]
    UnsupportedKernel,
    #[error("statistic is not in the required degeneracy regime")]
    RegimeMismatch,
    #[error("regime classification ambiguous: variance {variance:.3e} falls in the guard band [{tol:.1e}, {band:.1e}]; raise the resolution")]
    AmbiguousRegime { variance: f64, tol: f64, band: f64 },
    #[error("matrix structure does not match the requested eigensolver")]
    StructureMismatch,
    #[error("antisymmetric spectrum has an unpaired singular value {0:.3e}; discretization is not antisymmetric")]
    UnpairedSingularValue(f64),
    #[error("Nystrom matrix side {0} exceeds the cap 8192")]
    DimensionOverflow(usize),
    #[error("eigensolver failed to converge")]
    NonConvergence,
    #[error("unknown analytic spectrum case `{0}`")]
    UnknownCase(String),
    #[error("cumulant order must be in 1..=12, got {0}")]
    CumulantOrder(usize),
    #[error("insufficient samples: need {need}, got {got}")]
    InsufficientSamples { need: usize, got: usize },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, UstatError>;

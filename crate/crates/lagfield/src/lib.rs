//! Learning Lagrangian dynamics from observed motions by kernel collocation.
//!
//! The library recovers a continuous Lagrangian `L(x, ẋ)` — or a discrete
//! Lagrangian `L_d(x₀, x₁)` — from snapshots of a mechanical system's motion.
//! A canonical Gaussian field on the reproducing kernel Hilbert space of a
//! smooth kernel is conditioned on the linear constraints that the data
//! satisfy the (discrete) Euler–Lagrange equations, plus gauge-fixing
//! normalisation conditions that remove the inherent non-uniqueness of the
//! inverse problem. The posterior mean is the learned Lagrangian; the
//! posterior covariance quantifies uncertainty of any bounded linear
//! observable (Euler–Lagrange residuals, Hamiltonian, conjugate momenta,
//! symplectic form entries).
//!
//! Module overview:
//!
//! * [`kernels`] — squared-exponential kernel and its analytic mixed partial
//!   derivatives up to order (2, 2).
//! * [`functionals`] — bounded linear functionals (Euler–Lagrange components,
//!   discrete Euler–Lagrange components, momenta, evaluations) as symbolic
//!   weighted sums of derivative evaluations, with kernel pairings.
//! * [`inference`] — constraint assembly, the Gram matrix Θ, its
//!   eigendecomposition-based pseudo-inverse, and the posterior model.
//! * [`observables`] — Hamiltonian, momenta, symplectic form and volume
//!   density of a learned or analytic Lagrangian, with posterior variances
//!   for the linear ones.
//! * [`dynamics`] — acceleration fields, fixed-step Runge–Kutta integration,
//!   the variational midpoint integrator, and the discrete evolution rule.
//! * [`datagen`] — reference systems, gauge transformations, Halton
//!   sampling, uniform meshes, fill distances, and observation generation.
//! * [`cli`] — configuration handling and the command implementations behind
//!   the `lagfield` binary.

pub mod cli;
pub mod datagen;
pub mod dynamics;
mod extended;
pub mod functionals;
pub mod inference;
pub mod kernels;
pub mod observables;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Two objects that must share a dimension do not.
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// A derivative of order higher than supported was requested.
    #[error("derivative order {order} exceeds the supported maximum of {max}")]
    OrderTooHigh { order: u32, max: u32 },

    /// A computation produced a non-finite value.
    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },

    /// The velocity Hessian block (or discrete cross block) is numerically
    /// singular at the queried point.
    #[error("degenerate derivative block: reciprocal condition number {rcond:.3e} below threshold")]
    Degenerate { rcond: f64 },

    /// Newton iteration failed to reach the requested tolerance.
    #[error("Newton iteration did not converge: residual {residual:.3e} after {iterations} iterations")]
    NewtonDidNotConverge { residual: f64, iterations: usize },

    /// The right-hand side is not in the numerical range of Θ.
    #[error("constraint right-hand side not in the range of the Gram matrix: residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    InconsistentConstraints { residual: f64, tol: f64 },

    /// An operation that needs at least one sample received none.
    #[error("empty sample set")]
    EmptySampleSet,

    /// Normalisation requires a nonzero Euler–Lagrange component at the
    /// chosen gauge point.
    #[error("Euler-Lagrange component at the gauge point is zero; cannot normalise")]
    ZeroGaugeComponent,

    /// An observable or operation was applied to a model of the wrong kind.
    #[error("model kind mismatch: {context}")]
    KindMismatch { context: &'static str },

    /// Invalid configuration.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Serialization failure.
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

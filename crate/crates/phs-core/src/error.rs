//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the toolkit.
///
/// Variants are grouped by the layer that raises them; all carry enough
/// context to identify the offending input without a debugger.
#[derive(Debug, Error)]
pub enum Error {
    /// A scalar system parameter that must be positive is not.
    #[error("parameter `{name}` must be positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },

    /// A parameter profile failed the positivity probe.
    #[error("profile `{label}` is non-positive at x = {x} (value {value})")]
    NonPositiveProfile { label: String, x: f64, value: f64 },

    /// A sampled parameter value is non-positive.
    #[error("sampled parameter theta^{z}_{i} at node {k} is non-positive ({value})")]
    NonPositiveSample { z: char, i: usize, k: usize, value: f64 },

    /// Invalid system dimensions or domain.
    #[error("invalid system spec: {0}")]
    InvalidSpec(String),

    /// `A` is numerically singular.
    #[error("matrix A is numerically singular (reciprocal condition {rcond:.3e} < 1e-12)")]
    SingularA { rcond: f64 },

    /// `K` violates its symmetry / positive-semidefiniteness contract.
    #[error("matrix K is invalid: {0}")]
    InvalidK(String),

    /// Mesh construction failed.
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    /// Assembly-level failure.
    #[error("assembly error: {0}")]
    Assembly(String),

    /// Non-finite value encountered in a quadrature integrand.
    #[error("non-finite integrand sample in cell {cell} at x = {x}")]
    NonFiniteIntegrand { cell: usize, x: f64 },

    /// Eigenvalue iteration did not converge.
    #[error("eigenvalue iteration did not converge within {max_iter} iterations (dim {dim})")]
    EigNoConvergence { dim: usize, max_iter: usize },

    /// Lyapunov solve requires a Hurwitz coefficient matrix.
    #[error("Lyapunov solve rejected: A is not Hurwitz (abscissa {abscissa:.6e} >= 0)")]
    NotHurwitz { abscissa: f64 },

    /// A linear solve met a numerically singular matrix.
    #[error("singular matrix in {context}")]
    SingularMatrix { context: &'static str },

    /// Newton–Kleinman Riccati iteration failed.
    #[error("CARE solve failed after {iterations} Newton steps (last residual {residual:.3e})")]
    CareFailure { iterations: usize, residual: f64 },

    /// Stability certificate could not be produced.
    #[error("stability certificate failed: {0}")]
    Certificate(String),

    /// Time integration failure.
    #[error("simulation error: {0}")]
    Simulate(String),
}

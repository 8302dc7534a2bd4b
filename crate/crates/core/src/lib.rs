//! Matrix-free convex optimization for sparse regularized estimation.
//!
//! The solver minimizes `f(w) = f_ℓ(A w) + φ_λ(w)` where `f_ℓ` is a smooth
//! convex loss applied to predictions, `A` is a design operator available
//! only through `A·v` / `Aᵀ·u` products, and `φ_λ` is a sparsity-inducing
//! regularizer with a cheap proximal operator. The main algorithm is an
//! augmented-Lagrangian method on the Fenchel dual — equivalently, an
//! inexact proximal-point iteration on the primal — whose inner problems
//! are solved by a truncated Newton method that exploits the sparsity of
//! the proximal candidate. First-order baselines (iterative
//! soft-thresholding and its accelerated variant), duality-gap based
//! stopping, and convergence-bound diagnostics are included.

pub mod baselines;
pub mod dal;
pub mod design;
pub mod diagnostics;
mod linalg;
pub mod loss;
pub mod prox;

use thiserror::Error;

/// Best iterate carried out of a solver that exhausted its budget.
#[derive(Debug)]
pub enum BestIterate {
    Dal(Box<crate::dal::Solution>),
    FirstOrder(Box<crate::baselines::FoSolution>),
}

/// Errors surfaced by solvers and diagnostics.
///
/// Contract violations (dimension mismatches, structurally invalid inputs)
/// panic instead: they are caller bugs, and every such precondition is
/// documented on the op that checks it.
#[derive(Debug, Error)]
pub enum Error {
    /// A dual iterate left the domain of the loss conjugate.
    #[error("dual iterate outside the conjugate domain: {0}")]
    DomainViolation(String),

    /// An iterative solve hit its budget before reaching its tolerance.
    /// Carries the best iterate found so that callers can inspect it.
    #[error("no convergence after {iters} iterations: {message}")]
    NonConvergence {
        iters: usize,
        message: String,
        /// Best solution found, when the solver has one to report.
        best: Option<BestIterate>,
    },

    /// The input is degenerate for the requested computation (e.g. a
    /// relative gap of a non-positive objective, or a curvature estimate
    /// from a trace that never leaves the optimum).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// The requested operation is not available for this regularizer.
    #[error("unsupported regularizer for this operation: {0}")]
    UnsupportedRegularizer(String),
}

pub type Result<T> = std::result::Result<T, Error>;

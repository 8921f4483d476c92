//! Convergence diagnostics for Newton solves embedded in time-stepping and
//! homotopy loops.
//!
//! The solver fixed-point map is linearized at each converged point; its
//! spectrum, compared against the `1 - alpha` baseline, exposes Jacobian
//! errors before they cause divergence. Directional checks against the
//! residual then attribute an anomalous mode to the component rows that
//! disagree with the implemented derivative.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod circuit;
pub mod diagnostics;
pub mod error;
pub mod homotopy;
pub mod linalg;
pub mod localize;
pub mod nlsolve;

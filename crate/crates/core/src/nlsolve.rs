//! Newton-family solvers written as explicit iteration maps
//! `x ↦ x − α·J̃⁻¹(x)·F(x)`, with every iterate recorded.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{LinalgError, SolverError};
use crate::linalg::Lu;

/// A square nonlinear system `F(x) = 0` together with the Jacobian its
/// implementation provides. The implemented Jacobian may be wrong; the
/// diagnostics exist to find out where.
pub trait ResidualSystem: Sync {
    fn dim(&self) -> usize;
    fn residual(&self, x: &DVector<f64>) -> DVector<f64>;
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;

    /// `F(xp) − F(xm)`. Implementations that know their structure may
    /// cancel state-independent terms exactly.
    fn residual_delta(&self, xp: &DVector<f64>, xm: &DVector<f64>) -> DVector<f64> {
        self.residual(xp) - self.residual(xm)
    }
}

impl<S: ResidualSystem + ?Sized> ResidualSystem for &S {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        (**self).residual(x)
    }
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (**self).jacobian(x)
    }
    fn residual_delta(&self, xp: &DVector<f64>, xm: &DVector<f64>) -> DVector<f64> {
        (**self).residual_delta(xp, xm)
    }
}

/// Which matrix the Newton update inverts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JacobianMode {
    Implemented,
    ForwardFd { h: f64 },
    CentralFd { h: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FdScheme {
    Forward,
    Central,
}

pub const DEFAULT_FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Stop once the residual 2-norm drops strictly below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Constant damping coefficient in (0, 1].
    pub alpha: f64,
    pub jacobian_mode: JacobianMode,
    /// Pivots at or below `pivot_tol × max|J̃|` are treated as singular.
    /// Zero accepts every nonzero finite pivot.
    pub pivot_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 20,
            alpha: 1.0,
            jacobian_mode: JacobianMode::Implemented,
            pivot_tol: 0.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.tol >= 0.0) {
            return Err(SolverError::Config(format!(
                "tol must be >= 0, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(SolverError::Config("max_iter must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(SolverError::Config(format!(
                "alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        match self.jacobian_mode {
            JacobianMode::ForwardFd { h } | JacobianMode::CentralFd { h } if !(h > 0.0) => Err(
                SolverError::Config(format!("finite-difference step must be > 0, got {h}")),
            ),
            _ => Ok(()),
        }
    }

    /// Expected center of the linearized-map spectrum for an exact
    /// Jacobian: `1 − α`.
    pub fn baseline_center(&self) -> f64 {
        1.0 - self.alpha
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIterExceeded,
    DivergedNonfinite,
    /// The Jacobian could not be factored at the last iterate.
    SingularJacobian,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIterExceeded => "max_iter_exceeded",
            SolveStatus::DivergedNonfinite => "diverged_nonfinite",
            SolveStatus::SingularJacobian => "singular_jacobian",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverTrace {
    pub iterates: Vec<DVector<f64>>,
    /// Residual 2-norm at each iterate; non-finite norms are stored as +∞.
    pub residual_norms: Vec<f64>,
    pub status: SolveStatus,
}

impl SolverTrace {
    /// Number of Newton steps taken.
    pub fn steps(&self) -> usize {
        self.iterates.len().saturating_sub(1)
    }

    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

/// Finite-difference approximation of `∂F/∂x` at `x`, one column per
/// coordinate perturbation.
pub fn fd_jacobian<S: ResidualSystem + ?Sized>(
    system: &S,
    x: &DVector<f64>,
    scheme: FdScheme,
    h: f64,
) -> Result<DMatrix<f64>, SolverError> {
    let f0 = match scheme {
        FdScheme::Forward => Some(system.residual(x)),
        FdScheme::Central => None,
    };
    fd_jacobian_with(system, x, f0.as_ref(), scheme, h)
}

fn fd_jacobian_with<S: ResidualSystem + ?Sized>(
    system: &S,
    x: &DVector<f64>,
    f0: Option<&DVector<f64>>,
    scheme: FdScheme,
    h: f64,
) -> Result<DMatrix<f64>, SolverError> {
    if !(h > 0.0) {
        return Err(SolverError::Config(format!(
            "finite-difference step must be > 0, got {h}"
        )));
    }
    let n = system.dim();
    let mut jac = DMatrix::zeros(n, n);
    let mut xp = x.clone();
    for j in 0..n {
        let col = match scheme {
            FdScheme::Forward => {
                let f0 = f0.expect("forward scheme needs F(x)");
                xp[j] = x[j] + h;
                let fp = system.residual(&xp);
                (fp - f0) / h
            }
            FdScheme::Central => {
                xp[j] = x[j] + h;
                let fp = system.residual(&xp);
                xp[j] = x[j] - h;
                let fm = system.residual(&xp);
                (fp - fm) / (2.0 * h)
            }
        };
        xp[j] = x[j];
        if col.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFinite("finite-difference residual"));
        }
        jac.set_column(j, &col);
    }
    if let Some(f0) = f0 {
        if f0.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFinite("finite-difference residual"));
        }
    }
    Ok(jac)
}

fn solver_jacobian<S: ResidualSystem + ?Sized>(
    system: &S,
    x: &DVector<f64>,
    fx: &DVector<f64>,
    mode: JacobianMode,
) -> Result<DMatrix<f64>, SolverError> {
    match mode {
        JacobianMode::Implemented => Ok(system.jacobian(x)),
        JacobianMode::ForwardFd { h } => {
            fd_jacobian_with(system, x, Some(fx), FdScheme::Forward, h)
        }
        JacobianMode::CentralFd { h } => fd_jacobian_with(system, x, None, FdScheme::Central, h),
    }
}

/// `x − α·J̃⁻¹(x)·F(x)` without checking the result for finiteness.
fn raw_update<S: ResidualSystem + ?Sized>(
    system: &S,
    x: &DVector<f64>,
    fx: &DVector<f64>,
    config: &SolverConfig,
) -> Result<DVector<f64>, SolverError> {
    let jac = solver_jacobian(system, x, fx, config.jacobian_mode)?;
    let lu = Lu::new(&jac, config.pivot_tol).map_err(|e| match e {
        LinalgError::NonFinite => SolverError::NonFinite("Jacobian"),
        e => SolverError::Singular(e),
    })?;
    let delta = lu.solve(fx);
    Ok(x - delta * config.alpha)
}

/// One damped Newton iteration.
pub fn newton_step<S: ResidualSystem + ?Sized>(
    system: &S,
    x: &DVector<f64>,
    config: &SolverConfig,
) -> Result<DVector<f64>, SolverError> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::NonFinite("iterate"));
    }
    let fx = system.residual(x);
    if fx.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::NonFinite("residual"));
    }
    let next = raw_update(system, x, &fx, config)?;
    if next.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::NonFinite("Newton update"));
    }
    Ok(next)
}

fn finite_norm(v: &DVector<f64>) -> f64 {
    let n = v.norm();
    if n.is_finite() {
        n
    } else {
        f64::INFINITY
    }
}

/// Iterates [`newton_step`] from `x0` until the residual norm falls below
/// `tol`, the iteration budget runs out, or the iterate blows up. Failures
/// are reported through the trace status.
pub fn solve<S: ResidualSystem + ?Sized>(
    system: &S,
    x0: &DVector<f64>,
    config: &SolverConfig,
) -> (DVector<f64>, SolverTrace) {
    let mut x = x0.clone();
    let mut fx = system.residual(&x);
    let mut iterates = vec![x.clone()];
    let mut residual_norms = vec![finite_norm(&fx)];
    let status = loop {
        let norm = *residual_norms.last().unwrap();
        if x.iter().any(|v| !v.is_finite()) || !norm.is_finite() {
            break SolveStatus::DivergedNonfinite;
        }
        if norm < config.tol {
            break SolveStatus::Converged;
        }
        if iterates.len() > config.max_iter {
            break SolveStatus::MaxIterExceeded;
        }
        match raw_update(system, &x, &fx, config) {
            Ok(next) => {
                x = next;
                fx = system.residual(&x);
                iterates.push(x.clone());
                residual_norms.push(finite_norm(&fx));
            }
            Err(SolverError::NonFinite(_)) => break SolveStatus::DivergedNonfinite,
            Err(_) => break SolveStatus::SingularJacobian,
        }
    };
    (
        x,
        SolverTrace {
            iterates,
            residual_norms,
            status,
        },
    )
}

/// Gradient of the chained Rosenbrock objective
/// `Σ 100(x[m+1] − x[m]²)² + (x[m] − 1)²` with its analytic tridiagonal
/// Hessian as the implemented Jacobian.
#[derive(Debug, Clone)]
pub struct Rosenbrock {
    dim: usize,
}

/// Builds the Rosenbrock gradient system. `dimension` must be at least 2.
pub fn rosenbrock_system(dimension: usize) -> Rosenbrock {
    assert!(dimension >= 2, "Rosenbrock needs at least two variables");
    Rosenbrock { dim: dimension }
}

impl ResidualSystem for Rosenbrock {
    fn dim(&self) -> usize {
        self.dim
    }

    fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.dim;
        DVector::from_fn(n, |m, _| {
            let mut g = 0.0;
            if m + 1 < n {
                g += -400.0 * (x[m + 1] - x[m] * x[m]) * x[m] + 2.0 * (x[m] - 1.0);
            }
            if m > 0 {
                g += 200.0 * (x[m] - x[m - 1] * x[m - 1]);
            }
            g
        })
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dim;
        let mut jac = DMatrix::zeros(n, n);
        for m in 0..n {
            let mut diag = 0.0;
            if m + 1 < n {
                diag += 1200.0 * x[m] * x[m] - 400.0 * x[m + 1] + 2.0;
                jac[(m, m + 1)] = -400.0 * x[m];
            }
            if m > 0 {
                diag += 200.0;
                jac[(m, m - 1)] = -400.0 * x[m - 1];
            }
            jac[(m, m)] = diag;
        }
        jac
    }
}

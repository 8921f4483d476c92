//! Spectral diagnostics of a solver's iteration map at a converged fixed
//! point.
//!
//! Two estimates of the map's linearization are available: probing the map
//! with coordinate perturbations ([`linearize_map_probe`] followed by
//! [`eigs`]) and fitting a linear model to the differenced iterates the
//! solver produced on its own ([`dmd_eigs`]). Either report feeds
//! [`detect_anomalies`], and a sequence of anomaly reports feeds
//! [`track_crossings`].

mod anomaly;
mod eigen;

pub use anomaly::{
    detect_anomalies, track_crossings, AnomalyConfig, AnomalyFlags, AnomalyReport, CrossingEvent,
    FlagKind,
};
pub use eigen::{dmd_eigs, eigs, EigenMethod, EigenReport, DMD_DEGENERATE_NORM, DMD_RANK_CUTOFF};

use nalgebra::{DMatrix, DVector};

use crate::error::SolverError;
use crate::linalg::max_abs;
use crate::nlsolve::{newton_step, ResidualSystem, SolverConfig};

/// One iteration of a configured Newton solver on a fixed system, viewed as
/// the map `G(x) = x − α·J̃⁻¹(x)·F(x)`.
pub struct SolverMap<'a, S: ResidualSystem + ?Sized> {
    system: &'a S,
    config: SolverConfig,
}

impl<'a, S: ResidualSystem + ?Sized> SolverMap<'a, S> {
    pub fn new(system: &'a S, config: SolverConfig) -> Self {
        Self { system, config }
    }

    pub fn dim(&self) -> usize {
        self.system.dim()
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn evaluate(&self, x: &DVector<f64>) -> Result<DVector<f64>, SolverError> {
        newton_step(self.system, x, &self.config)
    }
}

/// Probe step used when the caller has no preference: `√ε·max(1, ‖x‖∞)`,
/// the usual forward-difference balance of truncation against roundoff.
pub fn default_probe_step(x_star: &DVector<f64>) -> f64 {
    f64::EPSILON.sqrt() * max_abs(x_star).max(1.0)
}

/// Forward-difference approximation of `DG(x_star)`, built column by column
/// from `dim` perturbed map evaluations.
pub fn linearize_map_probe<S: ResidualSystem + ?Sized>(
    map: &SolverMap<'_, S>,
    x_star: &DVector<f64>,
    h: f64,
) -> Result<DMatrix<f64>, SolverError> {
    if !(h > 0.0) {
        return Err(SolverError::Config(format!(
            "probe step must be > 0, got {h}"
        )));
    }
    let n = map.dim();
    let base = map.evaluate(x_star)?;
    let mut m = DMatrix::zeros(n, n);
    let mut xp = x_star.clone();
    for j in 0..n {
        xp[j] = x_star[j] + h;
        let gp = map.evaluate(&xp).map_err(|e| SolverError::Probe {
            column: j,
            source: Box::new(e),
        })?;
        xp[j] = x_star[j];
        m.set_column(j, &((gp - &base) / h));
    }
    Ok(m)
}

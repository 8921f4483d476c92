//! Fixed-step BDF time integration of a composed circuit, treated as a
//! homotopy in `t`: each step is a nonlinear solve initialized from the
//! previous accepted state, followed by passive diagnostics that never feed
//! back into the trajectory.

mod range;
mod sweep;

pub use range::{parse_value_range, ValueRange, ValueScale};
pub use sweep::{
    stepsize_sweep, sweep_parameter, CellOutcome, FlaggedVector, ParameterSweep, StepsizeCell,
    StepsizeSweep, StepsizeSweepConfig, SweepCell, ValueSummary,
};

use std::collections::BTreeMap;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circuit::{assemble, ComposedCircuit, FaultSpec, Netlist};
use crate::diagnostics::{
    default_probe_step, detect_anomalies, dmd_eigs, eigs, linearize_map_probe, track_crossings,
    AnomalyConfig, AnomalyReport, CrossingEvent, EigenMethod, EigenReport, SolverMap,
};
use crate::error::{LocalizeError, StepperError};
use crate::localize::{
    component_direction_check_complex, default_eps, flag_rows, LocalizationResult,
    DEFAULT_NOISE_FLOOR, DEFAULT_RELATIVE_THRESHOLD,
};
use crate::nlsolve::{solve, SolverConfig, SolverTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BdfOrder {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
}

impl BdfOrder {
    pub fn as_u8(self) -> u8 {
        match self {
            BdfOrder::One => 1,
            BdfOrder::Two => 2,
        }
    }

    pub fn from_u8(n: u8) -> Option<Self> {
        match n {
            1 => Some(BdfOrder::One),
            2 => Some(BdfOrder::Two),
            _ => None,
        }
    }
}

/// `ẋ ≈ α·x − β` at the new time point.
#[derive(Debug, Clone, PartialEq)]
pub struct Bdf {
    pub alpha: f64,
    pub beta: DVector<f64>,
    pub order_used: BdfOrder,
}

/// BDF coefficients for a step of length `dt` given accepted states
/// `history` (oldest first, most recent last). Order 2 with a single
/// history entry falls back to order 1; `dt_previous = None` means equal
/// steps.
pub fn bdf_coefficients(
    order: BdfOrder,
    dt: f64,
    dt_previous: Option<f64>,
    history: &[DVector<f64>],
) -> Result<Bdf, StepperError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(StepperError::Config(format!(
            "dt must be finite and > 0, got {dt}"
        )));
    }
    let Some(x_n) = history.last() else {
        return Err(StepperError::History("no prior state".into()));
    };
    if order == BdfOrder::One || history.len() < 2 {
        return Ok(Bdf {
            alpha: 1.0 / dt,
            beta: x_n / dt,
            order_used: BdfOrder::One,
        });
    }
    let hp = dt_previous.unwrap_or(dt);
    if !(hp > 0.0 && hp.is_finite()) {
        return Err(StepperError::Config(format!(
            "previous dt must be finite and > 0, got {hp}"
        )));
    }
    let x_nm1 = &history[history.len() - 2];
    let h = dt;
    let alpha = 1.0 / h + 1.0 / (h + hp);
    let c_n = (h + hp) / (h * hp);
    let c_nm1 = h / (hp * (h + hp));
    Ok(Bdf {
        alpha,
        beta: x_n * c_n - x_nm1 * c_nm1,
        order_used: BdfOrder::Two,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagModes {
    pub probe: bool,
    pub dmd: bool,
}

impl DiagModes {
    pub const NONE: DiagModes = DiagModes {
        probe: false,
        dmd: false,
    };
    pub const ALL: DiagModes = DiagModes {
        probe: true,
        dmd: true,
    };

    pub fn methods(self) -> impl Iterator<Item = EigenMethod> {
        [
            (self.probe, EigenMethod::Probe),
            (self.dmd, EigenMethod::Dmd),
        ]
        .into_iter()
        .filter_map(|(on, m)| on.then_some(m))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizeConfig {
    /// Perturbation size; `None` selects [`default_eps`] at each state.
    pub eps: Option<f64>,
    pub relative_threshold: f64,
    pub noise_floor: f64,
}

impl Default for LocalizeConfig {
    fn default() -> Self {
        Self {
            eps: None,
            relative_threshold: DEFAULT_RELATIVE_THRESHOLD,
            noise_floor: DEFAULT_NOISE_FLOOR,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepperConfig {
    pub order: BdfOrder,
    pub dt: f64,
    pub t_end: f64,
    pub solver: SolverConfig,
    pub diag: DiagModes,
    pub localize_on_flags: bool,
    pub anomaly: AnomalyConfig,
    pub localize: LocalizeConfig,
    /// Eigenpairs kept per report.
    pub eig_count: usize,
}

impl StepperConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            order: BdfOrder::One,
            dt,
            t_end,
            solver: SolverConfig::default(),
            diag: DiagModes::ALL,
            localize_on_flags: true,
            anomaly: AnomalyConfig::default(),
            localize: LocalizeConfig::default(),
            eig_count: 4,
        }
    }

    pub fn validate(&self) -> Result<(), StepperError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(StepperError::Config(format!(
                "dt must be finite and > 0, got {}",
                self.dt
            )));
        }
        if !(self.t_end >= self.dt && self.t_end.is_finite()) {
            return Err(StepperError::Config(format!(
                "t_end must be finite and >= dt, got {}",
                self.t_end
            )));
        }
        if self.eig_count == 0 {
            return Err(StepperError::Config("eig_count must be positive".into()));
        }
        self.solver
            .validate()
            .map_err(|e| StepperError::Config(e.to_string()))?;
        self.anomaly.validate().map_err(StepperError::Config)?;
        let l = &self.localize;
        if !(l.relative_threshold > 0.0 && l.relative_threshold < 1.0) {
            return Err(StepperError::Config(format!(
                "localize threshold must lie in (0, 1), got {}",
                l.relative_threshold
            )));
        }
        if l.eps.is_some_and(|e| !(e > 0.0 && e.is_finite())) {
            return Err(StepperError::Config(
                "localize eps must be finite and > 0".into(),
            ));
        }
        Ok(())
    }

    /// Number of steps from 0 to `t_end`.
    pub fn step_count(&self) -> usize {
        ((self.t_end / self.dt) * (1.0 + 1e-12)).floor() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Ok,
    SolverFailed,
}

impl StepStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            StepStatus::Ok => "ok",
            StepStatus::SolverFailed => "solver_failed",
        }
    }
}

/// Localization along one outlier eigenvector.
#[derive(Debug, Clone, PartialEq)]
pub struct OutlierLocalization {
    pub method: EigenMethod,
    pub eigen_index: usize,
    pub eigenvalue: Complex64,
    pub result: Result<LocalizationResult, LocalizeError>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub index: usize,
    pub t: f64,
    /// Accepted state, or the last iterate when the solve failed.
    pub x: DVector<f64>,
    pub trace: SolverTrace,
    pub order_used: BdfOrder,
    pub eigen: BTreeMap<EigenMethod, EigenReport>,
    pub anomalies: BTreeMap<EigenMethod, AnomalyReport>,
    pub localization: Vec<OutlierLocalization>,
    pub status: StepStatus,
}

impl StepRecord {
    /// Leading |λ| from the probe report when usable, else from DMD.
    pub fn leading_magnitude(&self) -> Option<f64> {
        [EigenMethod::Probe, EigenMethod::Dmd]
            .iter()
            .filter_map(|m| self.eigen.get(m))
            .find(|r| r.usable)
            .and_then(EigenReport::leading_magnitude)
    }

    /// The report localization uses: probe when usable, else DMD.
    pub fn primary_report(&self) -> Option<&EigenReport> {
        [EigenMethod::Probe, EigenMethod::Dmd]
            .iter()
            .filter_map(|m| self.eigen.get(m))
            .find(|r| r.usable)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub steps: Vec<StepRecord>,
    pub crossings: BTreeMap<EigenMethod, Vec<CrossingEvent>>,
    pub terminated_early: Option<String>,
    /// Steps that ran at order 1 although order 2 was requested.
    pub order_fallback_steps: Vec<usize>,
    pub unknown_labels: Vec<String>,
    pub stack_len: usize,
}

impl RunReport {
    pub fn completed(&self) -> bool {
        self.terminated_early.is_none()
    }

    pub fn final_step(&self) -> Option<&StepRecord> {
        self.steps.last()
    }
}

/// Solves one time step and runs the configured diagnostics on the
/// accepted state.
#[allow(clippy::too_many_arguments)]
pub fn step(
    circuit: &ComposedCircuit,
    faults: &[FaultSpec],
    index: usize,
    t_next: f64,
    bdf: &Bdf,
    x_guess: &DVector<f64>,
    config: &StepperConfig,
) -> Result<StepRecord, StepperError> {
    let sys = circuit.bind(t_next, bdf.alpha, bdf.beta.clone(), faults)?;
    let (x, trace) = solve(&sys, x_guess, &config.solver);
    let mut record = StepRecord {
        index,
        t: t_next,
        x,
        trace,
        order_used: bdf.order_used,
        eigen: BTreeMap::new(),
        anomalies: BTreeMap::new(),
        localization: Vec::new(),
        status: StepStatus::Ok,
    };
    if !record.trace.converged() {
        record.status = StepStatus::SolverFailed;
        return Ok(record);
    }
    let k = config.eig_count;
    if config.diag.probe {
        let map = SolverMap::new(&sys, config.solver);
        let report = match linearize_map_probe(&map, &record.x, default_probe_step(&record.x)) {
            Ok(m) => eigs(&m, k),
            Err(e) => EigenReport::unusable(EigenMethod::Probe, e.to_string()),
        };
        record
            .eigen
            .insert(EigenMethod::Probe, report.with_step(index));
    }
    if config.diag.dmd {
        record.eigen.insert(
            EigenMethod::Dmd,
            dmd_eigs(&record.trace, k).with_step(index),
        );
    }
    let center = Complex64::new(config.solver.baseline_center(), 0.0);
    for (m, r) in &record.eigen {
        if r.usable {
            record
                .anomalies
                .insert(*m, detect_anomalies(r, &config.anomaly, center));
        }
    }
    if config.localize_on_flags {
        let chosen = [EigenMethod::Probe, EigenMethod::Dmd]
            .into_iter()
            .find(|m| record.anomalies.contains_key(m));
        if let Some(method) = chosen {
            let report = &record.eigen[&method];
            let eps = config
                .localize
                .eps
                .unwrap_or_else(|| default_eps(&record.x));
            for &i in &record.anomalies[&method].outlier_indices {
                let result = component_direction_check_complex(
                    &sys,
                    &record.x,
                    &report.eigenvectors[i],
                    eps,
                )
                .map(|d| {
                    flag_rows(
                        &d,
                        config.localize.relative_threshold,
                        config.localize.noise_floor,
                        Some(&sys),
                    )
                });
                record.localization.push(OutlierLocalization {
                    method,
                    eigen_index: i,
                    eigenvalue: report.eigenvalues[i],
                    result,
                });
            }
        }
    }
    Ok(record)
}

/// Integrates from `t = 0` with an all-zero initial state. `faults` apply in
/// addition to those the netlist carries. Stops at the first failed solve.
pub fn run(
    netlist: &Netlist,
    faults: &[FaultSpec],
    stepper: &StepperConfig,
) -> Result<RunReport, StepperError> {
    let circuit = assemble(netlist)?;
    let mut all = netlist.faults.clone();
    all.extend_from_slice(faults);
    run_composed(&circuit, &all, stepper)
}

pub fn run_composed(
    circuit: &ComposedCircuit,
    faults: &[FaultSpec],
    stepper: &StepperConfig,
) -> Result<RunReport, StepperError> {
    stepper.validate()?;
    circuit.resolve_faults(faults)?;
    let n_steps = stepper.step_count();
    let mut history: Vec<DVector<f64>> = vec![DVector::zeros(circuit.dim())];
    let mut steps = Vec::with_capacity(n_steps);
    let mut order_fallback_steps = Vec::new();
    let mut terminated_early = None;
    for n in 1..=n_steps {
        let t = n as f64 * stepper.dt;
        let tail = &history[history.len().saturating_sub(2)..];
        let bdf = bdf_coefficients(stepper.order, stepper.dt, None, tail)?;
        if bdf.order_used != stepper.order {
            order_fallback_steps.push(n);
        }
        let guess = history.last().unwrap().clone();
        let record = step(circuit, faults, n, t, &bdf, &guess, stepper)?;
        let failed = record.status == StepStatus::SolverFailed;
        if failed {
            terminated_early = Some(format!(
                "solver {} at step {n} (t = {t:e} s)",
                record.trace.status.as_str()
            ));
        } else {
            if history.len() == 2 {
                history.remove(0);
            }
            history.push(record.x.clone());
        }
        steps.push(record);
        if failed {
            break;
        }
    }
    let crossings = crossings_by_method(&steps);
    Ok(RunReport {
        steps,
        crossings,
        terminated_early,
        order_fallback_steps,
        unknown_labels: circuit.unknowns().iter().map(|u| u.label()).collect(),
        stack_len: circuit.stack_len(),
    })
}

fn crossings_by_method(steps: &[StepRecord]) -> BTreeMap<EigenMethod, Vec<CrossingEvent>> {
    let mut out = BTreeMap::new();
    for method in [EigenMethod::Probe, EigenMethod::Dmd] {
        let reports: Vec<AnomalyReport> = steps
            .iter()
            .filter_map(|s| s.anomalies.get(&method).cloned())
            .collect();
        if steps.iter().any(|s| s.eigen.contains_key(&method)) {
            out.insert(method, track_crossings(&reports));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{Component, ComponentKind};

    /// Quadratic-interpolant derivative at the last node, via Lagrange
    /// weights computed directly from the node positions.
    fn lagrange_derivative_at_last(ts: [f64; 3], xs: [f64; 3]) -> f64 {
        let t = ts[2];
        let mut d = 0.0;
        for j in 0..3 {
            let mut sum = 0.0;
            for m in 0..3 {
                if m == j {
                    continue;
                }
                let mut term = 1.0 / (ts[j] - ts[m]);
                for l in 0..3 {
                    if l != j && l != m {
                        term *= (t - ts[l]) / (ts[j] - ts[l]);
                    }
                }
                sum += term;
            }
            d += xs[j] * sum;
        }
        d
    }

    #[test]
    fn bdf1_example() {
        let b =
            bdf_coefficients(BdfOrder::One, 1e-6, None, &[DVector::from_element(1, 2.0)]).unwrap();
        assert_eq!(b.alpha, 1e6);
        assert_eq!(b.beta[0], 2e6);
    }

    #[test]
    fn bdf2_exact_on_quadratics() {
        for (h, hp) in [(0.1, 0.1), (0.05, 0.1), (0.3, 0.07)] {
            let t_np1 = 1.7;
            let ts = [t_np1 - h - hp, t_np1 - h, t_np1];
            let x = |t: f64| 3.0 * t * t - 2.0 * t + 0.5;
            let hist = [
                DVector::from_element(1, x(ts[0])),
                DVector::from_element(1, x(ts[1])),
            ];
            let b = bdf_coefficients(BdfOrder::Two, h, Some(hp), &hist).unwrap();
            let approx = b.alpha * x(t_np1) - b.beta[0];
            let oracle = lagrange_derivative_at_last(ts, [x(ts[0]), x(ts[1]), x(ts[2])]);
            assert!((approx - (6.0 * t_np1 - 2.0)).abs() < 1e-9, "{h} {hp}");
            assert!((approx - oracle).abs() < 1e-9);
        }
    }

    #[test]
    fn bdf2_falls_back_without_history() {
        let b =
            bdf_coefficients(BdfOrder::Two, 0.1, None, &[DVector::from_element(1, 1.0)]).unwrap();
        assert_eq!(b.order_used, BdfOrder::One);
        assert!(bdf_coefficients(BdfOrder::One, 0.1, None, &[]).is_err());
        assert!(bdf_coefficients(BdfOrder::One, 0.0, None, &[DVector::zeros(1)]).is_err());
    }

    fn rc_discharge() -> Netlist {
        Netlist {
            nodes: vec!["0".into(), "1".into()],
            ground: "0".into(),
            gmin_ohms: None,
            components: vec![
                Component::new("R", ComponentKind::Resistor { r: 1.0 }, "1", "0"),
                Component::new("C", ComponentKind::Capacitor { c: 1.0 }, "1", "0"),
            ],
            faults: Vec::new(),
        }
    }

    #[test]
    fn step_count_is_robust_to_rounding() {
        assert_eq!(StepperConfig::new(2e-7, 20e-3).step_count(), 100_000);
        assert_eq!(StepperConfig::new(1e-6, 20e-3).step_count(), 20_000);
        assert_eq!(StepperConfig::new(0.1, 0.3).step_count(), 3);
    }

    #[test]
    fn linear_circuit_has_no_anomalies() {
        let cfg = StepperConfig::new(0.01, 0.05);
        let report = run(&rc_discharge(), &[], &cfg).unwrap();
        assert!(report.completed());
        assert_eq!(report.steps.len(), 5);
        for s in &report.steps {
            assert_eq!(s.status, StepStatus::Ok);
            assert!(s.anomalies.values().all(|a| a.outlier_indices.is_empty()));
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = StepperConfig::new(0.0, 1.0);
        assert!(cfg.validate().is_err());
        cfg.dt = 2.0;
        assert!(cfg.validate().is_err());
        cfg.dt = 0.1;
        assert!(cfg.validate().is_ok());
        cfg.localize.relative_threshold = 1.0;
        assert!(cfg.validate().is_err());
    }
}

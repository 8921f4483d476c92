use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;

use super::{bdf_coefficients, run_composed, BdfOrder, RunReport, StepStatus, StepperConfig};
use crate::circuit::{assemble, CircuitSystem, FaultSpec, Netlist};
use crate::diagnostics::{default_probe_step, linearize_map_probe, FlagKind, SolverMap};
use crate::error::StepperError;
use crate::linalg;
use crate::localize::LocalizationResult;
use crate::nlsolve::{solve, SolveStatus, SolverConfig};

/// One (time step, parameter value) cell of a parameter sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub step: usize,
    pub t: f64,
    pub value: f64,
    /// `None` when no usable eigen report exists for the step.
    pub leading: Option<f64>,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlaggedVector {
    pub step: usize,
    pub t: f64,
    pub eigenvalue: Complex64,
    pub vector: DVector<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueSummary {
    pub value: f64,
    pub termination: Option<String>,
    /// Leading eigenpair of every step whose primary report raised
    /// `near_unit_circle`, in step order.
    pub flagged: Vec<FlaggedVector>,
    pub flagged_duration: f64,
    /// Localization along the leading outlier at each flagged step.
    pub localizations: Vec<(usize, LocalizationResult)>,
}

impl ValueSummary {
    pub fn flagged_steps(&self) -> impl Iterator<Item = usize> + '_ {
        self.flagged.iter().map(|f| f.step)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSweep {
    pub cells: Vec<SweepCell>,
    pub summaries: Vec<ValueSummary>,
    pub unknown_labels: Vec<String>,
}

fn summarize(value: f64, report: &RunReport, dt: f64) -> ValueSummary {
    let mut flagged = Vec::new();
    let mut localizations = Vec::new();
    for s in &report.steps {
        let Some(e) = s.primary_report() else {
            continue;
        };
        let hit = s
            .anomalies
            .get(&e.method)
            .is_some_and(|a| a.flags.get(FlagKind::NearUnitCircle));
        let (Some(&eigenvalue), Some(vector)) = (e.eigenvalues.first(), e.eigenvectors.first())
        else {
            continue;
        };
        if !hit {
            continue;
        }
        flagged.push(FlaggedVector {
            step: s.index,
            t: s.t,
            eigenvalue,
            vector: vector.clone(),
        });
        if let Some(Ok(loc)) = s.localization.first().map(|l| l.result.as_ref()) {
            localizations.push((s.index, loc.clone()));
        }
    }
    ValueSummary {
        value,
        termination: report.terminated_early.clone(),
        flagged_duration: flagged.len() as f64 * dt,
        flagged,
        localizations,
    }
}

/// One full run per parameter value, fanned out across threads. A failed
/// run contributes a failed cell at the step where it stopped; the sweep
/// continues. Output order follows `values`.
pub fn sweep_parameter<F: Fn(f64) -> Netlist + Sync>(
    family: F,
    values: &[f64],
    stepper: &StepperConfig,
) -> Result<ParameterSweep, StepperError> {
    stepper.validate()?;
    let runs = values
        .par_iter()
        .map(|&value| {
            let netlist = family(value);
            let circuit = assemble(&netlist)?;
            Ok((value, run_composed(&circuit, &netlist.faults, stepper)?))
        })
        .collect::<Result<Vec<(f64, RunReport)>, StepperError>>()?;
    let mut cells = Vec::new();
    let mut summaries = Vec::new();
    let mut unknown_labels = Vec::new();
    for (value, report) in &runs {
        unknown_labels.clone_from(&report.unknown_labels);
        for s in &report.steps {
            cells.push(SweepCell {
                step: s.index,
                t: s.t,
                value: *value,
                leading: s.leading_magnitude(),
                failed: s.status == StepStatus::SolverFailed,
            });
        }
        summaries.push(summarize(*value, report, stepper.dt));
    }
    Ok(ParameterSweep {
        cells,
        summaries,
        unknown_labels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellOutcome {
    Converged {
        iterations: usize,
        leading: Option<f64>,
    },
    Failed(SolveStatus),
}

impl CellOutcome {
    pub fn leading(&self) -> Option<f64> {
        match self {
            CellOutcome::Converged { leading, .. } => *leading,
            CellOutcome::Failed(_) => None,
        }
    }

    pub fn failed(&self) -> bool {
        matches!(self, CellOutcome::Failed(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepsizeCell {
    /// Index of the accepted base state the candidate step starts from.
    pub base_step: usize,
    /// Time of that base state.
    pub t: f64,
    pub dt: f64,
    pub order: BdfOrder,
    pub outcome: CellOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepsizeSweep {
    pub base: RunReport,
    pub cells: Vec<StepsizeCell>,
}

/// Options for [`stepsize_sweep`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepsizeSweepConfig {
    /// Base trajectory settings; its diagnostics also run on the base steps.
    pub base: StepperConfig,
    /// Solver used for every candidate step.
    pub cell_solver: SolverConfig,
    pub candidate_dts: Vec<f64>,
    pub orders: Vec<BdfOrder>,
    /// Candidate steps start from every `stride`-th accepted base state.
    pub stride: usize,
}

impl StepsizeSweepConfig {
    pub fn new(base: StepperConfig, candidate_dts: Vec<f64>) -> Self {
        StepsizeSweepConfig {
            cell_solver: base.solver,
            base,
            candidate_dts,
            orders: vec![BdfOrder::One, BdfOrder::Two],
            stride: 1,
        }
    }

    pub fn validate(&self) -> Result<(), StepperError> {
        self.base.validate()?;
        self.cell_solver
            .validate()
            .map_err(|e| StepperError::Config(e.to_string()))?;
        if let Some(dt) = self
            .candidate_dts
            .iter()
            .find(|d| !(**d > 0.0 && d.is_finite()))
        {
            return Err(StepperError::Config(format!(
                "candidate dt must be finite and > 0, got {dt}"
            )));
        }
        if self.stride == 0 {
            return Err(StepperError::Config("stride must be positive".into()));
        }
        Ok(())
    }
}

/// Integrates a base trajectory, then from every `stride`-th accepted state
/// (the all-zero initial state included) attempts one step of each
/// candidate size and order. Order 2 uses the base trajectory's history, so
/// the candidate size enters the coefficients through the step ratio.
pub fn stepsize_sweep(
    netlist: &Netlist,
    faults: &[FaultSpec],
    config: &StepsizeSweepConfig,
) -> Result<StepsizeSweep, StepperError> {
    config.validate()?;
    let base = &config.base;
    let circuit = assemble(netlist)?;
    let mut all = netlist.faults.clone();
    all.extend_from_slice(faults);
    let report = run_composed(&circuit, &all, base)?;

    let mut states: Vec<(usize, f64, &DVector<f64>)> = Vec::new();
    let x0 = DVector::zeros(circuit.dim());
    states.push((0, 0.0, &x0));
    for s in report.steps.iter().filter(|s| s.status == StepStatus::Ok) {
        states.push((s.index, s.t, &s.x));
    }

    let starts: Vec<usize> = (0..states.len()).step_by(config.stride).collect();
    let per_start = starts
        .par_iter()
        .map(|&k| {
            let (index, t, x_n) = states[k];
            let history: Vec<DVector<f64>> = if k > 0 {
                vec![states[k - 1].2.clone(), x_n.clone()]
            } else {
                vec![x_n.clone()]
            };
            let mut cells = Vec::with_capacity(config.orders.len() * config.candidate_dts.len());
            for &order in &config.orders {
                for &dt in &config.candidate_dts {
                    let bdf = bdf_coefficients(order, dt, Some(base.dt), &history)?;
                    let sys = circuit.bind(t + dt, bdf.alpha, bdf.beta, &all)?;
                    cells.push(StepsizeCell {
                        base_step: index,
                        t,
                        dt,
                        order,
                        outcome: candidate_step(&sys, x_n, &config.cell_solver),
                    });
                }
            }
            Ok(cells)
        })
        .collect::<Result<Vec<Vec<StepsizeCell>>, StepperError>>()?;
    let cells = per_start.into_iter().flatten().collect();
    Ok(StepsizeSweep {
        base: report,
        cells,
    })
}

fn candidate_step(
    sys: &CircuitSystem<'_>,
    x_n: &DVector<f64>,
    solver: &SolverConfig,
) -> CellOutcome {
    let (x, trace) = solve(sys, x_n, solver);
    if !trace.converged() {
        return CellOutcome::Failed(trace.status);
    }
    let map = SolverMap::new(sys, *solver);
    let leading = linearize_map_probe(&map, &x, default_probe_step(&x))
        .ok()
        .and_then(|m| linalg::eigenvalues(&m).ok())
        .and_then(|v| v.first().map(|l| l.norm()));
    CellOutcome::Converged {
        iterations: trace.steps(),
        leading,
    }
}

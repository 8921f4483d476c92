//! Circuits assembled by component composition under modified nodal
//! analysis.
//!
//! Every component contributes a small residual block `r_n` and its
//! derivative `R_n`. Stacking the blocks gives `r` and `R̃`; a 0/1 stamp
//! matrix `A` sums each stacked row into the system equation it belongs to,
//! so that `F = A·r` and `J̃ = A·R̃`. Faults are injected into `R̃` only.

mod component;
mod fixtures;
mod format;

pub use component::{Component, ComponentKind, DIODE_EXP_CLAMP};
pub use fixtures::{
    bridge_one_error, bridge_reference, bridge_two_errors, build_diode_bridge, build_power_channel,
    fixture, power_channel_faulted, series_resistors, simple_diode_circuit, BRIDGE_DT,
    FIXTURE_NAMES, POWER_CHANNEL_DT,
};
pub use format::{parse_netlist, serialize_netlist};

use std::collections::{HashMap, HashSet};
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::CircuitError;
use crate::localize::ComponentStack;
use crate::nlsolve::ResidualSystem;
use component::{Drive, Local};

/// Suffix appended to a diode id to name its minimum-conductance resistor.
pub const GMIN_SUFFIX: &str = ".gmin";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultKind {
    /// Negates the component's whole derivative block.
    JacobianSignFlip,
    /// Multiplies the designated derivative entries by `factor`: the
    /// current-slope entry of an inductor's constraint row, the whole block
    /// for every other kind.
    JacobianScale { factor: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub component: String,
    #[serde(flatten)]
    pub kind: FaultKind,
}

impl FaultSpec {
    pub fn sign_flip(component: impl Into<String>) -> Self {
        Self {
            component: component.into(),
            kind: FaultKind::JacobianSignFlip,
        }
    }

    pub fn scale(component: impl Into<String>, factor: f64) -> Self {
        Self {
            component: component.into(),
            kind: FaultKind::JacobianScale { factor },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Netlist {
    pub nodes: Vec<String>,
    pub ground: String,
    /// Resistance placed in parallel with every diode.
    pub gmin_ohms: Option<f64>,
    pub components: Vec<Component>,
    pub faults: Vec<FaultSpec>,
}

impl Netlist {
    /// Components in residual-stack order. Each maximal run of consecutive
    /// diodes is followed by the run's minimum-conductance resistors, in the
    /// same order as the diodes.
    pub fn expanded_components(&self) -> Vec<Component> {
        let Some(g) = self.gmin_ohms else {
            return self.components.clone();
        };
        let mut out = Vec::with_capacity(self.components.len() * 2);
        let mut run: Vec<Component> = Vec::new();
        let flush = |run: &mut Vec<Component>, out: &mut Vec<Component>| {
            for d in run.drain(..) {
                out.push(Component {
                    id: format!("{}{GMIN_SUFFIX}", d.id),
                    kind: ComponentKind::Resistor { r: g },
                    nodes: d.nodes.clone(),
                });
            }
        };
        for c in &self.components {
            if c.kind.is_diode() {
                out.push(c.clone());
                run.push(c.clone());
            } else {
                flush(&mut run, &mut out);
                out.push(c.clone());
            }
        }
        flush(&mut run, &mut out);
        out
    }

    pub fn validate(&self) -> Result<(), CircuitError> {
        let mut seen = HashSet::new();
        for n in &self.nodes {
            if !seen.insert(n.as_str()) {
                return Err(CircuitError::DuplicateNode(n.clone()));
            }
        }
        if !seen.contains(self.ground.as_str()) {
            return Err(CircuitError::MissingGround(self.ground.clone()));
        }
        if let Some(g) = self.gmin_ohms {
            if !(g.is_finite() && g > 0.0) {
                return Err(CircuitError::InvalidComponent {
                    component: "gmin".into(),
                    reason: format!("gmin_ohms must be finite and > 0, got {g}"),
                });
            }
        }
        let components = self.expanded_components();
        let mut ids = HashSet::new();
        let mut used = HashSet::new();
        for c in &components {
            if !ids.insert(c.id.as_str()) {
                return Err(CircuitError::DuplicateId(c.id.clone()));
            }
            c.kind
                .validate()
                .map_err(|reason| CircuitError::InvalidComponent {
                    component: c.id.clone(),
                    reason,
                })?;
            for n in &c.nodes {
                if !seen.contains(n.as_str()) {
                    return Err(CircuitError::DanglingNode {
                        component: c.id.clone(),
                        node: n.clone(),
                    });
                }
                used.insert(n.as_str());
            }
        }
        if let Some(n) = self
            .nodes
            .iter()
            .find(|n| **n != self.ground && !used.contains(n.as_str()))
        {
            return Err(CircuitError::IsolatedNode(n.clone()));
        }
        for f in &self.faults {
            if !ids.contains(f.component.as_str()) {
                return Err(CircuitError::UnknownFaultTarget(f.component.clone()));
            }
            if let FaultKind::JacobianScale { factor } = f.kind {
                if !factor.is_finite() {
                    return Err(CircuitError::InvalidComponent {
                        component: f.component.clone(),
                        reason: format!("fault scale factor must be finite, got {factor}"),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Unknown {
    NodeVoltage(String),
    /// Current through a source or inductor.
    BranchCurrent(String),
}

impl Unknown {
    pub fn label(&self) -> String {
        match self {
            Unknown::NodeVoltage(n) => format!("V({n})"),
            Unknown::BranchCurrent(c) => format!("I({c})"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Block {
    v0: Option<usize>,
    v1: Option<usize>,
    s: Option<usize>,
    row0: usize,
    rows: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ResolvedFault {
    block: usize,
    kind: FaultKind,
}

/// A netlist after ground elimination and stamping. Immutable.
#[derive(Debug, Clone)]
pub struct ComposedCircuit {
    netlist: Netlist,
    components: Vec<Component>,
    blocks: Vec<Block>,
    unknowns: Vec<Unknown>,
    row_target: Vec<Option<usize>>,
    dynamic_mask: Vec<bool>,
    index: HashMap<String, usize>,
}

/// Builds the composed circuit. Unknowns are the non-ground node voltages in
/// declaration order followed by the internal states in stack order.
pub fn assemble(netlist: &Netlist) -> Result<ComposedCircuit, CircuitError> {
    netlist.validate()?;
    let components = netlist.expanded_components();
    let mut node_index = HashMap::new();
    let mut unknowns = Vec::new();
    for n in &netlist.nodes {
        if *n != netlist.ground {
            node_index.insert(n.as_str(), unknowns.len());
            unknowns.push(Unknown::NodeVoltage(n.clone()));
        }
    }
    let mut dynamic_mask = vec![false; unknowns.len()];
    let mut blocks = Vec::with_capacity(components.len());
    let mut row_target = Vec::new();
    let mut index = HashMap::new();
    for (k, c) in components.iter().enumerate() {
        index.insert(c.id.clone(), k);
        let v0 = node_index.get(c.nodes[0].as_str()).copied();
        let v1 = node_index.get(c.nodes[1].as_str()).copied();
        let s = if c.kind.internal_states() == 1 {
            unknowns.push(Unknown::BranchCurrent(c.id.clone()));
            dynamic_mask.push(c.kind.state_is_dynamic());
            Some(unknowns.len() - 1)
        } else {
            None
        };
        if let ComponentKind::Capacitor { .. } = c.kind {
            for v in [v0, v1].into_iter().flatten() {
                dynamic_mask[v] = true;
            }
        }
        let rows = c.kind.residual_rows();
        blocks.push(Block {
            v0,
            v1,
            s,
            row0: row_target.len(),
            rows,
        });
        row_target.push(v0);
        row_target.push(v1);
        if rows == 3 {
            row_target.push(s);
        }
    }
    Ok(ComposedCircuit {
        netlist: netlist.clone(),
        components,
        blocks,
        unknowns,
        row_target,
        dynamic_mask,
        index,
    })
}

/// Everything `eval_system` produces for one state.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemEval {
    pub f: DVector<f64>,
    pub j: DMatrix<f64>,
    pub r: DVector<f64>,
    pub r_jac: DMatrix<f64>,
}

impl ComposedCircuit {
    pub fn dim(&self) -> usize {
        self.unknowns.len()
    }

    pub fn stack_len(&self) -> usize {
        self.row_target.len()
    }

    pub fn netlist(&self) -> &Netlist {
        &self.netlist
    }

    /// Components in stack order, minimum-conductance resistors included.
    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn unknowns(&self) -> &[Unknown] {
        &self.unknowns
    }

    pub fn unknown_index(&self, unknown: &Unknown) -> Option<usize> {
        self.unknowns.iter().position(|u| u == unknown)
    }

    pub fn node_index(&self, node: &str) -> Option<usize> {
        self.unknown_index(&Unknown::NodeVoltage(node.to_string()))
    }

    pub fn dynamic_mask(&self) -> &[bool] {
        &self.dynamic_mask
    }

    pub fn component_rows(&self, id: &str) -> Option<Range<usize>> {
        self.index.get(id).map(|&k| {
            let b = &self.blocks[k];
            b.row0..b.row0 + b.rows
        })
    }

    /// `(id, rows)` for every component in stack order.
    pub fn component_row_map(&self) -> Vec<(String, Range<usize>)> {
        self.components
            .iter()
            .zip(&self.blocks)
            .map(|(c, b)| (c.id.clone(), b.row0..b.row0 + b.rows))
            .collect()
    }

    pub fn row_owner(&self, row: usize) -> Option<&str> {
        let k = self.blocks.partition_point(|b| b.row0 + b.rows <= row);
        self.components.get(k).map(|c| c.id.as_str())
    }

    /// System equation fed by each stacked row; `None` for rows stamped onto
    /// the eliminated ground node.
    pub fn row_targets(&self) -> &[Option<usize>] {
        &self.row_target
    }

    /// The 0/1 stamp matrix, `dim × stack_len`.
    pub fn stamp_matrix(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.dim(), self.stack_len());
        for (k, t) in self.row_target.iter().enumerate() {
            if let Some(i) = t {
                a[(*i, k)] = 1.0;
            }
        }
        a
    }

    pub(crate) fn resolve_faults(
        &self,
        faults: &[FaultSpec],
    ) -> Result<Vec<ResolvedFault>, CircuitError> {
        faults
            .iter()
            .map(|f| {
                self.index
                    .get(&f.component)
                    .map(|&block| ResolvedFault {
                        block,
                        kind: f.kind,
                    })
                    .ok_or_else(|| CircuitError::UnknownFaultTarget(f.component.clone()))
            })
            .collect()
    }

    fn check_beta(&self, beta: &DVector<f64>) -> Result<(), CircuitError> {
        if beta.len() != self.dim() {
            return Err(CircuitError::BetaLength {
                got: beta.len(),
                expected: self.dim(),
            });
        }
        Ok(())
    }

    /// Binds time, BDF coefficients and faults into an evaluable system.
    pub fn bind(
        &self,
        t: f64,
        alpha: f64,
        beta: DVector<f64>,
        faults: &[FaultSpec],
    ) -> Result<CircuitSystem<'_>, CircuitError> {
        self.check_beta(&beta)?;
        let faults = self.resolve_faults(faults)?;
        Ok(CircuitSystem {
            circuit: self,
            t,
            alpha,
            beta,
            faults,
        })
    }

    pub fn eval_component_residuals(
        &self,
        x: &DVector<f64>,
        t: f64,
        alpha: f64,
        beta: &DVector<f64>,
    ) -> Result<DVector<f64>, CircuitError> {
        Ok(self
            .bind(t, alpha, beta.clone(), &[])?
            .component_residuals(x))
    }

    pub fn eval_system(
        &self,
        x: &DVector<f64>,
        t: f64,
        alpha: f64,
        beta: &DVector<f64>,
        faults: &[FaultSpec],
    ) -> Result<SystemEval, CircuitError> {
        let sys = self.bind(t, alpha, beta.clone(), faults)?;
        Ok(SystemEval {
            f: sys.residual(x),
            j: sys.jacobian(x),
            r: sys.component_residuals(x),
            r_jac: sys.component_jacobian(x),
        })
    }
}

/// A composed circuit frozen at one time point and BDF stage.
#[derive(Debug, Clone)]
pub struct CircuitSystem<'a> {
    circuit: &'a ComposedCircuit,
    t: f64,
    alpha: f64,
    beta: DVector<f64>,
    faults: Vec<ResolvedFault>,
}

fn read(x: &DVector<f64>, i: Option<usize>) -> f64 {
    i.map_or(0.0, |i| x[i])
}

impl CircuitSystem<'_> {
    pub fn circuit(&self) -> &ComposedCircuit {
        self.circuit
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    fn local(&self, b: &Block, x: &DVector<f64>) -> Local {
        Local {
            v0: read(x, b.v0),
            v1: read(x, b.v1),
            s: read(x, b.s),
        }
    }

    fn drive(&self, b: &Block) -> Drive {
        Drive {
            t: self.t,
            alpha: self.alpha,
            b0: read(&self.beta, b.v0),
            b1: read(&self.beta, b.v1),
            bs: read(&self.beta, b.s),
        }
    }

    /// Derivative block of component `k`, faults applied.
    fn block_derivative(&self, k: usize, x: &DVector<f64>) -> [[f64; 3]; 3] {
        let b = &self.circuit.blocks[k];
        let kind = &self.circuit.components[k].kind;
        let mut d = [[0.0; 3]; 3];
        component::derivative(kind, self.local(b, x), self.drive(b), &mut d[..b.rows]);
        for f in self.faults.iter().filter(|f| f.block == k) {
            match f.kind {
                FaultKind::JacobianSignFlip => {
                    d.iter_mut().flatten().for_each(|v| *v = -*v);
                }
                FaultKind::JacobianScale { factor } => match component::scale_target(kind) {
                    Some((i, j)) => d[i][j] *= factor,
                    None => d.iter_mut().flatten().for_each(|v| *v *= factor),
                },
            }
        }
        d
    }

    /// Calls `emit(stack_row, column, value)` for every structurally present
    /// derivative entry, in stack-row order.
    fn for_each_derivative(&self, x: &DVector<f64>, mut emit: impl FnMut(usize, usize, f64)) {
        for (k, b) in self.circuit.blocks.iter().enumerate() {
            let d = self.block_derivative(k, x);
            let cols = [b.v0, b.v1, b.s];
            for (i, row) in d.iter().enumerate().take(b.rows) {
                for (c, v) in cols.iter().zip(row) {
                    if let Some(c) = c {
                        emit(b.row0 + i, *c, *v);
                    }
                }
            }
        }
    }

    fn scatter(&self, stacked: &DVector<f64>) -> DVector<f64> {
        let mut f = DVector::zeros(self.circuit.dim());
        for (v, t) in stacked.iter().zip(&self.circuit.row_target) {
            if let Some(i) = t {
                f[*i] += *v;
            }
        }
        f
    }
}

impl ResidualSystem for CircuitSystem<'_> {
    fn dim(&self) -> usize {
        self.circuit.dim()
    }

    fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        self.scatter(&self.component_residuals(x))
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.circuit.dim();
        let mut j = DMatrix::zeros(n, n);
        let targets = &self.circuit.row_target;
        self.for_each_derivative(x, |row, col, v| {
            if let Some(i) = targets[row] {
                j[(i, col)] += v;
            }
        });
        j
    }

    fn residual_delta(&self, xp: &DVector<f64>, xm: &DVector<f64>) -> DVector<f64> {
        self.scatter(&self.component_residual_delta(xp, xm))
    }
}

impl ComponentStack for CircuitSystem<'_> {
    fn stack_len(&self) -> usize {
        self.circuit.stack_len()
    }

    fn component_residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut r = DVector::zeros(self.circuit.stack_len());
        for (b, c) in self.circuit.blocks.iter().zip(&self.circuit.components) {
            let out = &mut r.as_mut_slice()[b.row0..b.row0 + b.rows];
            component::residual(&c.kind, self.local(b, x), self.drive(b), out);
        }
        r
    }

    fn component_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.circuit.stack_len(), self.circuit.dim());
        self.for_each_derivative(x, |row, col, v| m[(row, col)] += v);
        m
    }

    fn component_residual_delta(&self, xp: &DVector<f64>, xm: &DVector<f64>) -> DVector<f64> {
        let mut r = DVector::zeros(self.circuit.stack_len());
        for (b, c) in self.circuit.blocks.iter().zip(&self.circuit.components) {
            let out = &mut r.as_mut_slice()[b.row0..b.row0 + b.rows];
            component::residual_delta(
                &c.kind,
                self.local(b, xp),
                self.local(b, xm),
                self.drive(b),
                out,
            );
        }
        r
    }

    fn row_owner(&self, row: usize) -> Option<&str> {
        self.circuit.row_owner(row)
    }
}

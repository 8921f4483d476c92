#![allow(dead_code)]

use convdiag::circuit::{assemble, Component, ComponentKind, FaultSpec, Netlist};
use convdiag::diagnostics::{default_probe_step, eigs, linearize_map_probe, SolverMap};
use convdiag::localize::{component_direction_check_complex, default_eps, flag_rows};
use convdiag::nlsolve::{solve, SolverConfig};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

fn random_kind(rng: &mut ChaCha8Rng, allow_diode: bool) -> ComponentKind {
    match rng.gen_range(0..if allow_diode { 3 } else { 2 }) {
        0 => ComponentKind::Resistor {
            r: log_uniform(rng, 1.0, 1e3),
        },
        1 => ComponentKind::Capacitor {
            c: log_uniform(rng, 1e-7, 1e-4),
        },
        _ => ComponentKind::Diode {
            i_s: 1e-12,
            n: 1.0,
            v_t: 0.026,
        },
    }
}

fn oriented(rng: &mut ChaCha8Rng, a: &str, b: &str) -> (String, String) {
    if rng.gen_bool(0.5) {
        (a.into(), b.into())
    } else {
        (b.into(), a.into())
    }
}

/// A source on `a`, a resistor from `a` to `b`, and three more random
/// resistors, capacitors or diodes. Diodes only go from `b` to ground, so
/// each sits behind the `a`–`b` branch instead of straight across the
/// ideal source.
pub fn random_circuit(rng: &mut ChaCha8Rng) -> Netlist {
    let mut components = vec![
        Component::new(
            "V",
            ComponentKind::SinVoltageSource {
                amplitude: rng.gen_range(1.0..10.0),
                frequency: 60.0,
                phase: rng.gen_range(0.0..std::f64::consts::TAU),
                offset: 0.0,
            },
            "a",
            "g",
        ),
        Component::new(
            "X1",
            ComponentKind::Resistor {
                r: log_uniform(rng, 1.0, 1e3),
            },
            "a",
            "b",
        ),
    ];
    for k in 2..5 {
        let (u, w) = [("a", "g"), ("b", "g"), ("a", "b")][rng.gen_range(0..3)];
        let kind = random_kind(rng, (u, w) == ("b", "g"));
        let (p, q) = oriented(rng, u, w);
        components.push(Component::new(format!("X{k}"), kind, p, q));
    }
    Netlist {
        nodes: vec!["g".into(), "a".into(), "b".into()],
        ground: "g".into(),
        gmin_ohms: None,
        components,
        faults: Vec::new(),
    }
}

pub fn random_fault(rng: &mut ChaCha8Rng, netlist: &Netlist) -> FaultSpec {
    let target = netlist.components[rng.gen_range(0..netlist.components.len())]
        .id
        .clone();
    if rng.gen_bool(0.5) {
        FaultSpec::sign_flip(target)
    } else {
        let factor = if rng.gen_bool(0.5) {
            rng.gen_range(0.3..0.8)
        } else {
            rng.gen_range(1.25..3.0)
        };
        FaultSpec::scale(target, factor)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportTrial {
    pub fault: FaultSpec,
    pub leading: f64,
    pub flagged: Vec<String>,
}

impl SupportTrial {
    pub fn recovered(&self) -> bool {
        self.flagged == [self.fault.component.clone()]
    }
}

/// Faults whose solver-map eigenvalues all stay below this are invisible to
/// the diagnostics (for example a scaled diode that is reverse biased), so
/// trials redraw until the fault produces an outlier.
pub const OUTLIER_MAGNITUDE: f64 = 0.02;

/// Solves one implicit step of a random faulted circuit with the exact
/// Jacobian, probes the faulted solver map at that root and localizes along
/// its leading eigenvector. Faults leave the root unchanged, so the exact
/// solve stands in for a faulted one that might not converge.
pub fn support_trial(seed: u64) -> SupportTrial {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let netlist = random_circuit(&mut rng);
        let fault = random_fault(&mut rng, &netlist);
        let circuit = assemble(&netlist).expect("generated circuits are valid");
        let dt = log_uniform(&mut rng, 1e-6, 1e-4);
        let t = rng.gen_range(0.0..1.0 / 60.0);
        let prev = DVector::from_fn(circuit.dim(), |_, _| rng.gen_range(-1.0..1.0));
        let beta = &prev / dt;
        let exact = circuit.bind(t, 1.0 / dt, beta.clone(), &[]).unwrap();
        let solver = SolverConfig {
            max_iter: 100,
            ..Default::default()
        };
        let (x, trace) = solve(&exact, &prev, &solver);
        if !trace.converged() {
            continue;
        }
        let faulted = circuit
            .bind(t, 1.0 / dt, beta, std::slice::from_ref(&fault))
            .unwrap();
        let map = SolverMap::new(&faulted, SolverConfig::default());
        let Ok(m) = linearize_map_probe(&map, &x, default_probe_step(&x)) else {
            continue;
        };
        let report = eigs(&m, 1);
        if !report.usable {
            continue;
        }
        let leading = report.eigenvalues[0].norm();
        if leading < OUTLIER_MAGNITUDE {
            continue;
        }
        let d = component_direction_check_complex(
            &faulted,
            &x,
            &report.eigenvectors[0],
            default_eps(&x),
        )
        .expect("valid direction");
        let loc = flag_rows(&d, 0.5, 1e-6, Some(&faulted));
        return SupportTrial {
            fault,
            leading,
            flagged: loc.flagged_components,
        };
    }
}

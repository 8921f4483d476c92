//! Built-in circuits.
//!
//! Declaration orders are fixed because localization results are reported
//! as residual-stack row numbers. In the diode bridge the sign-flipped
//! minimum-conductance resistors land on rows 8–9 and 12–13; in the power
//! channel the flipped one lands on rows 17–18 and the inductor's
//! constraint row is 83.

use super::{Component, ComponentKind, FaultSpec, Netlist};

pub const BRIDGE_DT: f64 = 2e-7;
pub const POWER_CHANNEL_DT: f64 = 1e-6;

const GMIN_OHMS: f64 = 1e12;
const SOURCE_AMPLITUDE: f64 = 12.0;
const SOURCE_FREQUENCY: f64 = 60.0;

pub const FIXTURE_NAMES: [&str; 5] = [
    "bridge_ref",
    "bridge_two_errors",
    "bridge_one_error",
    "power_channel",
    "power_channel_faulted",
];

pub fn fixture(name: &str) -> Option<Netlist> {
    match name {
        "bridge_ref" => Some(bridge_reference()),
        "bridge_two_errors" => Some(bridge_two_errors()),
        "bridge_one_error" => Some(bridge_one_error()),
        "power_channel" => Some(build_power_channel()),
        "power_channel_faulted" => Some(power_channel_faulted()),
        _ => None,
    }
}

fn diode() -> ComponentKind {
    ComponentKind::Diode {
        i_s: 1e-12,
        n: 1.0,
        v_t: 0.026,
    }
}

fn mains() -> ComponentKind {
    ComponentKind::SinVoltageSource {
        amplitude: SOURCE_AMPLITUDE,
        frequency: SOURCE_FREQUENCY,
        phase: 0.0,
        offset: 0.0,
    }
}

fn r(ohms: f64) -> ComponentKind {
    ComponentKind::Resistor { r: ohms }
}

fn c(farads: f64) -> ComponentKind {
    ComponentKind::Capacitor { c: farads }
}

fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

/// Full-wave rectifier: the source drives nodes 2 and 3, the output is
/// node 1 over ground (node 0) with a 20 Ω load and a 5 mF filter
/// capacitor. `D1` (3→1) and `D3` (2→1) are the two upper diodes.
pub fn build_diode_bridge() -> Netlist {
    Netlist {
        nodes: names(4),
        ground: "0".into(),
        gmin_ohms: Some(GMIN_OHMS),
        components: vec![
            Component::new("D1", diode(), "3", "1"),
            Component::new("D2", diode(), "0", "3"),
            Component::new("D3", diode(), "2", "1"),
            Component::new("D4", diode(), "0", "2"),
            Component::new("Rload", r(20.0), "1", "0"),
            Component::new("Cfilter", c(5e-3), "1", "0"),
            Component::new("Vsrc", mains(), "2", "3"),
        ],
        faults: Vec::new(),
    }
}

pub fn bridge_reference() -> Netlist {
    build_diode_bridge()
}

pub fn bridge_two_errors() -> Netlist {
    let mut n = build_diode_bridge();
    n.faults = vec![
        FaultSpec::sign_flip("D1.gmin"),
        FaultSpec::sign_flip("D3.gmin"),
    ];
    n
}

pub fn bridge_one_error() -> Netlist {
    let mut n = build_diode_bridge();
    n.faults = vec![FaultSpec::sign_flip("D1.gmin")];
    n
}

/// Four diodes rectifying the bus (`hot`, ground) onto `(pos, neg)`. The
/// diode from the bus to `pos` is declared last.
fn bridge(prefix: &str, hot: &str, pos: &str, neg: &str) -> Vec<Component> {
    vec![
        Component::new(format!("{prefix}.D1"), diode(), neg, "0"),
        Component::new(format!("{prefix}.D2"), diode(), "0", pos),
        Component::new(format!("{prefix}.D3"), diode(), neg, hot),
        Component::new(format!("{prefix}.D4"), diode(), hot, pos),
    ]
}

/// A 12 V, 60 Hz source on bus node 1 driving six loads:
///
/// * `A`, `B`, `C`: bridges into 20 Ω, 2 kΩ and 10 mΩ, each with 5 mF.
/// * `D`: bridge into 10 Ω in series with a 1 mH saturating inductor,
///   filtered by 10 µF.
/// * `P`: 1 Ω in parallel with 5 mF on the bus.
/// * `K`: a three-stage diode chain, each stage loaded by 1 Ω and 1 pF.
///
/// Nodes: 2–3, 4–5, 6–7 and 8–9 are the bridge outputs, 10 joins the
/// inductor and resistor of bridge `D`, 11–13 are the chain stages.
pub fn build_power_channel() -> Netlist {
    let mut comps = vec![Component::new("Vsrc", mains(), "1", "0")];
    for (p, pos, neg, ohms) in [
        ("A", "2", "3", 20.0),
        ("B", "4", "5", 2e3),
        ("C", "6", "7", 1e-2),
    ] {
        comps.extend(bridge(p, "1", pos, neg));
        comps.push(Component::new(format!("{p}.C"), c(5e-3), pos, neg));
        comps.push(Component::new(format!("{p}.R"), r(ohms), pos, neg));
    }
    comps.extend(bridge("D", "1", "8", "9"));
    comps.push(Component::new("D.R", r(10.0), "10", "9"));
    comps.push(Component::new(
        "D.L",
        ComponentKind::NonlinearInductor {
            l0: 1e-3,
            i_sat: 1.0,
        },
        "8",
        "10",
    ));
    comps.push(Component::new("D.C", c(1e-5), "8", "9"));
    comps.push(Component::new("P.C", c(5e-3), "1", "0"));
    comps.push(Component::new("P.R", r(1.0), "1", "0"));
    let mut prev = "1".to_string();
    for (k, node) in ["11", "12", "13"].into_iter().enumerate() {
        comps.push(Component::new(
            format!("K.D{}", k + 1),
            diode(),
            prev.as_str(),
            node,
        ));
        comps.push(Component::new(format!("K.R{}", k + 1), r(1.0), node, "0"));
        comps.push(Component::new(format!("K.C{}", k + 1), c(1e-12), node, "0"));
        prev = node.to_string();
    }
    Netlist {
        nodes: names(14),
        ground: "0".into(),
        gmin_ohms: Some(GMIN_OHMS),
        components: comps,
        faults: Vec::new(),
    }
}

pub fn power_channel_faulted() -> Netlist {
    let mut n = build_power_channel();
    n.faults = vec![
        FaultSpec::sign_flip("A.D4.gmin"),
        FaultSpec::scale("D.L", 0.95),
    ];
    n
}

/// A sinusoidal source, a diode and a resistor in a single loop, with node
/// 2 as reference.
pub fn simple_diode_circuit() -> Netlist {
    Netlist {
        nodes: names(3),
        ground: "2".into(),
        gmin_ohms: None,
        components: vec![
            Component::new("D1", diode(), "0", "1"),
            Component::new("R1", r(100.0), "1", "2"),
            Component::new(
                "V1",
                ComponentKind::SinVoltageSource {
                    amplitude: 5.0,
                    frequency: 60.0,
                    phase: 0.0,
                    offset: 0.0,
                },
                "0",
                "2",
            ),
        ],
        faults: Vec::new(),
    }
}

/// Two resistors in series from ground back to ground through `mid`.
pub fn series_resistors(r1: f64, r2: f64) -> Netlist {
    Netlist {
        nodes: vec!["gnd".into(), "mid".into()],
        ground: "gnd".into(),
        gmin_ohms: None,
        components: vec![
            Component::new("R1", r(r1), "gnd", "mid"),
            Component::new("R2", r(r2), "mid", "gnd"),
        ],
        faults: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::assemble;

    #[test]
    fn every_fixture_assembles() {
        for name in FIXTURE_NAMES {
            let nl = fixture(name).unwrap();
            assemble(&nl).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        assert!(fixture("nope").is_none());
    }

    #[test]
    fn bridge_parameters() {
        let nl = build_diode_bridge();
        assert_eq!(nl.gmin_ohms, Some(1e12));
        for comp in nl.components.iter().filter(|c| c.kind.is_diode()) {
            assert_eq!(
                comp.kind,
                ComponentKind::Diode {
                    i_s: 1e-12,
                    n: 1.0,
                    v_t: 0.026
                }
            );
        }
    }
}

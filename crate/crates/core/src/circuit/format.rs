//! TOML netlist documents.
//!
//! ```toml
//! nodes = ["0", "1", "2"]
//! ground = "0"
//! gmin_ohms = 1e12
//!
//! [[components]]
//! id = "D1"
//! type = "diode"
//! nodes = ["1", "2"]
//! params = { I_S = 1e-12, n = 1.0, V_T = 0.026 }
//!
//! [[faults]]
//! component = "D1.gmin"
//! kind = "jacobian_sign_flip"
//! ```
//!
//! Parsing checks shape only; [`super::assemble`] checks the circuit.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Component, ComponentKind, FaultKind, FaultSpec, Netlist};
use crate::error::NetlistFormatError;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetlistDoc {
    nodes: Vec<String>,
    ground: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gmin_ohms: Option<f64>,
    #[serde(default)]
    components: Vec<ComponentDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    faults: Vec<FaultDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComponentDoc {
    id: String,
    #[serde(rename = "type")]
    kind: String,
    nodes: Vec<String>,
    #[serde(default)]
    params: BTreeMap<String, f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FaultDoc {
    component: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    factor: Option<f64>,
}

struct Params<'a> {
    id: &'a str,
    map: BTreeMap<String, f64>,
}

impl Params<'_> {
    fn schema(&self, reason: String) -> NetlistFormatError {
        NetlistFormatError::Schema {
            component: self.id.to_string(),
            reason,
        }
    }

    fn take(&mut self, key: &str) -> Result<f64, NetlistFormatError> {
        self.map
            .remove(key)
            .ok_or_else(|| self.schema(format!("missing parameter `{key}`")))
    }

    fn take_or(&mut self, key: &str, default: f64) -> f64 {
        self.map.remove(key).unwrap_or(default)
    }

    fn finish(self) -> Result<(), NetlistFormatError> {
        match self.map.keys().next() {
            Some(k) => Err(self.schema(format!("unknown parameter `{k}`"))),
            None => Ok(()),
        }
    }
}

fn component_from_doc(doc: ComponentDoc) -> Result<Component, NetlistFormatError> {
    let nodes: [String; 2] =
        doc.nodes
            .try_into()
            .map_err(|v: Vec<String>| NetlistFormatError::Schema {
                component: doc.id.clone(),
                reason: format!("expected 2 terminal nodes, got {}", v.len()),
            })?;
    let mut p = Params {
        id: &doc.id,
        map: doc.params,
    };
    let kind = match doc.kind.as_str() {
        "resistor" => ComponentKind::Resistor { r: p.take("R")? },
        "capacitor" => ComponentKind::Capacitor { c: p.take("C")? },
        "diode" => ComponentKind::Diode {
            i_s: p.take("I_S")?,
            n: p.take("n")?,
            v_t: p.take("V_T")?,
        },
        "sin_voltage_source" => ComponentKind::SinVoltageSource {
            amplitude: p.take("amplitude")?,
            frequency: p.take("frequency")?,
            phase: p.take_or("phase", 0.0),
            offset: p.take_or("offset", 0.0),
        },
        "nonlinear_inductor" => ComponentKind::NonlinearInductor {
            l0: p.take("L0")?,
            i_sat: p.take("I_sat")?,
        },
        other => return Err(p.schema(format!("unknown component type `{other}`"))),
    };
    p.finish()?;
    Ok(Component {
        id: doc.id,
        kind,
        nodes,
    })
}

fn component_to_doc(c: &Component) -> ComponentDoc {
    let params: Vec<(&str, f64)> = match c.kind {
        ComponentKind::Resistor { r } => vec![("R", r)],
        ComponentKind::Capacitor { c } => vec![("C", c)],
        ComponentKind::Diode { i_s, n, v_t } => vec![("I_S", i_s), ("n", n), ("V_T", v_t)],
        ComponentKind::SinVoltageSource {
            amplitude,
            frequency,
            phase,
            offset,
        } => vec![
            ("amplitude", amplitude),
            ("frequency", frequency),
            ("phase", phase),
            ("offset", offset),
        ],
        ComponentKind::NonlinearInductor { l0, i_sat } => vec![("L0", l0), ("I_sat", i_sat)],
    };
    ComponentDoc {
        id: c.id.clone(),
        kind: c.kind.type_name().to_string(),
        nodes: c.nodes.to_vec(),
        params: params
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
    }
}

fn fault_from_doc(doc: FaultDoc) -> Result<FaultSpec, NetlistFormatError> {
    let schema = |reason: String| NetlistFormatError::Schema {
        component: doc.component.clone(),
        reason,
    };
    let kind = match (doc.kind.as_str(), doc.factor) {
        ("jacobian_sign_flip", None) => FaultKind::JacobianSignFlip,
        ("jacobian_sign_flip", Some(_)) => return Err(schema("sign flips take no factor".into())),
        ("jacobian_scale", Some(factor)) => FaultKind::JacobianScale { factor },
        ("jacobian_scale", None) => return Err(schema("jacobian_scale needs a factor".into())),
        (other, _) => return Err(schema(format!("unknown fault kind `{other}`"))),
    };
    Ok(FaultSpec {
        component: doc.component,
        kind,
    })
}

fn fault_to_doc(f: &FaultSpec) -> FaultDoc {
    let (kind, factor) = match f.kind {
        FaultKind::JacobianSignFlip => ("jacobian_sign_flip", None),
        FaultKind::JacobianScale { factor } => ("jacobian_scale", Some(factor)),
    };
    FaultDoc {
        component: f.component.clone(),
        kind: kind.to_string(),
        factor,
    }
}

pub fn parse_netlist(text: &str) -> Result<Netlist, NetlistFormatError> {
    let doc: NetlistDoc =
        toml::from_str(text).map_err(|e| NetlistFormatError::Syntax(e.to_string()))?;
    Ok(Netlist {
        nodes: doc.nodes,
        ground: doc.ground,
        gmin_ohms: doc.gmin_ohms,
        components: doc
            .components
            .into_iter()
            .map(component_from_doc)
            .collect::<Result<_, _>>()?,
        faults: doc
            .faults
            .into_iter()
            .map(fault_from_doc)
            .collect::<Result<_, _>>()?,
    })
}

pub fn serialize_netlist(netlist: &Netlist) -> Result<String, NetlistFormatError> {
    let doc = NetlistDoc {
        nodes: netlist.nodes.clone(),
        ground: netlist.ground.clone(),
        gmin_ohms: netlist.gmin_ohms,
        components: netlist.components.iter().map(component_to_doc).collect(),
        faults: netlist.faults.iter().map(fault_to_doc).collect(),
    };
    toml::to_string(&doc).map_err(|e| NetlistFormatError::Serialize(e.to_string()))
}

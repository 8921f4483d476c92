use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Diode exponent arguments above this are extrapolated linearly.
pub const DIODE_EXP_CLAMP: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ComponentKind {
    Resistor {
        r: f64,
    },
    SinVoltageSource {
        amplitude: f64,
        frequency: f64,
        phase: f64,
        offset: f64,
    },
    Capacitor {
        c: f64,
    },
    Diode {
        i_s: f64,
        n: f64,
        v_t: f64,
    },
    NonlinearInductor {
        l0: f64,
        i_sat: f64,
    },
}

impl ComponentKind {
    pub fn type_name(&self) -> &'static str {
        match self {
            ComponentKind::Resistor { .. } => "resistor",
            ComponentKind::SinVoltageSource { .. } => "sin_voltage_source",
            ComponentKind::Capacitor { .. } => "capacitor",
            ComponentKind::Diode { .. } => "diode",
            ComponentKind::NonlinearInductor { .. } => "nonlinear_inductor",
        }
    }

    pub fn internal_states(&self) -> usize {
        match self {
            ComponentKind::SinVoltageSource { .. } | ComponentKind::NonlinearInductor { .. } => 1,
            _ => 0,
        }
    }

    /// Length of this component's block in the residual stack.
    pub fn residual_rows(&self) -> usize {
        2 + self.internal_states()
    }

    /// Whether the internal state, if any, carries a time derivative.
    pub fn state_is_dynamic(&self) -> bool {
        matches!(self, ComponentKind::NonlinearInductor { .. })
    }

    pub fn is_diode(&self) -> bool {
        matches!(self, ComponentKind::Diode { .. })
    }

    pub fn validate(&self) -> Result<(), String> {
        fn positive(name: &str, v: f64) -> Result<(), String> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(format!("{name} must be finite and > 0, got {v}"))
            }
        }
        fn finite(name: &str, v: f64) -> Result<(), String> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(format!("{name} must be finite, got {v}"))
            }
        }
        match *self {
            ComponentKind::Resistor { r } => positive("R", r),
            ComponentKind::Capacitor { c } => positive("C", c),
            ComponentKind::Diode { i_s, n, v_t } => {
                positive("I_S", i_s)?;
                positive("n", n)?;
                positive("V_T", v_t)
            }
            ComponentKind::NonlinearInductor { l0, i_sat } => {
                positive("L0", l0)?;
                positive("I_sat", i_sat)
            }
            ComponentKind::SinVoltageSource {
                amplitude,
                frequency,
                phase,
                offset,
            } => {
                finite("amplitude", amplitude)?;
                finite("phase", phase)?;
                finite("offset", offset)?;
                if frequency.is_finite() && frequency >= 0.0 {
                    Ok(())
                } else {
                    Err(format!(
                        "frequency must be finite and >= 0, got {frequency}"
                    ))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub id: String,
    pub kind: ComponentKind,
    /// Terminal 0 then terminal 1. Currents are positive leaving terminal 0.
    pub nodes: [String; 2],
}

impl Component {
    pub fn new(
        id: impl Into<String>,
        kind: ComponentKind,
        n0: impl Into<String>,
        n1: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            kind,
            nodes: [n0.into(), n1.into()],
        }
    }
}

/// Values a component block sees: terminal voltages, internal state and the
/// matching BDF history terms. Grounded terminals read 0.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Local {
    pub v0: f64,
    pub v1: f64,
    pub s: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Drive {
    pub t: f64,
    pub alpha: f64,
    pub b0: f64,
    pub b1: f64,
    pub bs: f64,
}

pub(crate) fn source_voltage(
    amplitude: f64,
    frequency: f64,
    phase: f64,
    offset: f64,
    t: f64,
) -> f64 {
    offset + amplitude * (2.0 * PI * frequency * t + phase).sin()
}

/// Clamped `exp(u)` and its derivative.
pub(crate) fn clamped_exp(u: f64) -> (f64, f64) {
    if u > DIODE_EXP_CLAMP {
        let e = DIODE_EXP_CLAMP.exp();
        (e * (1.0 + (u - DIODE_EXP_CLAMP)), e)
    } else {
        let e = u.exp();
        (e, e)
    }
}

/// `λ'(i)` and `λ''(i)` for `λ(i) = L0·Isat·i / sqrt(Isat² + i²)`.
pub(crate) fn flux_derivatives(l0: f64, i_sat: f64, i: f64) -> (f64, f64) {
    let q = i_sat * i_sat + i * i;
    let s = q.sqrt();
    let d1 = l0 * i_sat.powi(3) / (q * s);
    let d2 = -3.0 * l0 * i_sat.powi(3) * i / (q * q * s);
    (d1, d2)
}

/// Component residual block. `out` has `residual_rows()` entries.
pub(crate) fn residual(kind: &ComponentKind, x: Local, d: Drive, out: &mut [f64]) {
    let dv = x.v0 - x.v1;
    match *kind {
        ComponentKind::Resistor { r } => {
            let i = dv / r;
            out[0] = i;
            out[1] = -i;
        }
        ComponentKind::Capacitor { c } => {
            let i = d.alpha * c * dv - c * (d.b0 - d.b1);
            out[0] = i;
            out[1] = -i;
        }
        ComponentKind::Diode { i_s, n, v_t } => {
            let (e, _) = clamped_exp(dv / (n * v_t));
            let i = i_s * (e - 1.0);
            out[0] = i;
            out[1] = -i;
        }
        ComponentKind::SinVoltageSource {
            amplitude,
            frequency,
            phase,
            offset,
        } => {
            out[0] = x.s;
            out[1] = -x.s;
            out[2] = dv - source_voltage(amplitude, frequency, phase, offset, d.t);
        }
        ComponentKind::NonlinearInductor { l0, i_sat } => {
            let (d1, _) = flux_derivatives(l0, i_sat, x.s);
            out[0] = x.s;
            out[1] = -x.s;
            out[2] = dv - d1 * (d.alpha * x.s - d.bs);
        }
    }
}

/// `r(p) − r(m)` for one block, arranged so that terms not depending on the
/// state cancel exactly instead of through floating-point subtraction.
pub(crate) fn residual_delta(kind: &ComponentKind, p: Local, m: Local, d: Drive, out: &mut [f64]) {
    let ddv = (p.v0 - m.v0) - (p.v1 - m.v1);
    let ds = p.s - m.s;
    match *kind {
        ComponentKind::Resistor { r } => {
            out[0] = ddv / r;
            out[1] = -out[0];
        }
        ComponentKind::Capacitor { c } => {
            out[0] = d.alpha * c * ddv;
            out[1] = -out[0];
        }
        ComponentKind::Diode { i_s, n, v_t } => {
            let nvt = n * v_t;
            let (ep, _) = clamped_exp((p.v0 - p.v1) / nvt);
            let (em, _) = clamped_exp((m.v0 - m.v1) / nvt);
            out[0] = i_s * (ep - em);
            out[1] = -out[0];
        }
        ComponentKind::SinVoltageSource { .. } => {
            out[0] = ds;
            out[1] = -ds;
            out[2] = ddv;
        }
        ComponentKind::NonlinearInductor { l0, i_sat } => {
            let (dp, _) = flux_derivatives(l0, i_sat, p.s);
            let (dm, _) = flux_derivatives(l0, i_sat, m.s);
            out[0] = ds;
            out[1] = -ds;
            out[2] = ddv - (dp * (d.alpha * p.s - d.bs) - dm * (d.alpha * m.s - d.bs));
        }
    }
}

/// Exact partial derivatives of the block: row-major, columns
/// `[∂/∂V0, ∂/∂V1, ∂/∂s]`.
pub(crate) fn derivative(kind: &ComponentKind, x: Local, d: Drive, out: &mut [[f64; 3]]) {
    let dv = x.v0 - x.v1;
    let two_terminal = |g: f64, out: &mut [[f64; 3]]| {
        out[0] = [g, -g, 0.0];
        out[1] = [-g, g, 0.0];
    };
    match *kind {
        ComponentKind::Resistor { r } => two_terminal(1.0 / r, out),
        ComponentKind::Capacitor { c } => two_terminal(d.alpha * c, out),
        ComponentKind::Diode { i_s, n, v_t } => {
            let nvt = n * v_t;
            let (_, de) = clamped_exp(dv / nvt);
            two_terminal(i_s * de / nvt, out)
        }
        ComponentKind::SinVoltageSource { .. } => {
            out[0] = [0.0, 0.0, 1.0];
            out[1] = [0.0, 0.0, -1.0];
            out[2] = [1.0, -1.0, 0.0];
        }
        ComponentKind::NonlinearInductor { l0, i_sat } => {
            let (d1, d2) = flux_derivatives(l0, i_sat, x.s);
            out[0] = [0.0, 0.0, 1.0];
            out[1] = [0.0, 0.0, -1.0];
            out[2] = [1.0, -1.0, -(d2 * (d.alpha * x.s - d.bs) + d1 * d.alpha)];
        }
    }
}

/// Block entries (row, column) a `jacobian_scale` fault multiplies. `None`
/// means the whole block.
pub(crate) fn scale_target(kind: &ComponentKind) -> Option<(usize, usize)> {
    match kind {
        ComponentKind::NonlinearInductor { .. } => Some((2, 2)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DRIVE: Drive = Drive {
        t: 0.0,
        alpha: 0.0,
        b0: 0.0,
        b1: 0.0,
        bs: 0.0,
    };

    fn local(v0: f64, v1: f64, s: f64) -> Local {
        Local { v0, v1, s }
    }

    #[test]
    fn ohms_law() {
        let mut r = [0.0; 2];
        residual(
            &ComponentKind::Resistor { r: 20.0 },
            local(2.0, 0.0, 0.0),
            DRIVE,
            &mut r,
        );
        assert_eq!(r, [0.1, -0.1]);
    }

    #[test]
    fn unbiased_diode_carries_no_current() {
        let mut r = [1.0; 2];
        let k = ComponentKind::Diode {
            i_s: 1e-12,
            n: 1.0,
            v_t: 0.026,
        };
        residual(&k, local(0.3, 0.3, 0.0), DRIVE, &mut r);
        assert_eq!(r, [0.0, 0.0]);
    }

    #[test]
    fn diode_clamp_is_continuous_and_linear_beyond() {
        let (e0, d0) = clamped_exp(DIODE_EXP_CLAMP);
        let (e1, d1) = clamped_exp(DIODE_EXP_CLAMP + 1.0);
        assert_eq!(d0, d1);
        assert!((e1 - e0 - d0).abs() <= 1e-12 * e1);
        assert!(clamped_exp(1e6).0.is_finite());
    }

    #[test]
    fn inductor_flux_slope_at_zero_is_l0() {
        let (d1, d2) = flux_derivatives(0.001, 1.0, 0.0);
        assert_eq!(d1, 0.001);
        assert_eq!(d2, 0.0);
        let k = ComponentKind::NonlinearInductor {
            l0: 0.001,
            i_sat: 1.0,
        };
        let d = Drive {
            alpha: 1e6,
            bs: 3.0,
            ..DRIVE
        };
        let mut r = [0.0; 3];
        residual(&k, local(1.0, 0.25, 0.0), d, &mut r);
        assert!((r[2] - (0.75 - 0.001 * (0.0 - 3.0))).abs() < 1e-15);
    }

    #[test]
    fn flux_second_derivative_matches_difference_of_first() {
        for &i in &[-2.0, -0.3, 0.0, 0.7, 5.0] {
            let h = 1e-6;
            let fd = (flux_derivatives(0.001, 1.0, i + h).0
                - flux_derivatives(0.001, 1.0, i - h).0)
                / (2.0 * h);
            let (_, d2) = flux_derivatives(0.001, 1.0, i);
            assert!((fd - d2).abs() < 1e-9, "{i}: {fd} vs {d2}");
        }
    }

    #[test]
    fn source_follows_sine() {
        let k = ComponentKind::SinVoltageSource {
            amplitude: 12.0,
            frequency: 60.0,
            phase: 0.0,
            offset: 0.0,
        };
        let t = 1.0 / 240.0;
        let mut r = [0.0; 3];
        residual(&k, local(12.0, 0.0, 0.5), Drive { t, ..DRIVE }, &mut r);
        assert_eq!(r[0], 0.5);
        assert_eq!(r[1], -0.5);
        assert!(r[2].abs() < 1e-13);
    }

    #[test]
    fn delta_agrees_with_plain_difference() {
        let kinds = [
            ComponentKind::Resistor { r: 3.0 },
            ComponentKind::Capacitor { c: 1e-3 },
            ComponentKind::Diode {
                i_s: 1e-12,
                n: 1.0,
                v_t: 0.026,
            },
            ComponentKind::SinVoltageSource {
                amplitude: 2.0,
                frequency: 50.0,
                phase: 0.1,
                offset: 0.3,
            },
            ComponentKind::NonlinearInductor {
                l0: 1e-3,
                i_sat: 1.0,
            },
        ];
        let d = Drive {
            t: 1e-3,
            alpha: 1e4,
            b0: 0.2,
            b1: -0.1,
            bs: 0.4,
        };
        let p = local(0.61, -0.02, 0.31);
        let m = local(0.6, 0.01, 0.3);
        for k in &kinds {
            let n = k.residual_rows();
            let (mut rp, mut rm, mut dd) = ([0.0; 3], [0.0; 3], [0.0; 3]);
            residual(k, p, d, &mut rp[..n]);
            residual(k, m, d, &mut rm[..n]);
            residual_delta(k, p, m, d, &mut dd[..n]);
            for i in 0..n {
                let plain = rp[i] - rm[i];
                assert!(
                    (plain - dd[i]).abs() <= 1e-12 * (1.0 + rp[i].abs()),
                    "{k:?} row {i}"
                );
            }
        }
    }
}

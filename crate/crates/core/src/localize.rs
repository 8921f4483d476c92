//! Eigenvector-directed error localization.
//!
//! Along a direction `v`, a central difference of the residual estimates
//! the true directional derivative; subtracting the implemented Jacobian's
//! product `J̃·v` leaves a vector supported on the equations whose
//! derivatives are wrong, plus truncation noise. The same comparison on the
//! stacked component residuals `r` and `R̃` narrows the support down to
//! individual components.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::LocalizeError;
use crate::linalg::{max_abs, normalize_phase};
use crate::nlsolve::ResidualSystem;

/// Residual magnitudes below this are treated as this when scaling.
pub const RESIDUAL_SCALE_FLOOR: f64 = 1e-9;
pub const DEFAULT_RELATIVE_THRESHOLD: f64 = 0.5;
/// A largest scaled discrepancy at or below this is indistinguishable from
/// finite-difference noise.
pub const DEFAULT_NOISE_FLOOR: f64 = 1e-6;

/// Default perturbation size: `1e-6·max(1, ‖x‖∞)`.
pub fn default_eps(x: &DVector<f64>) -> f64 {
    1e-6 * max_abs(x).max(1.0)
}

/// Access to a composed system's stacked component residuals and their
/// implemented derivative.
pub trait ComponentStack {
    fn stack_len(&self) -> usize;
    fn component_residuals(&self, x: &DVector<f64>) -> DVector<f64>;
    fn component_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;

    /// `r(xp) − r(xm)`; see [`ResidualSystem::residual_delta`].
    fn component_residual_delta(&self, xp: &DVector<f64>, xm: &DVector<f64>) -> DVector<f64> {
        self.component_residuals(xp) - self.component_residuals(xm)
    }

    /// Identifier of the component owning a stack row.
    fn row_owner(&self, row: usize) -> Option<&str>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    System,
    Component,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscrepancyVector {
    /// Central-difference directional derivative minus the implemented one.
    pub raw: DVector<f64>,
    /// `|raw_i| / max(|r_i|, RESIDUAL_SCALE_FLOOR)`.
    pub scaled: DVector<f64>,
    pub direction: DVector<Complex64>,
    pub level: Level,
    pub eps: f64,
}

impl DiscrepancyVector {
    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn max_scaled(&self) -> f64 {
        self.scaled.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationResult {
    pub flagged_rows: Vec<usize>,
    /// Owners of the flagged rows, first-appearance order, no repeats.
    pub flagged_components: Vec<String>,
    pub threshold_used: f64,
    pub no_dominant_peak: bool,
    pub discrepancy: DiscrepancyVector,
}

struct Raw {
    d: DVector<f64>,
    residual: DVector<f64>,
}

fn check_inputs(
    n: usize,
    x: &DVector<f64>,
    v: &DVector<f64>,
    eps: f64,
) -> Result<(), LocalizeError> {
    if v.len() != n || x.len() != n {
        return Err(LocalizeError::Shape {
            got: v.len().max(x.len()),
            expected: n,
        });
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(LocalizeError::Step(eps));
    }
    Ok(())
}

/// `(xp, xm, (xp − xm)/(2ε))`. Comparing against the perturbation actually
/// applied keeps rounding in `x ± εv` out of the discrepancy.
fn stencil(
    x: &DVector<f64>,
    v: &DVector<f64>,
    eps: f64,
) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    let xp = x + v * eps;
    let xm = x - v * eps;
    let applied = (&xp - &xm) / (2.0 * eps);
    (xp, xm, applied)
}

fn finite(v: &DVector<f64>, what: &'static str) -> Result<(), LocalizeError> {
    if v.iter().all(|e| e.is_finite()) {
        Ok(())
    } else {
        Err(LocalizeError::NonFinite(what))
    }
}

fn system_raw<S: ResidualSystem + ?Sized>(
    system: &S,
    x: &DVector<f64>,
    v: &DVector<f64>,
    eps: f64,
) -> Result<Raw, LocalizeError> {
    let (xp, xm, applied) = stencil(x, v, eps);
    let delta = system.residual_delta(&xp, &xm);
    finite(&delta, "residual")?;
    let jv = system.jacobian(x) * applied;
    let residual = system.residual(x);
    finite(&residual, "residual")?;
    Ok(Raw {
        d: delta / (2.0 * eps) - jv,
        residual,
    })
}

fn component_raw<C: ComponentStack + ?Sized>(
    stack: &C,
    x: &DVector<f64>,
    v: &DVector<f64>,
    eps: f64,
) -> Result<Raw, LocalizeError> {
    let (xp, xm, applied) = stencil(x, v, eps);
    let delta = stack.component_residual_delta(&xp, &xm);
    finite(&delta, "component residual")?;
    let rv = stack.component_jacobian(x) * applied;
    let residual = stack.component_residuals(x);
    finite(&residual, "component residual")?;
    Ok(Raw {
        d: delta / (2.0 * eps) - rv,
        residual,
    })
}

fn scaled(raw: &Raw) -> DVector<f64> {
    raw.d.zip_map(&raw.residual, |d, r| {
        d.abs() / r.abs().max(RESIDUAL_SCALE_FLOOR)
    })
}

fn require_unit(v: &DVector<f64>) -> Result<(), LocalizeError> {
    let n = v.norm();
    if (n - 1.0).abs() > 1e-10 {
        return Err(LocalizeError::NotUnit(n));
    }
    Ok(())
}

fn real_check(raw: Raw, v: &DVector<f64>, level: Level, eps: f64) -> DiscrepancyVector {
    DiscrepancyVector {
        scaled: scaled(&raw),
        raw: raw.d,
        direction: v.map(|e| Complex64::new(e, 0.0)),
        level,
        eps,
    }
}

/// Runs `check` on the real and imaginary parts of the phase-normalized
/// direction and keeps the entrywise larger discrepancy.
fn complex_check(
    v: &DVector<Complex64>,
    level: Level,
    eps: f64,
    mut check: impl FnMut(&DVector<f64>) -> Result<Raw, LocalizeError>,
) -> Result<DiscrepancyVector, LocalizeError> {
    let n = v.norm();
    if (n - 1.0).abs() > 1e-10 {
        return Err(LocalizeError::NotUnit(n));
    }
    let mut w = v.clone();
    normalize_phase(&mut w);
    let mut out: Option<(DVector<f64>, DVector<f64>)> = None;
    for part in [w.map(|c| c.re), w.map(|c| c.im)] {
        if part.iter().all(|e| *e == 0.0) {
            continue;
        }
        let raw = check(&part)?;
        let s = scaled(&raw);
        out = Some(match out {
            None => (raw.d, s),
            Some((d0, s0)) => {
                let keep_new = s.zip_map(&s0, |a, b| a > b);
                let d =
                    DVector::from_fn(d0.len(), |i, _| if keep_new[i] { raw.d[i] } else { d0[i] });
                (d, s.zip_map(&s0, f64::max))
            }
        });
    }
    let (raw, scaled) = out.expect("unit vector has a nonzero part");
    Ok(DiscrepancyVector {
        raw,
        scaled,
        direction: w,
        level,
        eps,
    })
}

/// `(F(x+εv) − F(x−εv))/(2ε) − J̃(x)·v` for a real unit direction.
pub fn system_direction_check<S: ResidualSystem + ?Sized>(
    system: &S,
    x_star: &DVector<f64>,
    v: &DVector<f64>,
    eps: f64,
) -> Result<DiscrepancyVector, LocalizeError> {
    check_inputs(system.dim(), x_star, v, eps)?;
    require_unit(v)?;
    Ok(real_check(
        system_raw(system, x_star, v, eps)?,
        v,
        Level::System,
        eps,
    ))
}

/// `(r(x+εv) − r(x−εv))/(2ε) − R̃(x)·v` for a real unit direction.
pub fn component_direction_check<C: ComponentStack + ?Sized>(
    stack: &C,
    x_star: &DVector<f64>,
    v: &DVector<f64>,
    eps: f64,
) -> Result<DiscrepancyVector, LocalizeError> {
    check_inputs(x_star.len(), x_star, v, eps)?;
    require_unit(v)?;
    Ok(real_check(
        component_raw(stack, x_star, v, eps)?,
        v,
        Level::Component,
        eps,
    ))
}

pub fn system_direction_check_complex<S: ResidualSystem + ?Sized>(
    system: &S,
    x_star: &DVector<f64>,
    v: &DVector<Complex64>,
    eps: f64,
) -> Result<DiscrepancyVector, LocalizeError> {
    check_inputs(system.dim(), x_star, &v.map(|c| c.re), eps)?;
    complex_check(v, Level::System, eps, |part| {
        system_raw(system, x_star, part, eps)
    })
}

pub fn component_direction_check_complex<C: ComponentStack + ?Sized>(
    stack: &C,
    x_star: &DVector<f64>,
    v: &DVector<Complex64>,
    eps: f64,
) -> Result<DiscrepancyVector, LocalizeError> {
    check_inputs(x_star.len(), x_star, &v.map(|c| c.re), eps)?;
    complex_check(v, Level::Component, eps, |part| {
        component_raw(stack, x_star, part, eps)
    })
}

/// Flags rows whose scaled discrepancy reaches `relative_threshold` times
/// the largest one. Nothing is flagged when the largest is at or below
/// `noise_floor`. Component owners are reported when `owners` is given.
pub fn flag_rows(
    d: &DiscrepancyVector,
    relative_threshold: f64,
    noise_floor: f64,
    owners: Option<&dyn ComponentStack>,
) -> LocalizationResult {
    let max = d.max_scaled();
    let no_dominant_peak = !(max > noise_floor);
    let flagged_rows: Vec<usize> = if no_dominant_peak {
        Vec::new()
    } else {
        let cut = relative_threshold * max;
        (0..d.len()).filter(|&i| d.scaled[i] >= cut).collect()
    };
    let mut flagged_components: Vec<String> = Vec::new();
    if let (Some(stack), Level::Component) = (owners, d.level) {
        for &row in &flagged_rows {
            if let Some(id) = stack.row_owner(row) {
                if !flagged_components.iter().any(|c| c == id) {
                    flagged_components.push(id.to_string());
                }
            }
        }
    }
    LocalizationResult {
        flagged_rows,
        flagged_components,
        threshold_used: relative_threshold,
        no_dominant_peak,
        discrepancy: d.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    /// `F(x) = (x0² + x1, sin x1 + x2, x0·x2)` with row `flipped` of the
    /// implemented Jacobian negated.
    struct Toy {
        flipped: Option<usize>,
    }

    impl ResidualSystem for Toy {
        fn dim(&self) -> usize {
            3
        }
        fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
            DVector::from_vec(vec![x[0] * x[0] + x[1], x[1].sin() + x[2], x[0] * x[2]])
        }
        fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
            let mut j = DMatrix::from_row_slice(
                3,
                3,
                &[2.0 * x[0], 1.0, 0.0, 0.0, x[1].cos(), 1.0, x[2], 0.0, x[0]],
            );
            if let Some(r) = self.flipped {
                j.row_mut(r).neg_mut();
            }
            j
        }
    }

    fn unit(v: Vec<f64>) -> DVector<f64> {
        DVector::from_vec(v).normalize()
    }

    #[test]
    fn flipped_row_dominates() {
        let x = DVector::from_vec(vec![0.7, -0.4, 1.3]);
        let v = unit(vec![1.0, 1.0, 1.0]);
        for row in 0..3 {
            let d = system_direction_check(&Toy { flipped: Some(row) }, &x, &v, 1e-5).unwrap();
            let res = flag_rows(&d, 0.5, DEFAULT_NOISE_FLOOR, None);
            assert_eq!(res.flagged_rows, vec![row]);
        }
    }

    #[test]
    fn exact_jacobian_leaves_noise_only() {
        let x = DVector::from_vec(vec![0.7, -0.4, 1.3]);
        let v = unit(vec![0.3, -1.0, 0.5]);
        let d = system_direction_check(&Toy { flipped: None }, &x, &v, 1e-6).unwrap();
        assert!(max_abs(&d.raw) < 1e-9);
    }

    #[test]
    fn sign_of_direction_is_irrelevant() {
        let x = DVector::from_vec(vec![0.7, -0.4, 1.3]);
        let v = unit(vec![0.3, -1.0, 0.5]);
        let sys = Toy { flipped: Some(1) };
        let a = system_direction_check(&sys, &x, &v, 1e-5).unwrap();
        let b = system_direction_check(&sys, &x, &(-&v), 1e-5).unwrap();
        assert_eq!(a.scaled, b.scaled);
    }

    #[test]
    fn rejects_non_unit_directions() {
        let x = DVector::from_element(3, 1.0);
        let v = DVector::from_element(3, 1.0);
        assert!(matches!(
            system_direction_check(&Toy { flipped: None }, &x, &v, 1e-5),
            Err(LocalizeError::NotUnit(_))
        ));
    }

    #[test]
    fn threshold_example() {
        let d = DiscrepancyVector {
            raw: DVector::from_vec(vec![0.001, 0.9, 1.0, 0.002]),
            scaled: DVector::from_vec(vec![0.001, 0.9, 1.0, 0.002]),
            direction: DVector::zeros(4),
            level: Level::System,
            eps: 1e-5,
        };
        let r = flag_rows(&d, 0.5, DEFAULT_NOISE_FLOOR, None);
        assert_eq!(r.flagged_rows, vec![1, 2]);
        assert!(!r.no_dominant_peak);
    }

    #[test]
    fn below_noise_floor_is_no_peak() {
        let d = DiscrepancyVector {
            raw: DVector::from_element(3, 1e-9),
            scaled: DVector::from_element(3, 1e-9),
            direction: DVector::zeros(3),
            level: Level::System,
            eps: 1e-5,
        };
        let r = flag_rows(&d, 0.5, DEFAULT_NOISE_FLOOR, None);
        assert!(r.no_dominant_peak);
        assert!(r.flagged_rows.is_empty());
    }

    #[test]
    fn complex_direction_is_phase_invariant() {
        let x = DVector::from_vec(vec![0.7, -0.4, 1.3]);
        let v = DVector::from_vec(vec![
            Complex64::new(0.5, 0.1),
            Complex64::new(-0.2, 0.6),
            Complex64::new(0.3, -0.4),
        ])
        .normalize();
        let sys = Toy { flipped: Some(2) };
        let a = system_direction_check_complex(&sys, &x, &v, 1e-5).unwrap();
        let rot = v.map(|c| c * Complex64::from_polar(1.0, 1.1));
        let b = system_direction_check_complex(&sys, &x, &rot, 1e-5).unwrap();
        let ra = flag_rows(&a, 0.5, DEFAULT_NOISE_FLOOR, None);
        let rb = flag_rows(&b, 0.5, DEFAULT_NOISE_FLOOR, None);
        assert_eq!(ra.flagged_rows, vec![2]);
        assert_eq!(ra.flagged_rows, rb.flagged_rows);
        assert!((&a.scaled - &b.scaled).abs().max() < 1e-6 * a.max_scaled());
    }
}

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::eigen::{EigenMethod, EigenReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalyConfig {
    /// Eigenvalues this close to the baseline center belong to the cluster.
    pub cluster_radius: f64,
    /// Off-cluster eigenvalues at least this large are outliers.
    pub anomaly_threshold: f64,
    pub unit_circle_threshold: f64,
    pub period_doubling_real_cut: f64,
}

impl Default for AnomalyConfig {
    fn default() -> Self {
        Self {
            cluster_radius: 0.05,
            anomaly_threshold: 0.5,
            unit_circle_threshold: 0.95,
            period_doubling_real_cut: -0.9,
        }
    }
}

impl AnomalyConfig {
    pub fn validate(&self) -> Result<(), String> {
        if 0.0 <= self.cluster_radius
            && self.cluster_radius < self.anomaly_threshold
            && self.anomaly_threshold < self.unit_circle_threshold
        {
            Ok(())
        } else {
            Err(format!(
                "need 0 <= cluster_radius < anomaly_threshold < unit_circle_threshold, got {} / {} / {}",
                self.cluster_radius, self.anomaly_threshold, self.unit_circle_threshold
            ))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagKind {
    NearUnitCircle,
    PeriodDoublingSignature,
    Unstable,
}

impl FlagKind {
    pub const ALL: [FlagKind; 3] = [
        FlagKind::NearUnitCircle,
        FlagKind::PeriodDoublingSignature,
        FlagKind::Unstable,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FlagKind::NearUnitCircle => "near_unit_circle",
            FlagKind::PeriodDoublingSignature => "period_doubling_signature",
            FlagKind::Unstable => "unstable",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnomalyFlags {
    pub near_unit_circle: bool,
    pub period_doubling_signature: bool,
    pub unstable: bool,
}

impl AnomalyFlags {
    pub fn get(&self, kind: FlagKind) -> bool {
        match kind {
            FlagKind::NearUnitCircle => self.near_unit_circle,
            FlagKind::PeriodDoublingSignature => self.period_doubling_signature,
            FlagKind::Unstable => self.unstable,
        }
    }

    pub fn any(&self) -> bool {
        self.near_unit_circle || self.period_doubling_signature || self.unstable
    }

    pub fn active(&self) -> impl Iterator<Item = FlagKind> + '_ {
        FlagKind::ALL.into_iter().filter(|k| self.get(*k))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyReport {
    pub step_index: usize,
    pub method: EigenMethod,
    pub baseline_center: Complex64,
    pub cluster_indices: Vec<usize>,
    pub outlier_indices: Vec<usize>,
    pub flags: AnomalyFlags,
    pub leading_magnitude: f64,
}

/// Splits the spectrum of a usable report into the baseline cluster and
/// outliers, and raises the unit-circle flags.
pub fn detect_anomalies(
    report: &EigenReport,
    config: &AnomalyConfig,
    baseline_center: Complex64,
) -> AnomalyReport {
    let mut cluster_indices = Vec::new();
    let mut outlier_indices = Vec::new();
    let mut flags = AnomalyFlags::default();
    let mut leading_magnitude = 0.0f64;
    for (i, lam) in report.eigenvalues.iter().enumerate() {
        let mag = lam.norm();
        leading_magnitude = leading_magnitude.max(mag);
        if (lam - baseline_center).norm() > config.cluster_radius && mag >= config.anomaly_threshold
        {
            outlier_indices.push(i);
        } else {
            cluster_indices.push(i);
        }
        if mag >= config.unit_circle_threshold {
            flags.near_unit_circle = true;
            if lam.re <= config.period_doubling_real_cut {
                flags.period_doubling_signature = true;
            }
        }
        if mag >= 1.0 {
            flags.unstable = true;
        }
    }
    AnomalyReport {
        step_index: report.step_index,
        method: report.method,
        baseline_center,
        cluster_indices,
        outlier_indices,
        flags,
        leading_magnitude,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossingEvent {
    pub step_index: usize,
    pub kind: FlagKind,
    /// `true` when the flag switched on at this step.
    pub on: bool,
}

/// Edge detection on each flag across consecutive reports. All flags are
/// considered off before the first report.
pub fn track_crossings(reports: &[AnomalyReport]) -> Vec<CrossingEvent> {
    let mut state = AnomalyFlags::default();
    let mut events = Vec::new();
    for r in reports {
        for kind in FlagKind::ALL {
            let now = r.flags.get(kind);
            if now != state.get(kind) {
                events.push(CrossingEvent {
                    step_index: r.step_index,
                    kind,
                    on: now,
                });
            }
        }
        state = r.flags;
    }
    events
}

#[cfg(test)]
mod tests {
    use super::*;

    fn real_report(vals: &[f64]) -> EigenReport {
        EigenReport {
            eigenvalues: vals.iter().map(|v| Complex64::new(*v, 0.0)).collect(),
            eigenvectors: Vec::new(),
            method: EigenMethod::Probe,
            step_index: 0,
            usable: true,
            reason: None,
        }
    }

    #[test]
    fn single_outlier_no_flags() {
        let r = detect_anomalies(
            &real_report(&[0.6, 0.02, 0.01]),
            &AnomalyConfig::default(),
            Complex64::new(0.0, 0.0),
        );
        assert_eq!(r.outlier_indices, vec![0]);
        assert_eq!(r.cluster_indices, vec![1, 2]);
        assert!(!r.flags.any());
    }

    #[test]
    fn minus_one_point_zero_two_raises_everything() {
        let r = detect_anomalies(
            &real_report(&[-1.02, 0.01]),
            &AnomalyConfig::default(),
            Complex64::new(0.0, 0.0),
        );
        assert!(r.flags.near_unit_circle && r.flags.period_doubling_signature && r.flags.unstable);
        assert_eq!(r.leading_magnitude, 1.02);
    }

    #[test]
    fn damped_baseline_has_no_outliers() {
        let r = detect_anomalies(
            &real_report(&[0.5 + 1e-9, 0.5, 0.5 - 1e-9]),
            &AnomalyConfig::default(),
            Complex64::new(0.5, 0.0),
        );
        assert!(r.outlier_indices.is_empty());
    }

    #[test]
    fn intermediate_values_stay_in_cluster() {
        let r = detect_anomalies(
            &real_report(&[0.3]),
            &AnomalyConfig::default(),
            Complex64::new(0.0, 0.0),
        );
        assert_eq!(r.cluster_indices, vec![0]);
    }

    #[test]
    fn edges_are_detected() {
        let pattern = [false, false, true, true, false];
        let reports: Vec<AnomalyReport> = pattern
            .iter()
            .enumerate()
            .map(|(i, on)| AnomalyReport {
                step_index: i,
                method: EigenMethod::Probe,
                baseline_center: Complex64::new(0.0, 0.0),
                cluster_indices: vec![],
                outlier_indices: vec![],
                flags: AnomalyFlags {
                    near_unit_circle: *on,
                    ..Default::default()
                },
                leading_magnitude: 0.0,
            })
            .collect();
        let ev = track_crossings(&reports);
        assert_eq!(
            ev,
            vec![
                CrossingEvent {
                    step_index: 2,
                    kind: FlagKind::NearUnitCircle,
                    on: true
                },
                CrossingEvent {
                    step_index: 4,
                    kind: FlagKind::NearUnitCircle,
                    on: false
                },
            ]
        );
    }

    #[test]
    fn config_ordering_is_validated() {
        assert!(AnomalyConfig::default().validate().is_ok());
        let bad = AnomalyConfig {
            cluster_radius: 0.6,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}

use nalgebra::{DMatrix, DVector, SVD};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, normalize_phase, spectral_order};
use crate::nlsolve::SolverTrace;

/// Singular values below this fraction of the largest are discarded.
pub const DMD_RANK_CUTOFF: f64 = 1e-12;
/// Iterate differences smaller than this (2-norm) carry no information.
pub const DMD_DEGENERATE_NORM: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenMethod {
    Probe,
    Dmd,
}

impl EigenMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            EigenMethod::Probe => "probe",
            EigenMethod::Dmd => "dmd",
        }
    }
}

/// Leading eigenpairs of an estimated solver linearization.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenReport {
    /// Sorted by |λ| descending, then Re descending, then Im descending.
    pub eigenvalues: Vec<Complex64>,
    /// Unit 2-norm; the first component of largest magnitude is real and
    /// positive.
    pub eigenvectors: Vec<DVector<Complex64>>,
    pub method: EigenMethod,
    pub step_index: usize,
    pub usable: bool,
    pub reason: Option<String>,
}

impl EigenReport {
    pub fn unusable(method: EigenMethod, reason: impl Into<String>) -> Self {
        Self {
            eigenvalues: Vec::new(),
            eigenvectors: Vec::new(),
            method,
            step_index: 0,
            usable: false,
            reason: Some(reason.into()),
        }
    }

    pub fn with_step(mut self, step_index: usize) -> Self {
        self.step_index = step_index;
        self
    }

    pub fn leading_magnitude(&self) -> Option<f64> {
        self.eigenvalues.first().map(|l| l.norm())
    }
}

fn pairs_of(m: &DMatrix<f64>, k: usize) -> Result<Vec<(Complex64, DVector<Complex64>)>, String> {
    let vals = linalg::eigenvalues(m).map_err(|e| e.to_string())?;
    Ok(vals
        .into_iter()
        .take(k)
        .map(|lam| {
            let v = linalg::eigenvector(m, lam);
            (lam, v)
        })
        .collect())
}

fn report(pairs: Vec<(Complex64, DVector<Complex64>)>, method: EigenMethod) -> EigenReport {
    let (eigenvalues, eigenvectors) = pairs.into_iter().unzip();
    EigenReport {
        eigenvalues,
        eigenvectors,
        method,
        step_index: 0,
        usable: true,
        reason: None,
    }
}

/// Dense eigendecomposition of `m`, keeping the `k` largest-magnitude pairs.
pub fn eigs(m: &DMatrix<f64>, k: usize) -> EigenReport {
    if m.nrows() != m.ncols() {
        return EigenReport::unusable(EigenMethod::Probe, "matrix is not square");
    }
    match pairs_of(m, k) {
        Ok(pairs) => report(pairs, EigenMethod::Probe),
        Err(reason) => EigenReport::unusable(EigenMethod::Probe, reason),
    }
}

/// Fits the minimum-Frobenius-norm linear map taking each iterate difference
/// to the next one and returns its `k` leading eigenpairs, lifted back to
/// state space.
pub fn dmd_eigs(trace: &SolverTrace, k: usize) -> EigenReport {
    let unusable = |r: &str| EigenReport::unusable(EigenMethod::Dmd, r);
    if !trace.converged() {
        return unusable("solve did not converge");
    }
    let diffs: Vec<DVector<f64>> = trace.iterates.windows(2).map(|w| &w[1] - &w[0]).collect();
    if diffs.len() < 2 {
        return unusable("insufficient iterations");
    }
    if diffs.iter().all(|d| d.norm() < DMD_DEGENERATE_NORM) {
        return unusable("degenerate differences");
    }
    let n = diffs[0].len();
    let cols = diffs.len() - 1;
    let x = DMatrix::from_fn(n, cols, |i, j| diffs[j][i]);
    let y = DMatrix::from_fn(n, cols, |i, j| diffs[j + 1][i]);

    let svd = SVD::new(x, true, true);
    let (Some(u), Some(v_t)) = (svd.u.as_ref(), svd.v_t.as_ref()) else {
        return unusable("singular value decomposition failed");
    };
    let sigma = &svd.singular_values;
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));
    let smax = sigma[order[0]];
    if !(smax > 0.0) || !smax.is_finite() {
        return unusable("degenerate differences");
    }
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| sigma[i] > DMD_RANK_CUTOFF * smax)
        .collect();
    let r = kept.len();
    let ur = DMatrix::from_fn(n, r, |i, j| u[(i, kept[j])]);
    let vr = DMatrix::from_fn(cols, r, |i, j| v_t[(kept[j], i)]);
    let sinv = DMatrix::from_fn(r, r, |i, j| if i == j { 1.0 / sigma[kept[i]] } else { 0.0 });

    // Y·V·Σ⁻¹ maps reduced coordinates to state space.
    let lift = &y * &vr * &sinv;
    let reduced = ur.transpose() * &lift;

    let pairs = match pairs_of(&reduced, k) {
        Ok(p) => p,
        Err(reason) => return unusable(&reason),
    };
    let mu_max = pairs.first().map(|(l, _)| l.norm()).unwrap_or(0.0);
    let lift_c = lift.map(|v| Complex64::new(v, 0.0));
    let ur_c = ur.map(|v| Complex64::new(v, 0.0));
    let mut lifted: Vec<(Complex64, DVector<Complex64>)> = pairs
        .into_iter()
        .map(|(mu, w)| {
            let mut mode = if mu.norm() > 1e-12 * mu_max.max(f64::MIN_POSITIVE) {
                (&lift_c * &w).map(|c| c / mu)
            } else {
                &ur_c * &w
            };
            normalize_phase(&mut mode);
            (mu, mode)
        })
        .collect();
    lifted.sort_by(|a, b| spectral_order(&a.0, &b.0));
    report(lifted, EigenMethod::Dmd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlsolve::SolveStatus;

    fn trace_of(iterates: Vec<DVector<f64>>) -> SolverTrace {
        let n = iterates.len();
        SolverTrace {
            iterates,
            residual_norms: vec![0.0; n],
            status: SolveStatus::Converged,
        }
    }

    #[test]
    fn eigs_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, -0.9, 0.01]));
        let r = eigs(&m, 2);
        assert!(r.usable);
        assert_eq!(r.eigenvalues.len(), 2);
        assert!((r.eigenvalues[0] - Complex64::new(-0.9, 0.0)).norm() < 1e-14);
        assert!((r.eigenvalues[1] - Complex64::new(0.5, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn eigs_of_scaled_rotation() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -0.8, 0.8, 0.0]);
        let r = eigs(&m, 2);
        assert!((r.eigenvalues[0] - Complex64::new(0.0, 0.8)).norm() < 1e-14);
        assert!((r.eigenvalues[1] - Complex64::new(0.0, -0.8)).norm() < 1e-14);
        for v in &r.eigenvectors {
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn eigs_rejects_non_square() {
        assert!(!eigs(&DMatrix::zeros(2, 3), 1).usable);
    }

    #[test]
    fn dmd_recovers_synthetic_affine_recurrence() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, -0.9]));
        let c = DVector::from_vec(vec![0.3, -0.2]);
        let mut xs = vec![DVector::from_vec(vec![1.0, 1.0])];
        for _ in 0..4 {
            let next = &d * xs.last().unwrap() + &c;
            xs.push(next);
        }
        let r = dmd_eigs(&trace_of(xs), 2);
        assert!(r.usable, "{:?}", r.reason);
        assert!((r.eigenvalues[0] - Complex64::new(-0.9, 0.0)).norm() < 1e-10);
        assert!((r.eigenvalues[1] - Complex64::new(0.5, 0.0)).norm() < 1e-10);
        // eigenvectors are the coordinate axes
        assert!((r.eigenvectors[0][1].re - 1.0).abs() < 1e-10);
        assert!((r.eigenvectors[1][0].re - 1.0).abs() < 1e-10);
    }

    #[test]
    fn dmd_needs_three_iterates() {
        let r = dmd_eigs(
            &trace_of(vec![
                DVector::from_element(2, 1.0),
                DVector::from_element(2, 0.0),
            ]),
            2,
        );
        assert!(!r.usable);
        assert_eq!(r.reason.as_deref(), Some("insufficient iterations"));
    }

    #[test]
    fn dmd_identical_iterates_are_degenerate() {
        let r = dmd_eigs(&trace_of(vec![DVector::from_element(2, 1.0); 4]), 2);
        assert!(!r.usable);
        assert_eq!(r.reason.as_deref(), Some("degenerate differences"));
    }

    #[test]
    fn dmd_requires_convergence() {
        let mut t = trace_of(vec![DVector::from_element(1, 1.0); 4]);
        t.status = SolveStatus::MaxIterExceeded;
        assert!(!dmd_eigs(&t, 1).usable);
    }
}

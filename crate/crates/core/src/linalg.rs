//! Small dense linear algebra: real LU with partial pivoting and a complex
//! eigen-solver built on nalgebra's Schur form plus inverse iteration.

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;

use crate::error::LinalgError;

/// LU factorization `P·A = L·U` of a square real matrix, stored packed.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: DMatrix<f64>,
    perm: Vec<usize>,
}

impl Lu {
    /// Factors `a`. A pivot is rejected when it is zero, non-finite, or
    /// smaller than `rel_pivot_tol` times the largest entry of `a`.
    pub fn new(a: &DMatrix<f64>, rel_pivot_tol: f64) -> Result<Self, LinalgError> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(LinalgError::NotSquare {
                rows: n,
                cols: a.ncols(),
            });
        }
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !scale.is_finite() {
            return Err(LinalgError::NonFinite);
        }
        let floor = rel_pivot_tol * scale;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = lu[(k, k)].abs();
            for i in (k + 1)..n {
                let v = lu[(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() || best <= floor {
                return Err(LinalgError::Singular { column: k });
            }
            if p != k {
                lu.swap_rows(p, k);
                perm.swap(p, k);
            }
            let pivot = lu[(k, k)];
            for i in (k + 1)..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f != 0.0 {
                    for j in (k + 1)..n {
                        let u = lu[(k, j)];
                        lu[(i, j)] -= f * u;
                    }
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut y = DVector::from_fn(n, |i, _| b[self.perm[i]]);
        for i in 0..n {
            let mut s = y[i];
            for j in 0..i {
                s -= self.lu[(i, j)] * y[j];
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in (i + 1)..n {
                s -= self.lu[(i, j)] * y[j];
            }
            y[i] = s / self.lu[(i, i)];
        }
        y
    }
}

/// Orders eigenvalues by descending magnitude, then descending real part,
/// then descending imaginary part.
pub fn spectral_order(a: &Complex64, b: &Complex64) -> std::cmp::Ordering {
    b.norm()
        .total_cmp(&a.norm())
        .then(b.re.total_cmp(&a.re))
        .then(b.im.total_cmp(&a.im))
}

/// Rescales `v` to unit 2-norm and rotates its phase so that the first
/// component of largest magnitude is real and positive.
pub fn normalize_phase(v: &mut DVector<Complex64>) {
    let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return;
    }
    v.iter_mut().for_each(|c| *c /= norm);
    let max = v.iter().fold(0.0f64, |m, c| m.max(c.norm()));
    if let Some(anchor) = v.iter().find(|c| c.norm() >= max * (1.0 - 1e-12)) {
        let rot = anchor.conj() / anchor.norm();
        v.iter_mut().for_each(|c| *c *= rot);
    }
    // The anchor is now exactly real-positive up to rounding; clean it.
    if let Some(i) = v.iter().position(|c| c.norm() >= max * (1.0 - 1e-12)) {
        v[i] = Complex64::new(v[i].norm(), 0.0);
    }
}

/// Eigenvalues of a real square matrix, sorted with [`spectral_order`].
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>, LinalgError> {
    if m.nrows() != m.ncols() {
        return Err(LinalgError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let iters = 100 * m.nrows().max(10);
    let mut vals = match Schur::try_new(m.clone(), f64::EPSILON, iters) {
        Some(schur) => schur
            .complex_eigenvalues()
            .iter()
            .map(|c| Complex64::new(c.re, c.im))
            .collect(),
        None => shifted_eigenvalues(m, iters)?,
    };
    if vals.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    vals.sort_by(spectral_order);
    Ok(vals)
}

/// QR iteration stalls on near-scalar matrices such as a damped Newton map
/// with probe noise. Removing the mean diagonal and rescaling spreads the
/// spectrum so deflation succeeds.
fn shifted_eigenvalues(m: &DMatrix<f64>, iters: usize) -> Result<Vec<Complex64>, LinalgError> {
    let n = m.nrows();
    let shift = m.trace() / n as f64;
    let mut s = m.clone();
    for i in 0..n {
        s[(i, i)] -= shift;
    }
    let scale = s.amax();
    if scale == 0.0 {
        return Ok(vec![Complex64::new(shift, 0.0); n]);
    }
    s /= scale;
    let schur = Schur::try_new(s, f64::EPSILON, iters).ok_or(LinalgError::NoConvergence)?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|c| Complex64::new(c.re * scale + shift, c.im * scale))
        .collect())
}

/// Eigenvector of `m` for the (approximate) eigenvalue `lambda`, found by
/// shifted inverse iteration. The result is phase-normalized.
pub fn eigenvector(m: &DMatrix<f64>, lambda: Complex64) -> DVector<Complex64> {
    let n = m.nrows();
    let scale = m.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    let shift = lambda + Complex64::new(scale * 1e-10, 0.0);
    let mut b = DMatrix::<Complex64>::from_fn(n, n, |i, j| Complex64::new(m[(i, j)], 0.0));
    for i in 0..n {
        b[(i, i)] -= shift;
    }
    let lu = ComplexLu::new(b, scale * f64::EPSILON);
    let mut v = DVector::<Complex64>::from_fn(n, |i, _| {
        Complex64::new(1.0 + (i as f64 + 1.0).sqrt() * 1e-3, 0.0)
    });
    for _ in 0..3 {
        v = lu.solve(&v);
        let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            break;
        }
        v.iter_mut().for_each(|c| *c /= norm);
    }
    normalize_phase(&mut v);
    v
}

struct ComplexLu {
    lu: DMatrix<Complex64>,
    perm: Vec<usize>,
}

impl ComplexLu {
    /// Zero pivots are replaced by `tiny`, as is standard for inverse
    /// iteration where the shifted matrix is singular by construction.
    fn new(mut lu: DMatrix<Complex64>, tiny: f64) -> Self {
        let n = lu.nrows();
        let mut perm: Vec<usize> = (0..n).collect();
        let tiny = if tiny > 0.0 { tiny } else { f64::MIN_POSITIVE };
        for k in 0..n {
            let mut p = k;
            let mut best = lu[(k, k)].norm();
            for i in (k + 1)..n {
                let v = lu[(i, k)].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if p != k {
                lu.swap_rows(p, k);
                perm.swap(p, k);
            }
            if lu[(k, k)].norm() < tiny {
                lu[(k, k)] = Complex64::new(tiny, 0.0);
            }
            let pivot = lu[(k, k)];
            for i in (k + 1)..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                for j in (k + 1)..n {
                    let u = lu[(k, j)];
                    lu[(i, j)] -= f * u;
                }
            }
        }
        Self { lu, perm }
    }

    fn solve(&self, b: &DVector<Complex64>) -> DVector<Complex64> {
        let n = self.perm.len();
        let mut y = DVector::from_fn(n, |i, _| b[self.perm[i]]);
        for i in 0..n {
            let mut s = y[i];
            for j in 0..i {
                s -= self.lu[(i, j)] * y[j];
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in (i + 1)..n {
                s -= self.lu[(i, j)] * y[j];
            }
            y[i] = s / self.lu[(i, i)];
        }
        y
    }
}

pub fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

//! Complex dense linear algebra: matrices, products, Hermitian transpose,
//! Frobenius norm, and a thin singular value decomposition.
//!
//! Everything here targets the small matrices of a MIMO link (a few hundred
//! rows at most), in 64-bit precision. The SVD is a one-sided Jacobi
//! iteration, chosen for robustness on tiny ill-conditioned inputs rather
//! than speed.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite entry at ({row},{col})")]
    NonFinite { row: usize, col: usize },
    #[error("SVD failed to converge after {0} sweeps")]
    SvdNoConvergence(usize),
}

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Complex64>,
}

impl CMatrix {
    /// Builds a matrix from row-major entries, rejecting wrong lengths and
    /// non-finite values.
    pub fn new(rows: usize, cols: usize, entries: Vec<Complex64>) -> Result<Self, NumericsError> {
        if entries.len() != rows * cols {
            return Err(NumericsError::DimensionMismatch(format!(
                "{}x{} needs {} entries, got {}",
                rows,
                cols,
                rows * cols,
                entries.len()
            )));
        }
        let m = CMatrix { rows, cols, entries };
        m.check_finite()?;
        Ok(m)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix { rows, cols, entries: vec![Complex64::ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                entries.push(f(r, c));
            }
        }
        CMatrix { rows, cols, entries }
    }

    /// Diagonal matrix from the given entries.
    pub fn diag(d: &[Complex64]) -> Self {
        let mut m = CMatrix::zeros(d.len(), d.len());
        for (i, &z) in d.iter().enumerate() {
            m[(i, i)] = z;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn check_finite(&self) -> Result<(), NumericsError> {
        for r in 0..self.rows {
            for c in 0..self.cols {
                let z = self[(r, c)];
                if !z.re.is_finite() || !z.im.is_finite() {
                    return Err(NumericsError::NonFinite { row: r, col: c });
                }
            }
        }
        Ok(())
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|z| z * s).collect(),
        }
    }

    pub fn add(&self, rhs: &CMatrix) -> Result<Self, NumericsError> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(NumericsError::DimensionMismatch(format!(
                "add {}x{} with {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(CMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().zip(&rhs.entries).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, rhs: &CMatrix) -> Result<Self, NumericsError> {
        self.add(&rhs.scaled(-Complex64::ONE))
    }

    /// `n_cols` leading columns as a new matrix.
    pub fn leading_columns(&self, n_cols: usize) -> Self {
        assert!(n_cols <= self.cols);
        CMatrix::from_fn(self.rows, n_cols, |r, c| self[(r, c)])
    }

    fn column(&self, c: usize) -> Vec<Complex64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.entries[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.entries[r * self.cols + c]
    }
}

/// Exact complex product `A B`; no implicit conjugation.
pub fn matmul(a: &CMatrix, b: &CMatrix) -> Result<CMatrix, NumericsError> {
    if a.cols != b.rows {
        return Err(NumericsError::DimensionMismatch(format!(
            "matmul {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = CMatrix::zeros(a.rows, b.cols);
    for r in 0..a.rows {
        for k in 0..a.cols {
            let ark = a[(r, k)];
            if ark == Complex64::ZERO {
                continue;
            }
            for c in 0..b.cols {
                out[(r, c)] += ark * b[(k, c)];
            }
        }
    }
    Ok(out)
}

/// Hermitian (conjugate) transpose.
pub fn hermitian(a: &CMatrix) -> CMatrix {
    CMatrix::from_fn(a.cols, a.rows, |r, c| a[(c, r)].conj())
}

/// Frobenius norm: sqrt of the sum of squared magnitudes.
pub fn frobenius_norm(a: &CMatrix) -> f64 {
    a.entries.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Thin SVD factors: `A = U diag(sigma) V^H` with `k = min(rows, cols)`
/// columns in both `U` (rows x k) and `V` (cols x k), `U^H U = V^H V = I_k`,
/// and `sigma` sorted non-increasing.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub u: CMatrix,
    pub sigma: Vec<f64>,
    pub v: CMatrix,
}

impl SvdFactors {
    /// Reconstructs `U diag(sigma) V^H`.
    pub fn reconstruct(&self) -> CMatrix {
        let k = self.sigma.len();
        let scaled = CMatrix::from_fn(self.u.rows(), k, |r, c| self.u[(r, c)] * self.sigma[c]);
        matmul(&scaled, &hermitian(&self.v)).expect("factor shapes agree")
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Thin singular value decomposition.
///
/// For `rows >= cols` this is the standard thin form; for wide matrices the
/// decomposition of the Hermitian transpose is reused, so `k = min(rows, cols)`
/// singular values are always returned.
pub fn svd(a: &CMatrix) -> Result<SvdFactors, NumericsError> {
    a.check_finite()?;
    if a.rows >= a.cols {
        svd_tall(a)
    } else {
        // A^H = U' S V'^H  =>  A = V' S U'^H
        let f = svd_tall(&hermitian(a))?;
        Ok(SvdFactors { u: f.v, sigma: f.sigma, v: f.u })
    }
}

/// One-sided Jacobi on the columns of a tall (rows >= cols) matrix.
fn svd_tall(a: &CMatrix) -> Result<SvdFactors, NumericsError> {
    let (rows, cols) = (a.rows, a.cols);
    let mut w = a.clone();
    let mut v = CMatrix::identity(cols);
    let tol = 1e-14;

    let mut converged = false;
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols.saturating_sub(1) {
            for q in (p + 1)..cols {
                let mut app = 0.0;
                let mut aqq = 0.0;
                let mut apq = Complex64::ZERO;
                for r in 0..rows {
                    let wp = w[(r, p)];
                    let wq = w[(r, q)];
                    app += wp.norm_sqr();
                    aqq += wq.norm_sqr();
                    apq += wp.conj() * wq;
                }
                if apq.norm() <= tol * (app * aqq).sqrt() {
                    continue;
                }
                rotated = true;
                // Unitary 2x2 rotation diagonalizing [[app, apq], [apq*, aqq]].
                let phase = apq / apq.norm();
                let tau = (aqq - app) / (2.0 * apq.norm());
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let rotate = |m: &mut CMatrix, nrows: usize| {
                    for r in 0..nrows {
                        let mp = m[(r, p)];
                        let mq = m[(r, q)];
                        m[(r, p)] = c * mp - s * phase.conj() * mq;
                        m[(r, q)] = s * phase * mp + c * mq;
                    }
                };
                rotate(&mut w, rows);
                rotate(&mut v, cols);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(NumericsError::SvdNoConvergence(JACOBI_MAX_SWEEPS));
    }

    let mut order: Vec<usize> = (0..cols).collect();
    let norms: Vec<f64> = (0..cols)
        .map(|c| w.column(c).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).expect("finite norms"));

    let sigma: Vec<f64> = order.iter().map(|&c| norms[c]).collect();
    let v_sorted = CMatrix::from_fn(cols, cols, |r, c| v[(r, order[c])]);
    let mut u = CMatrix::zeros(rows, cols);
    let rank_tol = sigma.first().copied().unwrap_or(0.0) * f64::EPSILON * rows as f64;
    for c in 0..cols {
        if sigma[c] > rank_tol && sigma[c] > 0.0 {
            let inv = 1.0 / sigma[c];
            for r in 0..rows {
                u[(r, c)] = w[(r, order[c])] * inv;
            }
        } else {
            fill_orthonormal_column(&mut u, c);
        }
    }
    Ok(SvdFactors { u, sigma, v: v_sorted })
}

/// Replaces column `c` of `u` by a unit vector orthogonal to columns `0..c`,
/// used to complete the basis when singular values vanish.
fn fill_orthonormal_column(u: &mut CMatrix, c: usize) {
    let rows = u.rows();
    for pivot in 0..rows {
        let mut cand = vec![Complex64::ZERO; rows];
        cand[pivot] = Complex64::ONE;
        for prev in 0..c {
            let proj: Complex64 =
                (0..rows).map(|r| u[(r, prev)].conj() * cand[r]).sum();
            for (r, item) in cand.iter_mut().enumerate() {
                *item -= proj * u[(r, prev)];
            }
        }
        let norm = cand.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.5 {
            for (r, item) in cand.iter().enumerate() {
                u[(r, c)] = item / norm;
            }
            return;
        }
    }
    unreachable!("orthonormal completion always succeeds for c < rows");
}

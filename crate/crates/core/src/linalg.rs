//! Small dense linear algebra helpers on top of nalgebra.
//!
//! The symmetric eigensolver is a cyclic Jacobi iteration. For the matrix
//! sizes in this crate (a handful of regressors) it is both fast and
//! accurate, and it leaves already-diagonal blocks untouched: a matrix that
//! is diagonal up to rounding yields identity eigenvectors, which keeps the
//! canonical transform reproducible for replicated designs. Repeated
//! eigenvalues get a basis determined by the eigenspace alone.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Off-diagonal entries below this fraction of the geometric mean of their
/// diagonal pair are treated as zero by the Jacobi sweep.
const JACOBI_NEGLIGIBLE: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigenvalues within this fraction of the spectral radius are treated as
/// one repeated eigenvalue.
const TIE_RELATIVE: f64 = 1e-10;

/// Minimum residual norm for a projected axis to enter a cluster basis.
const CLUSTER_PIVOT: f64 = 1e-3;

/// Entries below this magnitude are skipped when fixing eigenvector signs.
const SIGN_THRESHOLD: f64 = 1e-10;

/// Smallest-to-largest eigenvalue ratio below which a symmetric matrix is
/// not accepted as positive definite.
pub const PD_RATIO: f64 = 1e-12;

/// Eigen-decomposition of a symmetric matrix, eigenvalues in nonincreasing
/// order and eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymmetricEigen {
    /// Cyclic Jacobi decomposition of a symmetric matrix.
    ///
    /// Ties in the eigenvalues keep their original index order; each
    /// eigenvector is signed so that its first non-negligible entry is
    /// positive.
    pub fn new(matrix: &DMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if n != matrix.ncols() {
            return Err(Error::Dimension(format!(
                "eigendecomposition needs a square matrix, got {}x{}",
                n,
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("eigendecomposition input"));
        }
        let mut a = matrix.clone();
        // symmetrize to remove rounding asymmetry in callers' products
        for i in 0..n {
            for j in 0..i {
                let avg = 0.5 * (a[(i, j)] + a[(j, i)]);
                a[(i, j)] = avg;
                a[(j, i)] = avg;
            }
        }
        let mut v = DMatrix::<f64>::identity(n, n);
        let floor = f64::EPSILON * 1e-4 * a.norm();

        for _ in 0..JACOBI_MAX_SWEEPS {
            let mut rotated = false;
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[(p, q)];
                    if apq == 0.0 {
                        continue;
                    }
                    let app = a[(p, p)];
                    let aqq = a[(q, q)];
                    let scale = (app.abs() * aqq.abs()).sqrt();
                    if apq.abs() <= JACOBI_NEGLIGIBLE * scale || apq.abs() <= floor {
                        a[(p, q)] = 0.0;
                        a[(q, p)] = 0.0;
                        continue;
                    }
                    rotated = true;
                    let theta = (aqq - app) / (2.0 * apq);
                    // signum(0.0) is 1.0, so equal diagonals rotate by π/4
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
            if !rotated {
                break;
            }
        }

        let mut order: Vec<usize> = (0..n).collect();
        // stable: equal eigenvalues keep index order
        order.sort_by(|&i, &j| a[(j, j)].partial_cmp(&a[(i, i)]).unwrap());
        let mut values: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
        let mut vectors = DMatrix::<f64>::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            vectors.set_column(dst, &v.column(src));
        }

        let scale = values.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
        let mut start = 0;
        while start < n {
            let mut end = start + 1;
            while end < n && values[start] - values[end] <= TIE_RELATIVE * scale {
                end += 1;
            }
            if end - start > 1 {
                canonical_cluster_basis(&mut vectors, start, end);
                let mean = values[start..end].iter().sum::<f64>() / (end - start) as f64;
                values[start..end].fill(mean);
            }
            start = end;
        }

        for j in 0..n {
            let mut col = vectors.column_mut(j);
            if let Some(first) = col.iter().find(|x| x.abs() > SIGN_THRESHOLD) {
                if *first < 0.0 {
                    col.neg_mut();
                }
            }
        }
        Ok(SymmetricEigen { values, vectors })
    }

    /// Reassemble `V f(Λ) V'`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let diag = DVector::from_iterator(self.values.len(), self.values.iter().map(|&x| f(x)));
        &self.vectors * DMatrix::from_diagonal(&diag) * self.vectors.transpose()
    }
}

/// Replace the eigenvector columns `start..end` of a repeated eigenvalue by
/// the basis obtained from Gram-Schmidt on the projections of the
/// coordinate axes, taken in index order. The eigenspace fixes the result,
/// whatever basis the iteration happened to produce.
fn canonical_cluster_basis(vectors: &mut DMatrix<f64>, start: usize, end: usize) {
    let n = vectors.nrows();
    let block = vectors.columns(start, end - start).clone_owned();
    let projector = &block * block.transpose();
    let mut chosen: Vec<DVector<f64>> = Vec::with_capacity(end - start);
    for axis in 0..n {
        if chosen.len() == end - start {
            break;
        }
        let mut u = projector.column(axis).clone_owned();
        for b in &chosen {
            let c = b.dot(&u);
            u.axpy(-c, b, 1.0);
        }
        // a second pass keeps the basis orthonormal to rounding
        for b in &chosen {
            let c = b.dot(&u);
            u.axpy(-c, b, 1.0);
        }
        let norm = u.norm();
        if norm > CLUSTER_PIVOT {
            chosen.push(u / norm);
        }
    }
    for (offset, b) in chosen.iter().enumerate() {
        vectors.set_column(start + offset, b);
    }
}

/// Polar decomposition `A = W R` of a full column rank `m × k` matrix:
/// `R = (A'A)^{1/2}` and `W = A (A'A)^{-1/2}`, from the thin SVD.
pub fn polar_decomposition(a: &DMatrix<f64>, what: &'static str) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (m, k) = a.shape();
    if k == 0 || m < k {
        return Err(Error::Dimension(format!(
            "{what} is {m}x{k}; polar factor needs m >= k >= 1"
        )));
    }
    let svd = a.clone().svd(true, true);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    check_pd(&sv.iter().map(|s| s * s).collect::<Vec<_>>(), what)?;
    let u = svd.u.ok_or(Error::NonFinite(what))?;
    let v_t = svd.v_t.ok_or(Error::NonFinite(what))?;
    let root = v_t.transpose() * DMatrix::from_diagonal(&svd.singular_values) * &v_t;
    let root = (&root + root.transpose()) * 0.5;
    Ok((root, u * v_t))
}

/// Symmetric positive definite square root and its inverse.
pub fn spd_sqrt_pair(matrix: &DMatrix<f64>, what: &'static str) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let eig = SymmetricEigen::new(matrix)?;
    check_pd(&eig.values, what)?;
    Ok((eig.map(f64::sqrt), eig.map(|x| 1.0 / x.sqrt())))
}

pub(crate) fn check_pd(values: &[f64], what: &'static str) -> Result<()> {
    let largest = values.first().copied().unwrap_or(0.0);
    let smallest = values.last().copied().unwrap_or(0.0);
    if !(largest > 0.0) || !(smallest > PD_RATIO * largest) {
        return Err(Error::NotPositiveDefinite(what));
    }
    Ok(())
}

/// Cholesky factor of a symmetric positive definite matrix with the
/// spectral positivity check applied first.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
}

impl SpdFactor {
    pub fn new(matrix: &DMatrix<f64>, what: &'static str) -> Result<Self> {
        let eig = SymmetricEigen::new(matrix)?;
        check_pd(&eig.values, what)?;
        let chol = Cholesky::new(matrix.clone()).ok_or(Error::NotPositiveDefinite(what))?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        Ok(SpdFactor { chol, log_det })
    }

    /// `x' Σ⁻¹ x` via a triangular solve.
    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        let l = self.chol.l();
        let z = l
            .solve_lower_triangular(x)
            .expect("Cholesky factor has a positive diagonal");
        z.norm_squared()
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn lower(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }
}

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Orthonormal basis (columns) of the orthogonal complement of the column
/// space of `a`, assumed to have full column rank.
pub fn orthogonal_complement(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (k, r) = a.shape();
    if r > k {
        return Err(Error::Dimension(format!("complement of {r} columns in dimension {k}")));
    }
    let q = a.clone().qr().q();
    let projector = DMatrix::<f64>::identity(k, k) - &q * q.transpose();
    let eig = SymmetricEigen::new(&projector)?;
    Ok(eig.vectors.columns(0, k - r).clone_owned())
}

/// Singular values of `a` in nonincreasing order.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.partial_cmp(x).unwrap());
    s
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

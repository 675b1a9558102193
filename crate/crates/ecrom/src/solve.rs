//! Thin deterministic wrappers around the factorization backend.
//!
//! Every entry point first forces sequential execution so that repeated runs
//! produce bitwise-identical results regardless of the host's core count.

use crate::error::{Error, Result};
use crate::sparse::Csr;
use faer::prelude::*;
use faer::sparse::SparseColMat;
use nalgebra::DMatrix;
use std::sync::Once;

static DETERMINISTIC: Once = Once::new();

/// Force single-threaded kernels; called by every solver constructor.
pub fn init_deterministic() {
    DETERMINISTIC.call_once(|| {
        faer::set_global_parallelism(faer::Parallelism::None);
    });
}

fn to_faer(a: &Csr) -> Result<SparseColMat<usize, f64>> {
    let trips: Vec<(usize, usize, f64)> = a.triplets().collect();
    SparseColMat::try_new_from_triplets(a.nrows(), a.ncols(), &trips)
        .map_err(|e| Error::Factorization(format!("sparse conversion: {e:?}")))
}

fn col_to_vec(m: faer::MatRef<'_, f64>) -> Vec<f64> {
    (0..m.nrows()).map(|i| m.read(i, 0)).collect()
}

fn vec_to_col(v: &[f64]) -> faer::Mat<f64> {
    faer::Mat::from_fn(v.len(), 1, |i, _| v[i])
}

/// Cholesky factorization of a sparse symmetric positive definite matrix.
pub struct SpdFactor {
    factor: faer::sparse::linalg::solvers::Cholesky<usize, f64>,
    n: usize,
}

impl SpdFactor {
    pub fn new(a: &Csr) -> Result<Self> {
        init_deterministic();
        assert_eq!(a.nrows(), a.ncols());
        let fa = to_faer(a)?;
        let factor = fa
            .as_ref()
            .sp_cholesky(faer::Side::Lower)
            .map_err(|e| Error::Factorization(format!("cholesky: {e:?}")))?;
        Ok(Self { factor, n: a.nrows() })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n);
        let sol = self.factor.solve(vec_to_col(rhs));
        col_to_vec(sol.as_ref())
    }
}

/// Sparse LU factorization for indefinite systems (saddle points).
pub struct LuFactor {
    factor: faer::sparse::linalg::solvers::Lu<usize, f64>,
    n: usize,
}

impl LuFactor {
    pub fn new(a: &Csr) -> Result<Self> {
        init_deterministic();
        assert_eq!(a.nrows(), a.ncols());
        let fa = to_faer(a)?;
        let factor =
            fa.as_ref().sp_lu().map_err(|e| Error::Factorization(format!("lu: {e:?}")))?;
        Ok(Self { factor, n: a.nrows() })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n);
        let sol = self.factor.solve(vec_to_col(rhs));
        col_to_vec(sol.as_ref())
    }
}

/// Thin singular value decomposition x = U diag(s) V'; singular values come
/// back in descending order, U is nrows x k, V is ncols x k, k = min(dims).
pub fn thin_svd(x: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    init_deterministic();
    let (nr, nc) = (x.nrows(), x.ncols());
    let fa = faer::mat::from_column_major_slice::<f64>(x.as_slice(), nr, nc);
    let svd = fa.thin_svd();
    let k = nr.min(nc);
    let u = DMatrix::from_fn(nr, k, |i, j| svd.u().read(i, j));
    let s: Vec<f64> = (0..k).map(|i| svd.s_diagonal().read(i)).collect();
    let v = DMatrix::from_fn(nc, k, |i, j| svd.v().read(i, j));
    (u, s, v)
}

/// Eigendecomposition of a symmetric matrix; eigenvalues ascending.
pub fn symmetric_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    init_deterministic();
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let fa = faer::mat::from_column_major_slice::<f64>(a.as_slice(), n, n);
    let evd = fa.selfadjoint_eigendecomposition(faer::Side::Lower);
    let vals: Vec<f64> = (0..n).map(|i| evd.s().column_vector().read(i)).collect();
    let vecs = DMatrix::from_fn(n, n, |i, j| evd.u().read(i, j));
    (vals, vecs)
}

/// Dense LU solve for small square systems.
pub fn solve_dense(a: DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.nrows();
    assert_eq!(b.len(), n);
    let rhs = nalgebra::DVector::from_column_slice(b);
    let lu = a.lu();
    let x = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Factorization("dense system is singular".into()))?;
    Ok(x.as_slice().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spd_and_lu_round_trip() {
        // tridiagonal SPD
        let n = 50;
        let mut trips = Vec::new();
        for i in 0..n {
            trips.push((i, i, 2.5));
            if i + 1 < n {
                trips.push((i, i + 1, -1.0));
                trips.push((i + 1, i, -1.0));
            }
        }
        let a = Csr::from_triplets(n, n, trips);
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let b = a.matvec(&x_true);
        let ch = SpdFactor::new(&a).unwrap();
        let x = ch.solve(&b);
        for (xi, ti) in x.iter().zip(&x_true) {
            assert!((xi - ti).abs() < 1e-12);
        }
        let lu = LuFactor::new(&a).unwrap();
        let x = lu.solve(&b);
        for (xi, ti) in x.iter().zip(&x_true) {
            assert!((xi - ti).abs() < 1e-12);
        }
    }

    #[test]
    fn svd_reconstructs_and_orders() {
        let x = DMatrix::from_row_slice(4, 3, &[
            1.0, 2.0, 0.5, //
            0.0, 1.0, -1.0, //
            3.0, -1.0, 2.0, //
            0.5, 0.5, 0.5,
        ]);
        let (u, s, v) = thin_svd(&x);
        assert!(s.windows(2).all(|w| w[0] >= w[1]));
        let rec = &u * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(s.clone())) * v.transpose();
        assert!((&x - &rec).amax() < 1e-12);
        let utu = u.transpose() * &u;
        assert!((utu - DMatrix::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn symmetric_eigen_ascending() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 1.5]);
        let (vals, vecs) = symmetric_eigen(&a);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        for j in 0..3 {
            let v = vecs.column(j);
            let av = &a * v;
            assert!((av - vals[j] * v).amax() < 1e-12);
        }
    }

    #[test]
    fn dense_solve_and_singular_detection() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let x = solve_dense(a, &[3.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
        let sing = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(solve_dense(sing, &[1.0, 2.0]).is_err());
    }
}

//! Volume-weighted proper orthogonal decomposition and basis construction.
//!
//! All bases are orthonormal in the Omega inner product and inherit the
//! discrete divergence-freeness of the (lifted) snapshots, because every
//! mode is a linear combination of snapshot columns.

use crate::error::{Error, Result};
use crate::operators::FomOperators;
use crate::poisson::PoissonSolver;
use crate::solve;
use crate::solver::SnapshotSet;
use crate::vecops;
use nalgebra::DMatrix;

/// Relative singular-value floor below which modes count as numerically
/// rank-deficient.
const RANK_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PodMethod {
    /// Thin SVD of the weighted snapshot matrix (default).
    ThinSvd,
    /// Eigendecomposition of the snapshot correlation matrix.
    SnapshotCorrelation,
}

/// Reduced velocity and pressure bases.
#[derive(Debug, Clone)]
pub struct RomBasis {
    /// n_vel x M, Omega-orthonormal columns.
    pub phi: DMatrix<f64>,
    /// n_p x M_p pressure modes, Omega_p-orthonormal columns.
    pub pi: DMatrix<f64>,
    /// Singular values matching phi's columns; constraint columns carry 0.
    pub sigma: Vec<f64>,
    /// Leading columns of phi that are constraint (momentum) modes.
    pub n_constraint: usize,
}

impl RomBasis {
    pub fn m(&self) -> usize {
        self.phi.ncols()
    }

    pub fn m_p(&self) -> usize {
        self.pi.ncols()
    }

    /// Basis truncated to its first m velocity and m_p pressure modes.
    pub fn truncated(&self, m: usize, m_p: usize) -> RomBasis {
        assert!(m <= self.m() && m_p <= self.m_p(), "cannot extend a basis by truncation");
        RomBasis {
            phi: self.phi.columns(0, m).into_owned(),
            pi: self.pi.columns(0, m_p).into_owned(),
            sigma: self.sigma[..m].to_vec(),
            n_constraint: self.n_constraint.min(m),
        }
    }
}

/// Lifting field: the minimum-norm-style velocity carrying the inhomogeneous
/// boundary fluxes, V_bc = diag(1/omega) G zeta with L zeta = y_M.
pub fn compute_lifting(ops: &FomOperators, poisson: &PoissonSolver) -> Result<Vec<f64>> {
    let mut v_bc = vec![0.0; ops.n_vel()];
    if vecops::norm_inf(&ops.y_m) == 0.0 {
        return Ok(v_bc);
    }
    // two correction passes leave the flux defect at roundoff
    for _ in 0..2 {
        let mut r = ops.y_m.clone();
        let mv = ops.m.matvec(&v_bc);
        vecops::sub_assign(&mut r, &mv);
        let zeta = poisson.solve(ops, &r)?;
        let gz = ops.g.matvec(&zeta);
        for i in 0..v_bc.len() {
            v_bc[i] += ops.omega_inv[i] * gz[i];
        }
    }
    Ok(v_bc)
}

/// Weighted POD of the columns of x (after subtracting shift from each):
/// returns the first m modes, orthonormal under diag(weights), and all
/// singular values of the weighted matrix.
pub fn weighted_pod(
    x: &DMatrix<f64>,
    weights: &[f64],
    shift: Option<&[f64]>,
    m: usize,
    method: PodMethod,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let (n, k) = (x.nrows(), x.ncols());
    assert_eq!(weights.len(), n);
    let sqrt_w: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let mut xw = x.clone();
    if let Some(s) = shift {
        assert_eq!(s.len(), n);
        for mut col in xw.column_iter_mut() {
            for i in 0..n {
                col[i] -= s[i];
            }
        }
    }
    for mut col in xw.column_iter_mut() {
        for i in 0..n {
            col[i] *= sqrt_w[i];
        }
    }

    let (mut u, sigma) = match method {
        PodMethod::ThinSvd => {
            let (u, s, _v) = solve::thin_svd(&xw);
            (u, s)
        }
        PodMethod::SnapshotCorrelation => {
            let corr = xw.transpose() * &xw;
            let (vals, vecs) = solve::symmetric_eigen(&corr);
            // eigenvalues ascending: take from the top
            let mut u = DMatrix::zeros(n, k.min(n));
            let mut s = vec![0.0; k.min(n)];
            for j in 0..k.min(n) {
                let src = k - 1 - j;
                let lam = vals[src].max(0.0);
                s[j] = lam.sqrt();
                if s[j] > 0.0 {
                    let w = vecs.column(src);
                    let mut col = &xw * w;
                    col /= s[j];
                    u.column_mut(j).copy_from(&col);
                }
            }
            (u, s)
        }
    };

    if m > sigma.len() || (m > 0 && sigma[m - 1] < RANK_FLOOR * sigma[0].max(f64::MIN_POSITIVE)) {
        let rank = sigma
            .iter()
            .take_while(|&&s| s >= RANK_FLOOR * sigma[0].max(f64::MIN_POSITIVE))
            .count();
        return Err(Error::RankExceeded { requested: m, rank });
    }

    // unscale and fix signs: the entry of largest magnitude (first on ties)
    // is made positive so both methods agree
    let mut phi = DMatrix::zeros(n, m);
    for j in 0..m {
        for i in 0..n {
            phi[(i, j)] = u[(i, j)] / sqrt_w[i];
        }
        let col = phi.column(j);
        let mut best = 0usize;
        for i in 1..n {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            for i in 0..n {
                phi[(i, j)] = -phi[(i, j)];
                u[(i, j)] = -u[(i, j)];
            }
        }
    }
    Ok((phi, sigma[..m].to_vec()))
}

/// The two volume-normalized constant-component modes (u block, v block).
pub fn momentum_modes(ops: &FomOperators) -> DMatrix<f64> {
    let n = ops.n_vel();
    let n_u = ops.grid.n_u();
    let mut e = DMatrix::zeros(n, 2);
    let su: f64 = ops.omega[..n_u].iter().sum();
    let sv: f64 = ops.omega[n_u..].iter().sum();
    let cu = 1.0 / su.sqrt();
    let cv = 1.0 / sv.sqrt();
    for i in 0..n_u {
        e[(i, 0)] = cu;
    }
    for i in n_u..n {
        e[(i, 1)] = cv;
    }
    e
}

/// Velocity basis options.
#[derive(Debug, Clone, Copy)]
pub struct BasisConfig {
    pub m: usize,
    pub m_p: usize,
    pub constrained: bool,
    pub method: PodMethod,
}

/// Build the reduced basis from a snapshot set. With `constrained` the first
/// two modes are the momentum modes and the data modes are computed from
/// deflated snapshots, which pins the reduced global momentum to a single
/// coefficient per component.
pub fn build_basis(
    ops: &FomOperators,
    snapshots: &SnapshotSet,
    cfg: &BasisConfig,
) -> Result<RomBasis> {
    let shift =
        if vecops::norm_inf(&snapshots.v_bc) > 0.0 { Some(snapshots.v_bc.as_slice()) } else { None };
    let (phi, sigma, n_constraint) = if cfg.constrained {
        if cfg.m < 2 {
            return Err(Error::InvalidConfig(
                "constrained basis needs at least the two momentum modes".into(),
            ));
        }
        let e = momentum_modes(ops);
        for j in 0..2 {
            let me = ops.m.matvec(e.column(j).as_slice());
            if vecops::norm_inf(&me) > 1e-12 {
                return Err(Error::InvalidConfig(
                    "constrained basis requires constant fields to be admissible (periodic boundaries)"
                        .into(),
                ));
            }
        }
        // deflate: remove the momentum-mode component from every snapshot
        let mut x = snapshots.x.clone();
        if let Some(s) = shift {
            let n = x.nrows();
            for mut col in x.column_iter_mut() {
                for i in 0..n {
                    col[i] -= s[i];
                }
            }
        }
        let mut ewx = DMatrix::zeros(2, x.ncols());
        for j in 0..2 {
            for c in 0..x.ncols() {
                ewx[(j, c)] =
                    vecops::dot_weighted(e.column(j).as_slice(), &ops.omega, x.column(c).as_slice());
            }
        }
        x -= &e * &ewx;
        let m_data = cfg.m - 2;
        let (phi_data, sig_data) = if m_data > 0 {
            weighted_pod(&x, &ops.omega, None, m_data, cfg.method)?
        } else {
            (DMatrix::zeros(x.nrows(), 0), Vec::new())
        };
        let mut phi = DMatrix::zeros(x.nrows(), cfg.m);
        phi.columns_mut(0, 2).copy_from(&e);
        if m_data > 0 {
            phi.columns_mut(2, m_data).copy_from(&phi_data);
        }
        let mut sigma = vec![0.0, 0.0];
        sigma.extend(sig_data);
        (phi, sigma, 2)
    } else {
        let (phi, sigma) = weighted_pod(&snapshots.x, &ops.omega, shift, cfg.m, cfg.method)?;
        (phi, sigma, 0)
    };

    let mut phi = phi;
    enforce_divergence_free(ops, &mut phi, n_constraint)?;

    let (pi, _sig_p) = weighted_pod(&snapshots.p, &ops.omega_p, None, cfg.m_p, cfg.method)?;
    Ok(RomBasis { phi, pi, sigma, n_constraint })
}

/// Clean compressed modes so M phi = 0 holds at roundoff level per mode.
///
/// A mode is a snapshot combination scaled by 1/sigma, so the tiny snapshot
/// divergence residual is amplified without bound as sigma shrinks; left in
/// place it couples the reduced dynamics back to the pressure. Projecting
/// each data column onto the divergence-free space is Omega-self-adjoint,
/// so a Gram-Schmidt pass afterwards restores weighted orthonormality while
/// keeping the mode ordering. Constraint columns are exact already and stay
/// untouched.
fn enforce_divergence_free(
    ops: &FomOperators,
    phi: &mut DMatrix<f64>,
    skip: usize,
) -> Result<()> {
    if phi.ncols() == skip {
        return Ok(());
    }
    let solver = PoissonSolver::new(ops)?;
    let n = ops.n_vel();
    for j in skip..phi.ncols() {
        for _ in 0..2 {
            let r = ops.m.matvec(phi.column(j).as_slice());
            let q = solver.solve(ops, &r)?;
            let gq = ops.g.matvec(&q);
            let mut col = phi.column_mut(j);
            for i in 0..n {
                col[i] -= ops.omega_inv[i] * gq[i];
            }
        }
    }
    for _pass in 0..2 {
        for j in skip..phi.ncols() {
            for k in 0..j {
                let proj = vecops::dot_weighted(
                    phi.column(k).as_slice(),
                    &ops.omega,
                    phi.column(j).as_slice(),
                );
                let prev = phi.column(k).into_owned();
                let mut col = phi.column_mut(j);
                for i in 0..n {
                    col[i] -= proj * prev[i];
                }
            }
            let norm = vecops::norm_weighted(phi.column(j).as_slice(), &ops.omega);
            if norm < 0.5 {
                return Err(Error::RankExceeded { requested: phi.ncols(), rank: j });
            }
            let mut col = phi.column_mut(j);
            for i in 0..n {
                col[i] /= norm;
            }
        }
    }
    Ok(())
}

/// Reduced coordinates of a full state: a = Phi' Omega (v - v_bc).
pub fn initial_coeffs(ops: &FomOperators, basis: &RomBasis, v: &[f64], v_bc: &[f64]) -> Vec<f64> {
    let n = ops.n_vel();
    let mut a = vec![0.0; basis.m()];
    let mut work = vec![0.0; n];
    for i in 0..n {
        work[i] = ops.omega[i] * (v[i] - v_bc[i]);
    }
    for (j, col) in basis.phi.column_iter().enumerate() {
        a[j] = vecops::dot(col.as_slice(), &work);
    }
    a
}

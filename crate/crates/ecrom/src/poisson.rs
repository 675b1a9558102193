//! Pressure Poisson solves and discrete divergence-free projection.
//!
//! L = M diag(1/omega) G is symmetric negative semi-definite. Without outflow
//! faces its null space is the constant vector: the solver then checks rhs
//! compatibility, pins the first cell, and shifts solutions to zero weighted
//! mean. With at least one outflow face L is nonsingular and factored whole.

use crate::error::{Error, Result};
use crate::operators::FomOperators;
use crate::solve::SpdFactor;
use crate::sparse::Csr;
use crate::vecops;

pub struct PoissonSolver {
    factor: SpdFactor,
    pinned: bool,
    n: usize,
}

impl PoissonSolver {
    pub fn new(ops: &FomOperators) -> Result<Self> {
        let n = ops.n_p();
        let pinned = !ops.grid.has_outflow();
        let neg_l = ops.l.negated();
        let factor = if pinned {
            let trips = neg_l
                .triplets()
                .filter(|&(i, j, _)| i > 0 && j > 0)
                .map(|(i, j, v)| (i - 1, j - 1, v))
                .collect();
            SpdFactor::new(&Csr::from_triplets(n - 1, n - 1, trips))?
        } else {
            SpdFactor::new(&neg_l)?
        };
        Ok(Self { factor, pinned, n })
    }

    /// Solve L q = rhs. In the pinned case the rhs must be compatible
    /// (orthogonal to the constant null vector) and the solution comes back
    /// with zero volume-weighted mean.
    pub fn solve(&self, ops: &FomOperators, rhs: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(rhs.len(), self.n);
        if !self.pinned {
            let neg: Vec<f64> = rhs.iter().map(|x| -x).collect();
            return Ok(self.factor.solve(&neg));
        }
        let imbalance: f64 = rhs.iter().sum();
        let scale: f64 = rhs.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
        let tol = 1e-10 * scale;
        if imbalance.abs() > tol {
            return Err(Error::IncompatibleRhs { imbalance, tol });
        }
        let reduced: Vec<f64> = rhs[1..].iter().map(|x| -x).collect();
        let sol = self.factor.solve(&reduced);
        let mut q = Vec::with_capacity(self.n);
        q.push(0.0);
        q.extend(sol);
        let mean = vecops::weighted_mean(&q, &ops.omega_p);
        for x in q.iter_mut() {
            *x -= mean;
        }
        Ok(q)
    }
}

/// Project v onto the affine space M v = y_M by one pressure correction per
/// pass: solve L q = M v - y_M, then v <- v - diag(1/omega) G q. A second
/// pass removes the factorization roundoff left by the first.
pub fn project_velocity(
    ops: &FomOperators,
    solver: &PoissonSolver,
    v: &mut [f64],
    passes: usize,
) -> Result<()> {
    for _ in 0..passes {
        let mut r = ops.m.matvec(v);
        vecops::sub_assign(&mut r, &ops.y_m);
        let scale = vecops::norm_inf(v).max(1.0);
        if vecops::norm_inf(&r) <= 1e-16 * scale {
            break;
        }
        let q = solver.solve(ops, &r)?;
        let gq = ops.g.matvec(&q);
        for i in 0..v.len() {
            v[i] -= ops.omega_inv[i] * gq[i];
        }
    }
    Ok(())
}

/// Largest violation of the discrete continuity equation.
pub fn divergence_residual(ops: &FomOperators, v: &[f64]) -> f64 {
    let mut r = ops.m.matvec(v);
    vecops::sub_assign(&mut r, &ops.y_m);
    vecops::norm_inf(&r)
}

//! Full-order time integration.
//!
//! Both steppers advance the index-2 system
//!     Omega dV/dt = F(V, t) - G p - y_G,   M V = y_M,
//! with F(V, t) = -C(V, V) + nu (D V + y_D) + g(t) f.
//!
//! - Explicit RK4 projects every stage derivative onto the discrete
//!   divergence-free space, so all stage states stay admissible; one
//!   refinement projection per step removes accumulated roundoff.
//! - Implicit midpoint solves the coupled saddle system with Newton and
//!   conserves kinetic energy exactly (up to solver tolerance) for inviscid
//!   unforced flow; the step always ends with one extra polishing iteration
//!   past the convergence test so the residual sits at machine level.

use crate::error::{Error, Result};
use crate::operators::{convection, convection_jacobian, FomOperators};
use crate::poisson::{divergence_residual, project_velocity, PoissonSolver};
use crate::solve::LuFactor;
use crate::sparse::Csr;
use crate::vecops;
use nalgebra::DMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Erk4,
    ImplicitMidpoint,
}

#[derive(Debug, Clone)]
pub struct IntegratorConfig {
    pub method: Method,
    pub dt: f64,
    pub steps: usize,
    /// Keep every snapshot_stride-th state (plus the initial one).
    pub snapshot_stride: usize,
    pub newton_tol: f64,
    pub newton_max_iters: usize,
}

impl IntegratorConfig {
    pub fn new(method: Method, dt: f64, steps: usize, snapshot_stride: usize) -> Self {
        Self { method, dt, steps, snapshot_stride, newton_tol: 1e-12, newton_max_iters: 25 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || self.steps == 0 || self.snapshot_stride == 0 {
            return Err(Error::InvalidConfig(
                "time step, step count and snapshot stride must be positive".into(),
            ));
        }
        if self.steps % self.snapshot_stride != 0 {
            return Err(Error::InvalidConfig(format!(
                "snapshot stride {} must divide step count {}",
                self.snapshot_stride, self.steps
            )));
        }
        Ok(())
    }
}

/// Snapshot trajectory of a full-order run: states (and end-of-step
/// pressures) at the initial time and every stride-th step.
#[derive(Debug, Clone)]
pub struct SnapshotSet {
    pub times: Vec<f64>,
    /// n_vel x K velocity snapshots, one column per kept time.
    pub x: DMatrix<f64>,
    /// n_p x K pressure snapshots.
    pub p: DMatrix<f64>,
    /// Lifting field subtracted before building reduced bases.
    pub v_bc: Vec<f64>,
    pub nu: f64,
}

impl SnapshotSet {
    pub fn n_snapshots(&self) -> usize {
        self.times.len()
    }
}

/// F(V, t): every momentum-equation term except the pressure contributions.
pub fn rhs_cd(ops: &FomOperators, v: &[f64], t: f64) -> Vec<f64> {
    let mut out = convection(ops, v, v);
    vecops::scale(-1.0, &mut out);
    if ops.nu != 0.0 {
        let mut dv = ops.d.matvec(v);
        vecops::add_assign(&mut dv, &ops.y_d);
        vecops::axpy(ops.nu, &dv, &mut out);
    }
    if let Some(force) = &ops.force {
        force.add_at(t, &mut out);
    }
    out
}

/// K = 1/2 V' Omega V.
pub fn kinetic_energy(ops: &FomOperators, v: &[f64]) -> f64 {
    0.5 * vecops::dot_weighted(v, &ops.omega, v)
}

/// Volume-weighted sums over the two component blocks.
pub fn momentum(ops: &FomOperators, v: &[f64]) -> (f64, f64) {
    let n_u = ops.grid.n_u();
    let pu = vecops::dot(&v[..n_u], &ops.omega[..n_u]);
    let pv = vecops::dot(&v[n_u..], &ops.omega[n_u..]);
    (pu, pv)
}

/// Instantaneous pressure from the Poisson equation
/// L p = M diag(1/omega) (F(V, t) - y_G).
pub fn pressure_field(
    ops: &FomOperators,
    poisson: &PoissonSolver,
    v: &[f64],
    t: f64,
) -> Result<Vec<f64>> {
    let mut f = rhs_cd(ops, v, t);
    vecops::sub_assign(&mut f, &ops.y_g);
    vecops::hadamard_assign(&mut f, &ops.omega_inv);
    poisson.solve(ops, &ops.m.matvec(&f))
}

/// Leray projection of a velocity derivative: subtract diag(1/omega) G xi
/// with L xi = M q, so M q becomes zero.
fn project_derivative(ops: &FomOperators, poisson: &PoissonSolver, q: &mut [f64]) -> Result<()> {
    let r = ops.m.matvec(q);
    let xi = poisson.solve(ops, &r)?;
    let gxi = ops.g.matvec(&xi);
    for i in 0..q.len() {
        q[i] -= ops.omega_inv[i] * gxi[i];
    }
    Ok(())
}

fn divergence_free_rhs(
    ops: &FomOperators,
    poisson: &PoissonSolver,
    v: &[f64],
    t: f64,
) -> Result<Vec<f64>> {
    let mut q = rhs_cd(ops, v, t);
    vecops::sub_assign(&mut q, &ops.y_g);
    vecops::hadamard_assign(&mut q, &ops.omega_inv);
    project_derivative(ops, poisson, &mut q)?;
    Ok(q)
}

/// Classic fourth-order Runge-Kutta step with projected stage derivatives.
pub fn step_erk4(
    ops: &FomOperators,
    poisson: &PoissonSolver,
    v: &[f64],
    t: f64,
    dt: f64,
) -> Result<Vec<f64>> {
    let q1 = divergence_free_rhs(ops, poisson, v, t)?;
    let mut u = v.to_vec();
    vecops::axpy(0.5 * dt, &q1, &mut u);
    let q2 = divergence_free_rhs(ops, poisson, &u, t + 0.5 * dt)?;
    u.copy_from_slice(v);
    vecops::axpy(0.5 * dt, &q2, &mut u);
    let q3 = divergence_free_rhs(ops, poisson, &u, t + 0.5 * dt)?;
    u.copy_from_slice(v);
    vecops::axpy(dt, &q3, &mut u);
    let q4 = divergence_free_rhs(ops, poisson, &u, t + dt)?;
    let mut next = v.to_vec();
    vecops::axpy(dt / 6.0, &q1, &mut next);
    vecops::axpy(dt / 3.0, &q2, &mut next);
    vecops::axpy(dt / 3.0, &q3, &mut next);
    vecops::axpy(dt / 6.0, &q4, &mut next);
    project_velocity(ops, poisson, &mut next, 1)?;
    Ok(next)
}

/// One implicit-midpoint step. The Newton unknowns are the midpoint state
/// V1 and the stage pressure; the new state is 2 V1 - V^n.
pub fn step_implicit_midpoint(
    ops: &FomOperators,
    poisson: &PoissonSolver,
    v: &[f64],
    t: f64,
    dt: f64,
    cfg: &IntegratorConfig,
    p_warm: &mut Vec<f64>,
) -> Result<Vec<f64>> {
    let n_vel = ops.n_vel();
    let n_p = ops.n_p();
    let pinned = !ops.grid.has_outflow();
    let t_mid = t + 0.5 * dt;

    let mut v1 = v.to_vec();
    let mut p = p_warm.clone();
    let (dx, dy) = (ops.grid.dx(), ops.grid.dy());
    let vol = dx * dy;
    let len_min = dx.min(dy);

    let residual = |v1: &[f64], p: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut r_v = rhs_cd(ops, v1, t_mid);
        vecops::sub_assign(&mut r_v, &ops.y_g);
        let gp = ops.g.matvec(p);
        vecops::sub_assign(&mut r_v, &gp);
        vecops::scale(-0.5 * dt, &mut r_v);
        for i in 0..n_vel {
            r_v[i] += ops.omega[i] * (v1[i] - v[i]);
        }
        let mut r_m = ops.m.matvec(v1);
        vecops::sub_assign(&mut r_m, &ops.y_m);
        if pinned {
            r_m[0] = p[0];
        }
        (r_v, r_m)
    };

    let mut converged = false;
    let mut last_res = f64::INFINITY;
    for iter in 0..cfg.newton_max_iters {
        let (r_v, r_m) = residual(&v1, &p);
        let res = (vecops::norm_inf(&r_v) / vol).max(vecops::norm_inf(&r_m) / len_min);
        let scale = vecops::norm_inf(&v1).max(1.0);
        if converged {
            break; // one polishing iteration already done past the test
        }
        if res <= cfg.newton_tol * scale {
            converged = true;
        } else if iter + 1 == cfg.newton_max_iters {
            return Err(Error::NewtonDiverged {
                residual: res,
                iters: iter + 1,
                tol: cfg.newton_tol * scale,
            });
        }
        last_res = res;

        let jc = convection_jacobian(ops, &v1);
        let half = 0.5 * dt;
        let mut trips: Vec<(usize, usize, f64)> =
            Vec::with_capacity(jc.nnz() + ops.d.nnz() + ops.g.nnz() + ops.m.nnz() + n_vel + 1);
        for (i, j, val) in jc.triplets() {
            trips.push((i, j, half * val));
        }
        if ops.nu != 0.0 {
            for (i, j, val) in ops.d.triplets() {
                trips.push((i, j, -half * ops.nu * val));
            }
        }
        for i in 0..n_vel {
            trips.push((i, i, ops.omega[i]));
        }
        for (i, j, val) in ops.g.triplets() {
            trips.push((i, n_vel + j, half * val));
        }
        for (i, j, val) in ops.m.triplets() {
            if pinned && i == 0 {
                continue;
            }
            trips.push((n_vel + i, j, val));
        }
        if pinned {
            trips.push((n_vel, n_vel, 1.0));
        }
        let saddle = Csr::from_triplets(n_vel + n_p, n_vel + n_p, trips);
        let lu = LuFactor::new(&saddle)?;
        let mut rhs = Vec::with_capacity(n_vel + n_p);
        rhs.extend(r_v.iter().map(|x| -x));
        rhs.extend(r_m.iter().map(|x| -x));
        let delta = lu.solve(&rhs);
        for i in 0..n_vel {
            v1[i] += delta[i];
        }
        for i in 0..n_p {
            p[i] += delta[n_vel + i];
        }
    }
    if !converged {
        return Err(Error::NewtonDiverged {
            residual: last_res,
            iters: cfg.newton_max_iters,
            tol: cfg.newton_tol,
        });
    }

    *p_warm = p;
    let mut next = vec![0.0; n_vel];
    for i in 0..n_vel {
        next[i] = 2.0 * v1[i] - v[i];
    }
    project_velocity(ops, poisson, &mut next, 1)?;
    Ok(next)
}

/// Integrate from v0 and collect snapshots. The initial state must already
/// satisfy the discrete continuity equation; every accepted state is checked
/// against it.
pub fn run_fom(
    ops: &FomOperators,
    poisson: &PoissonSolver,
    v0: &[f64],
    cfg: &IntegratorConfig,
    v_bc: Vec<f64>,
) -> Result<SnapshotSet> {
    cfg.validate()?;
    let n_keep = cfg.steps / cfg.snapshot_stride + 1;
    let mut times = Vec::with_capacity(n_keep);
    let mut x = DMatrix::zeros(ops.n_vel(), n_keep);
    let mut p_snap = DMatrix::zeros(ops.n_p(), n_keep);

    let div_tol = |v: &[f64]| 1e-10 * vecops::norm_inf(v).max(1.0);
    let mut v = v0.to_vec();
    let res0 = divergence_residual(ops, &v);
    if res0 > div_tol(&v) {
        return Err(Error::DivergenceResidual { residual: res0, tol: div_tol(&v), step: 0 });
    }

    let mut keep = 0usize;
    let mut record =
        |keep: &mut usize, t: f64, v: &[f64], p: &[f64]| {
            times.push(t);
            x.column_mut(*keep).copy_from_slice(v);
            p_snap.column_mut(*keep).copy_from_slice(p);
            *keep += 1;
        };
    let p0 = pressure_field(ops, poisson, &v, 0.0)?;
    record(&mut keep, 0.0, &v, &p0);

    let mut p_warm = vec![0.0; ops.n_p()];
    for step in 0..cfg.steps {
        let t = step as f64 * cfg.dt;
        v = match cfg.method {
            Method::Erk4 => step_erk4(ops, poisson, &v, t, cfg.dt)?,
            Method::ImplicitMidpoint => {
                step_implicit_midpoint(ops, poisson, &v, t, cfg.dt, cfg, &mut p_warm)?
            }
        };
        let res = divergence_residual(ops, &v);
        if res > div_tol(&v) {
            return Err(Error::DivergenceResidual { residual: res, tol: div_tol(&v), step: step + 1 });
        }
        if (step + 1) % cfg.snapshot_stride == 0 {
            let t_next = (step + 1) as f64 * cfg.dt;
            let p_now = pressure_field(ops, poisson, &v, t_next)?;
            record(&mut keep, t_next, &v, &p_now);
        }
    }

    Ok(SnapshotSet { times, x, p: p_snap, v_bc, nu: ops.nu })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Bc, GridSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn periodic_ops(n: usize, nu: f64) -> FomOperators {
        let spec = GridSpec {
            nx: n,
            ny: n,
            x_min: 0.0,
            x_max: 2.0 * std::f64::consts::PI,
            y_min: 0.0,
            y_max: 2.0 * std::f64::consts::PI,
            bc_west: Bc::Periodic,
            bc_east: Bc::Periodic,
            bc_south: Bc::Periodic,
            bc_north: Bc::Periodic,
        };
        FomOperators::assemble(spec, nu).unwrap()
    }

    fn projected_random(ops: &FomOperators, poisson: &PoissonSolver, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v: Vec<f64> = (0..ops.n_vel()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        project_velocity(ops, poisson, &mut v, 2).unwrap();
        v
    }

    #[test]
    fn erk4_keeps_states_divergence_free() {
        let ops = periodic_ops(8, 0.0);
        let poisson = PoissonSolver::new(&ops).unwrap();
        let mut v = projected_random(&ops, &poisson, 1);
        for step in 0..20 {
            v = step_erk4(&ops, &poisson, &v, step as f64 * 0.01, 0.01).unwrap();
            let res = divergence_residual(&ops, &v);
            assert!(res <= 1e-13, "step {step} residual {res}");
        }
        assert!(v.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn implicit_midpoint_conserves_energy_inviscid() {
        let ops = periodic_ops(8, 0.0);
        let poisson = PoissonSolver::new(&ops).unwrap();
        let v0 = projected_random(&ops, &poisson, 2);
        let k0 = kinetic_energy(&ops, &v0);
        let cfg = IntegratorConfig::new(Method::ImplicitMidpoint, 0.02, 10, 1);
        let mut v = v0;
        let mut p_warm = vec![0.0; ops.n_p()];
        for step in 0..10 {
            v = step_implicit_midpoint(&ops, &poisson, &v, step as f64 * 0.02, 0.02, &cfg, &mut p_warm)
                .unwrap();
            let k = kinetic_energy(&ops, &v);
            assert!(
                ((k - k0) / k0).abs() <= 1e-13,
                "energy drift {} at step {step}",
                (k - k0) / k0
            );
        }
    }

    #[test]
    fn both_steppers_conserve_global_momentum() {
        let ops = periodic_ops(6, 0.0);
        let poisson = PoissonSolver::new(&ops).unwrap();
        let v0 = projected_random(&ops, &poisson, 3);
        let (pu0, pv0) = momentum(&ops, &v0);
        let cfg = IntegratorConfig::new(Method::ImplicitMidpoint, 0.02, 5, 1);
        let mut p_warm = vec![0.0; ops.n_p()];
        let mut ve = v0.clone();
        let mut vi = v0.clone();
        for step in 0..5 {
            let t = step as f64 * 0.02;
            ve = step_erk4(&ops, &poisson, &ve, t, 0.02).unwrap();
            vi = step_implicit_midpoint(&ops, &poisson, &vi, t, 0.02, &cfg, &mut p_warm).unwrap();
        }
        for v in [&ve, &vi] {
            let (pu, pv) = momentum(&ops, v);
            assert!((pu - pu0).abs() <= 1e-12 * pu0.abs().max(1.0));
            assert!((pv - pv0).abs() <= 1e-12 * pv0.abs().max(1.0));
        }
    }

    #[test]
    fn run_collects_requested_snapshots() {
        let ops = periodic_ops(6, 1e-2);
        let poisson = PoissonSolver::new(&ops).unwrap();
        let v0 = projected_random(&ops, &poisson, 4);
        let cfg = IntegratorConfig::new(Method::Erk4, 0.01, 12, 3);
        let set = run_fom(&ops, &poisson, &v0, &cfg, vec![0.0; ops.n_vel()]).unwrap();
        assert_eq!(set.n_snapshots(), 5);
        assert_eq!(set.times, vec![0.0, 0.03, 0.06, 0.09, 0.12]);
        assert_eq!(set.x.ncols(), 5);
        // viscous flow loses energy
        let k_first = kinetic_energy(&ops, set.x.column(0).as_slice());
        let k_last = kinetic_energy(&ops, set.x.column(4).as_slice());
        assert!(k_last < k_first);
        // bad config rejected
        let bad = IntegratorConfig::new(Method::Erk4, 0.01, 10, 3);
        assert!(run_fom(&ops, &poisson, &v0, &bad, vec![0.0; ops.n_vel()]).is_err());
    }

    #[test]
    fn wake_stepping_stays_admissible() {
        let spec = GridSpec {
            nx: 12,
            ny: 8,
            x_min: -4.0,
            x_max: 8.0,
            y_min: -2.0,
            y_max: 2.0,
            bc_west: Bc::Dirichlet(Arc::new(|_, y| {
                (0.75 - 3.0 / 32.0 * (y - 2.0) * (y + 2.0), 0.0)
            })),
            bc_east: Bc::Outflow { p_inf: 0.0 },
            bc_south: Bc::Outflow { p_inf: 0.0 },
            bc_north: Bc::Outflow { p_inf: 0.0 },
        };
        let ops = FomOperators::assemble(spec, 0.002).unwrap();
        let poisson = PoissonSolver::new(&ops).unwrap();
        let g = &ops.grid;
        // inflow profile everywhere: exactly divergence-consistent
        let mut v0 = vec![0.0; ops.n_vel()];
        for j in 0..g.ny() {
            let y = g.y_center(j);
            let ub = 0.75 - 3.0 / 32.0 * (y - 2.0) * (y + 2.0);
            for slot in 0..g.nux {
                v0[g.u_index(slot, j)] = ub;
            }
        }
        assert!(divergence_residual(&ops, &v0) <= 1e-12);
        let mut v = v0;
        for step in 0..5 {
            v = step_erk4(&ops, &poisson, &v, step as f64 * 0.02, 0.02).unwrap();
            assert!(divergence_residual(&ops, &v) <= 1e-12);
        }
        assert!(v.iter().all(|x| x.is_finite()));
    }
}

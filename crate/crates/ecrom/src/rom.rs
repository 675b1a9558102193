//! Reduced-order model: offline operator projection and online integration.
//!
//! The reduced momentum right-hand side for V = V_bc + Phi a is
//!     rhs(a, t) = F0 + g(t) f_act + F1 a + sum_s a_s F2[s] a,
//! where every operator lives in the M-dimensional coefficient space.
//! Nothing on the online path touches a full-space vector, so stepping cost
//! depends only on M. Because the basis is Omega-orthonormal and discretely
//! divergence free, the quadratic slices are skew-symmetric and the reduced
//! kinetic energy 1/2 |a|^2 is conserved exactly by the inviscid unforced
//! dynamics; implicit midpoint preserves that invariant in time as well.

use crate::error::{Error, Result};
use crate::operators::{FomOperators, TimeFactor};
use crate::pod::RomBasis;
use crate::solve;
use crate::solver::IntegratorConfig;
use crate::vecops;
use nalgebra::DMatrix;

#[derive(Debug, Clone)]
pub struct RomOperators {
    pub m: usize,
    pub m_p: usize,
    pub nu: f64,
    /// Constant rhs term (boundary convection, boundary diffusion, outflow
    /// pressure).
    pub f0: Vec<f64>,
    /// Projected spatial body force; scaled online by the time factor.
    pub f_act: Vec<f64>,
    pub force_time: Option<TimeFactor>,
    /// Linear rhs operator (boundary-coupled convection plus diffusion).
    pub f1: DMatrix<f64>,
    /// Projected diffusion alone: the reduced dissipation rate is
    /// nu a' D_r a.
    pub d_r: DMatrix<f64>,
    /// Quadratic slices, convecting index s: rhs += a_s (F2[s] a).
    pub f2: Vec<DMatrix<f64>>,
    /// Reduced pressure Poisson operator, symmetric negative semi-definite.
    pub l_r: DMatrix<f64>,
    /// Pressure rhs pieces mirroring F0 / f_act / F1 / F2.
    pub p0: Vec<f64>,
    pub p_act: Vec<f64>,
    pub p1: DMatrix<f64>,
    pub p2: Vec<DMatrix<f64>>,
}

/// Project full-order operators onto a basis. One sweep per full-space
/// vector computes both its velocity projection Phi' w and its pressure
/// projection Pi' M diag(1/omega) w.
pub fn precompute(ops: &FomOperators, basis: &RomBasis, v_bc: &[f64]) -> RomOperators {
    let m = basis.m();
    let m_p = basis.m_p();
    let n = ops.n_vel();
    let nu = ops.nu;

    let wv = |w: &[f64]| -> Vec<f64> {
        (0..m).map(|j| vecops::dot(basis.phi.column(j).as_slice(), w)).collect()
    };
    let wp = |w: &[f64]| -> Vec<f64> {
        let mut t = w.to_vec();
        vecops::hadamard_assign(&mut t, &ops.omega_inv);
        let mt = ops.m.matvec(&t);
        (0..m_p).map(|j| vecops::dot(basis.pi.column(j).as_slice(), &mt)).collect()
    };

    // flux-space images of the lifting field and of every mode
    let mut ivbc = ops.i_op.matvec(v_bc);
    vecops::add_assign(&mut ivbc, &ops.y_i);
    let mut avbc = ops.a_op.matvec(v_bc);
    vecops::add_assign(&mut avbc, &ops.y_a);
    let iphi: Vec<Vec<f64>> =
        (0..m).map(|j| ops.i_op.matvec(basis.phi.column(j).as_slice())).collect();
    let aphi: Vec<Vec<f64>> =
        (0..m).map(|j| ops.a_op.matvec(basis.phi.column(j).as_slice())).collect();

    let kmul = |a: &[f64], b: &[f64]| -> Vec<f64> {
        let mut h = a.to_vec();
        vecops::hadamard_assign(&mut h, b);
        ops.k.matvec(&h)
    };

    // constant sweep: boundary-boundary convection, boundary diffusion,
    // outflow pressure
    let w_conv0 = kmul(&ivbc, &avbc);
    let y_cr = wv(&w_conv0);
    let pc0 = wp(&w_conv0);
    let mut dvbc = ops.d.matvec(v_bc);
    vecops::add_assign(&mut dvbc, &ops.y_d);
    let y_dr = wv(&dvbc);
    let pd0 = wp(&dvbc);
    let y_gr = wv(&ops.y_g);
    let pg = wp(&ops.y_g);
    let mut f0 = vec![0.0; m];
    let mut p0 = vec![0.0; m_p];
    for k in 0..m {
        f0[k] = -y_cr[k] + nu * y_dr[k] - y_gr[k];
    }
    for k in 0..m_p {
        p0[k] = -pc0[k] + nu * pd0[k] - pg[k];
    }

    // linear sweep: mode-boundary convection couplings and diffusion columns
    let mut f1 = DMatrix::zeros(m, m);
    let mut d_r = DMatrix::zeros(m, m);
    let mut p1 = DMatrix::zeros(m_p, m);
    for i in 0..m {
        let mut w = kmul(&iphi[i], &avbc);
        let w2 = kmul(&ivbc, &aphi[i]);
        vecops::add_assign(&mut w, &w2);
        let cv = wv(&w);
        let cp = wp(&w);
        let dphi = ops.d.matvec(basis.phi.column(i).as_slice());
        let dv = wv(&dphi);
        let dp = wp(&dphi);
        for k in 0..m {
            f1[(k, i)] = -cv[k] + nu * dv[k];
            d_r[(k, i)] = dv[k];
        }
        for k in 0..m_p {
            p1[(k, i)] = -cp[k] + nu * dp[k];
        }
    }

    // quadratic sweep: one slice per convecting mode
    let mut f2 = Vec::with_capacity(m);
    let mut p2 = Vec::with_capacity(m);
    for s in 0..m {
        let mut slice_v = DMatrix::zeros(m, m);
        let mut slice_p = DMatrix::zeros(m_p, m);
        for i in 0..m {
            let w = kmul(&iphi[s], &aphi[i]);
            let cv = wv(&w);
            let cp = wp(&w);
            for k in 0..m {
                slice_v[(k, i)] = -cv[k];
            }
            for k in 0..m_p {
                slice_p[(k, i)] = -cp[k];
            }
        }
        f2.push(slice_v);
        p2.push(slice_p);
    }

    // body force
    let (f_act, p_act, force_time) = match &ops.force {
        Some(force) => (wv(&force.spatial), wp(&force.spatial), Some(force.time_factor)),
        None => (vec![0.0; m], vec![0.0; m_p], None),
    };

    // reduced pressure Poisson operator: -Ghat' Ghat, symmetric by
    // symmetric assembly
    let ghat: Vec<Vec<f64>> = (0..m_p)
        .map(|j| {
            let mut g = ops.g.matvec(basis.pi.column(j).as_slice());
            for (x, wi) in g.iter_mut().zip(&ops.omega_inv) {
                *x *= wi.sqrt();
            }
            g
        })
        .collect();
    let mut l_r = DMatrix::zeros(m_p, m_p);
    for i in 0..m_p {
        for j in i..m_p {
            let val = -vecops::dot(&ghat[i], &ghat[j]);
            l_r[(i, j)] = val;
            l_r[(j, i)] = val;
        }
    }
    let _ = n;

    RomOperators { m, m_p, nu, f0, f_act, force_time, f1, d_r, f2, l_r, p0, p_act, p1, p2 }
}

/// Reduced right-hand side. O(M^2) per slice, O(M^3) total; no full-space
/// work.
pub fn rom_rhs(rom: &RomOperators, a: &[f64], t: f64) -> Vec<f64> {
    let m = rom.m;
    assert_eq!(a.len(), m);
    let mut out = rom.f0.clone();
    if let Some(tf) = rom.force_time {
        vecops::axpy(tf.eval(t), &rom.f_act, &mut out);
    }
    for k in 0..m {
        let row = rom.f1.row(k);
        let mut acc = 0.0;
        for i in 0..m {
            acc += row[i] * a[i];
        }
        out[k] += acc;
    }
    for s in 0..m {
        let c = a[s];
        if c == 0.0 {
            continue;
        }
        let slice = &rom.f2[s];
        for k in 0..m {
            let mut acc = 0.0;
            for i in 0..m {
                acc += slice[(k, i)] * a[i];
            }
            out[k] += c * acc;
        }
    }
    out
}

/// Jacobian of rom_rhs with respect to a (time enters only the force term).
pub fn rom_jacobian(rom: &RomOperators, a: &[f64]) -> DMatrix<f64> {
    let m = rom.m;
    let mut jac = rom.f1.clone();
    for s in 0..m {
        let slice = &rom.f2[s];
        let c = a[s];
        for k in 0..m {
            let mut col_s = 0.0;
            for i in 0..m {
                jac[(k, i)] += c * slice[(k, i)];
                col_s += slice[(k, i)] * a[i];
            }
            jac[(k, s)] += col_s;
        }
    }
    jac
}

/// One implicit-midpoint step in coefficient space: Newton to tolerance,
/// then one polishing iteration.
pub fn rom_step_imr(
    rom: &RomOperators,
    a: &[f64],
    t: f64,
    dt: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<f64>> {
    let m = rom.m;
    let t_mid = t + 0.5 * dt;
    let mut a1 = a.to_vec();
    let mut converged = false;
    for iter in 0..cfg.newton_max_iters {
        let rhs = rom_rhs(rom, &a1, t_mid);
        let mut r = vec![0.0; m];
        for k in 0..m {
            r[k] = a1[k] - a[k] - 0.5 * dt * rhs[k];
        }
        let res = vecops::norm_inf(&r);
        let scale = vecops::norm_inf(&a1).max(1.0);
        if converged {
            break;
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
        let mut jac = rom_jacobian(rom, &a1);
        jac *= -0.5 * dt;
        for k in 0..m {
            jac[(k, k)] += 1.0;
        }
        let negr: Vec<f64> = r.iter().map(|x| -x).collect();
        let delta = solve::solve_dense(jac, &negr)?;
        for k in 0..m {
            a1[k] += delta[k];
        }
    }
    if !converged {
        return Err(Error::NewtonDiverged {
            residual: f64::INFINITY,
            iters: cfg.newton_max_iters,
            tol: cfg.newton_tol,
        });
    }
    let mut next = vec![0.0; m];
    for k in 0..m {
        next[k] = 2.0 * a1[k] - a[k];
    }
    Ok(next)
}

/// Classic fourth-order Runge-Kutta step in coefficient space.
pub fn rom_step_erk4(rom: &RomOperators, a: &[f64], t: f64, dt: f64) -> Vec<f64> {
    let q1 = rom_rhs(rom, a, t);
    let mut u = a.to_vec();
    vecops::axpy(0.5 * dt, &q1, &mut u);
    let q2 = rom_rhs(rom, &u, t + 0.5 * dt);
    u.copy_from_slice(a);
    vecops::axpy(0.5 * dt, &q2, &mut u);
    let q3 = rom_rhs(rom, &u, t + 0.5 * dt);
    u.copy_from_slice(a);
    vecops::axpy(dt, &q3, &mut u);
    let q4 = rom_rhs(rom, &u, t + dt);
    let mut next = a.to_vec();
    vecops::axpy(dt / 6.0, &q1, &mut next);
    vecops::axpy(dt / 3.0, &q2, &mut next);
    vecops::axpy(dt / 3.0, &q3, &mut next);
    vecops::axpy(dt / 6.0, &q4, &mut next);
    next
}

/// Coefficient trajectory of a reduced run; one column per time level,
/// including the initial one.
#[derive(Debug, Clone)]
pub struct RomTrajectory {
    pub times: Vec<f64>,
    pub coeffs: DMatrix<f64>,
}

pub fn run_rom(rom: &RomOperators, a0: &[f64], cfg: &IntegratorConfig) -> Result<RomTrajectory> {
    cfg.validate()?;
    let m = rom.m;
    assert_eq!(a0.len(), m);
    let mut coeffs = DMatrix::zeros(m, cfg.steps + 1);
    let mut times = Vec::with_capacity(cfg.steps + 1);
    coeffs.column_mut(0).copy_from_slice(a0);
    times.push(0.0);
    let mut a = a0.to_vec();
    for step in 0..cfg.steps {
        let t = step as f64 * cfg.dt;
        a = match cfg.method {
            crate::solver::Method::Erk4 => rom_step_erk4(rom, &a, t, cfg.dt),
            crate::solver::Method::ImplicitMidpoint => rom_step_imr(rom, &a, t, cfg.dt, cfg)?,
        };
        if !a.iter().all(|x| x.is_finite()) {
            return Err(Error::NewtonDiverged {
                residual: f64::INFINITY,
                iters: step + 1,
                tol: cfg.newton_tol,
            });
        }
        coeffs.column_mut(step + 1).copy_from_slice(&a);
        times.push((step + 1) as f64 * cfg.dt);
    }
    Ok(RomTrajectory { times, coeffs })
}

/// 1/2 |a|^2: the kinetic energy of the homogeneous reconstructed field.
pub fn rom_kinetic_energy(a: &[f64]) -> f64 {
    0.5 * vecops::dot(a, a)
}

/// V_bc + Phi a.
pub fn reconstruct_velocity(basis: &RomBasis, v_bc: &[f64], a: &[f64]) -> Vec<f64> {
    let mut v = v_bc.to_vec();
    for (j, col) in basis.phi.column_iter().enumerate() {
        vecops::axpy(a[j], col.as_slice(), &mut v);
    }
    v
}

/// Pseudoinverse solver for the reduced pressure Poisson equation, built
/// once per operator set from the eigendecomposition of -L_r.
pub struct PressureRecovery {
    vals: Vec<f64>,
    vecs: DMatrix<f64>,
}

impl PressureRecovery {
    pub fn new(rom: &RomOperators) -> Self {
        let neg = -&rom.l_r;
        let (vals, vecs) = solve::symmetric_eigen(&neg);
        Self { vals, vecs }
    }

    /// Solve L_r q = rhs in the least-squares sense, dropping eigenmodes
    /// below the relative floor (the reduced constant-pressure direction).
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let m_p = self.vals.len();
        assert_eq!(rhs.len(), m_p);
        let lam_max = self.vals.last().copied().unwrap_or(0.0).max(0.0);
        let floor = 1e-12 * lam_max.max(f64::MIN_POSITIVE);
        let mut q = vec![0.0; m_p];
        for k in 0..m_p {
            let lam = self.vals[k];
            if lam <= floor {
                continue;
            }
            let u = self.vecs.column(k);
            let c = -vecops::dot(u.as_slice(), rhs); // -L_r q = -rhs
            let w = c / lam;
            for i in 0..m_p {
                q[i] += w * u[i];
            }
        }
        q
    }
}

/// Reduced pressure coefficients at state a: solve L_r q = rhs_q(a, t).
pub fn recover_pressure(
    rom: &RomOperators,
    recovery: &PressureRecovery,
    a: &[f64],
    t: f64,
) -> Vec<f64> {
    let m_p = rom.m_p;
    let mut rhs = rom.p0.clone();
    if let Some(tf) = rom.force_time {
        vecops::axpy(tf.eval(t), &rom.p_act, &mut rhs);
    }
    for k in 0..m_p {
        let mut acc = 0.0;
        for i in 0..rom.m {
            acc += rom.p1[(k, i)] * a[i];
        }
        rhs[k] += acc;
    }
    for s in 0..rom.m {
        let c = a[s];
        if c == 0.0 {
            continue;
        }
        let slice = &rom.p2[s];
        for k in 0..m_p {
            let mut acc = 0.0;
            for i in 0..rom.m {
                acc += slice[(k, i)] * a[i];
            }
            rhs[k] += c * acc;
        }
    }
    recovery.solve(&rhs)
}

//! Error norms, conservation traces, and trace/timings CSV output.

use crate::error::{Error, Result};
use crate::operators::FomOperators;
use crate::pod::RomBasis;
use crate::poisson::divergence_residual;
use crate::rom::{
    recover_pressure, reconstruct_velocity, rom_kinetic_energy, PressureRecovery, RomOperators,
    RomTrajectory,
};
use crate::solver::{kinetic_energy, momentum, SnapshotSet};
use crate::vecops;
use std::io::Write;
use std::path::Path;

/// Characteristic scales used to normalize the error norms.
#[derive(Debug, Clone, Copy)]
pub struct References {
    pub v_ref: f64,
    pub p_ref: f64,
}

impl Default for References {
    fn default() -> Self {
        Self { v_ref: 1.0, p_ref: 1.0 }
    }
}

/// Weighted relative velocity error:
/// |v_rom - v_fom|_Omega / |v_ref * ones|_Omega.
pub fn error_velocity(omega: &[f64], v_rom: &[f64], v_fom: &[f64], v_ref: f64) -> f64 {
    assert!(v_ref != 0.0, "zero velocity reference");
    let diff = vecops::sub(v_rom, v_fom);
    let num = vecops::norm_weighted(&diff, omega);
    let den = v_ref.abs() * omega.iter().sum::<f64>().sqrt();
    num / den
}

/// Weighted relative pressure error after shifting both fields to zero
/// weighted mean, so constant offsets (the gauge freedom) do not count.
pub fn error_pressure(omega_p: &[f64], p_rom: &[f64], p_fom: &[f64], p_ref: f64) -> f64 {
    assert!(p_ref != 0.0, "zero pressure reference");
    let mr = vecops::weighted_mean(p_rom, omega_p);
    let mf = vecops::weighted_mean(p_fom, omega_p);
    let diff: Vec<f64> = p_rom.iter().zip(p_fom).map(|(a, b)| (a - mr) - (b - mf)).collect();
    let num = vecops::norm_weighted(&diff, omega_p);
    let den = p_ref.abs() * omega_p.iter().sum::<f64>().sqrt();
    num / den
}

/// Unscaled Omega-norm of the component of v_fom - v_bc outside span(phi):
/// the smallest error any reduced solution on this basis can reach.
pub fn basis_projection_error(
    ops: &FomOperators,
    basis: &RomBasis,
    v_fom: &[f64],
    v_bc: &[f64],
) -> f64 {
    let n = ops.n_vel();
    let mut w = vecops::sub(v_fom, v_bc);
    let mut weighted = w.clone();
    vecops::hadamard_assign(&mut weighted, &ops.omega);
    for col in basis.phi.column_iter() {
        let c = vecops::dot(col.as_slice(), &weighted);
        vecops::axpy(-c, col.as_slice(), &mut w);
    }
    let _ = n;
    vecops::norm_weighted(&w, &ops.omega)
}

/// Telescoping split of the reduced-vs-full energy mismatch
/// K_rom_n - K_fom_n = t1 + t2 + t3 with
/// t1 = ROM drift, t2 = initial projection gap, t3 = FOM drift.
pub fn energy_error_decomposition(
    k_rom_n: f64,
    k_rom_0: f64,
    k_fom_0: f64,
    k_fom_n: f64,
) -> (f64, f64, f64) {
    (k_rom_n - k_rom_0, k_rom_0 - k_fom_0, k_fom_0 - k_fom_n)
}

/// One comparison row at a snapshot time.
#[derive(Debug, Clone, Copy)]
pub struct TraceRow {
    pub t: f64,
    pub k_fom: f64,
    pub k_rom: f64,
    pub p_u_fom: f64,
    pub p_u_rom: f64,
    pub p_v_fom: f64,
    pub p_v_rom: f64,
    pub eps_v: f64,
    pub eps_p: f64,
    pub eps_v_best: f64,
    pub div_residual: f64,
}

/// Evaluate all trace quantities at every snapshot time. The reduced
/// trajectory must contain each snapshot time on its own grid.
pub fn compute_trace(
    ops: &FomOperators,
    basis: &RomBasis,
    rom: &RomOperators,
    snapshots: &SnapshotSet,
    traj: &RomTrajectory,
    refs: &References,
) -> Result<Vec<TraceRow>> {
    let recovery = PressureRecovery::new(rom);
    let dt = if traj.times.len() > 1 { traj.times[1] - traj.times[0] } else { 1.0 };
    let mut rows = Vec::with_capacity(snapshots.n_snapshots());
    for (k, &t) in snapshots.times.iter().enumerate() {
        let idx = (t / dt).round() as usize;
        let matched = traj
            .times
            .get(idx)
            .map(|tt| (tt - t).abs() <= 1e-9 * dt.max(1.0))
            .unwrap_or(false);
        if !matched {
            return Err(Error::DimensionMismatch(format!(
                "snapshot time {t} not on the reduced trajectory grid"
            )));
        }
        let a: Vec<f64> = traj.coeffs.column(idx).as_slice().to_vec();
        let v_col = snapshots.x.column(k);
        let v_fom: &[f64] = v_col.as_slice();
        let v_rom = reconstruct_velocity(basis, &snapshots.v_bc, &a);
        let q = recover_pressure(rom, &recovery, &a, t);
        let mut p_rom = vec![0.0; ops.n_p()];
        for (j, col) in basis.pi.column_iter().enumerate() {
            vecops::axpy(q[j], col.as_slice(), &mut p_rom);
        }
        let (p_u_fom, p_v_fom) = momentum(ops, v_fom);
        let (p_u_rom, p_v_rom) = momentum(ops, &v_rom);
        rows.push(TraceRow {
            t,
            k_fom: kinetic_energy(ops, v_fom),
            k_rom: rom_kinetic_energy(&a),
            p_u_fom,
            p_u_rom,
            p_v_fom,
            p_v_rom,
            eps_v: error_velocity(&ops.omega, &v_rom, v_fom, refs.v_ref),
            eps_p: error_pressure(&ops.omega_p, &p_rom, snapshots.p.column(k).as_slice(), refs.p_ref),
            eps_v_best: basis_projection_error(ops, basis, v_fom, &snapshots.v_bc),
            div_residual: divergence_residual(ops, &v_rom),
        });
    }
    Ok(rows)
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_trace_csv(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "t,K_fom,K_rom,P_u_fom,P_u_rom,P_v_fom,P_v_rom,eps_V,eps_p,eps_V_best,div_residual")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            fmt(r.t),
            fmt(r.k_fom),
            fmt(r.k_rom),
            fmt(r.p_u_fom),
            fmt(r.p_u_rom),
            fmt(r.p_v_fom),
            fmt(r.p_v_rom),
            fmt(r.eps_v),
            fmt(r.eps_p),
            fmt(r.eps_v_best),
            fmt(r.div_residual),
        )?;
    }
    Ok(())
}

pub fn write_timings_csv(path: &Path, stages: &[(String, f64)]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "stage,seconds")?;
    for (stage, seconds) in stages {
        writeln!(out, "{stage},{}", fmt(*seconds))?;
    }
    Ok(())
}

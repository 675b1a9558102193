//! Stage orchestration: snapshots -> basis -> reduced operators -> traces.
//!
//! Each stage reads its inputs from the output directory and writes its
//! products there, so stages compose across separate invocations:
//!
//! - `fom`      writes `snapshots.bin`
//! - `pod`      needs snapshots, writes `basis.bin` (built at the largest
//!   requested mode count; smaller counts are prefixes)
//! - `rom`      needs snapshots and basis, writes `rom_ops_M<k>.bin` per
//!   mode count and runs the reduced model
//! - `compare`  needs snapshots and basis, reruns the reduced model and
//!   writes `trace_M<k>.csv` against the stored snapshots
//! - `all`      everything above in one pass
//!
//! Reduced trajectories are cheap to recompute and are not persisted;
//! `compare` reruns the online phase from the stored basis. Stages that
//! execute SVD, precompute, or online work write `timings.csv`
//! (`stage,seconds`, one row per executed phase, in execution order).
//! Everything except the timings is bit-reproducible across reruns.

use crate::cases::{build_case, CaseConfig, CaseSetup};
use crate::diagnostics::{compute_trace, write_timings_csv, write_trace_csv};
use crate::error::{Error, Result};
use crate::io;
use crate::operators::FomOperators;
use crate::pod::{build_basis, compute_lifting, initial_coeffs, BasisConfig, PodMethod, RomBasis};
use crate::poisson::PoissonSolver;
use crate::rom::{precompute, run_rom, RomOperators, RomTrajectory};
use crate::solver::{run_fom, SnapshotSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const SNAPSHOT_FILE: &str = "snapshots.bin";
pub const BASIS_FILE: &str = "basis.bin";
pub const TIMINGS_FILE: &str = "timings.csv";

pub fn rom_ops_file(m: usize) -> String {
    format!("rom_ops_M{m}.bin")
}

pub fn trace_file(m: usize) -> String {
    format!("trace_M{m}.csv")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Fom,
    Pod,
    Rom,
    Compare,
    All,
}

pub fn run_stage(stage: Stage, cfg: &CaseConfig, out_dir: &Path) -> Result<()> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let mut timings: Vec<(String, f64)> = Vec::new();

    match stage {
        Stage::Fom => {
            let (_, snaps) = produce_snapshots(cfg)?;
            io::write_snapshots(&out_dir.join(SNAPSHOT_FILE), &snaps)?;
        }
        Stage::Pod => {
            let setup = build_case(cfg)?;
            let snaps = load_snapshots(&setup.ops, out_dir)?;
            let basis = produce_basis(cfg, &setup.ops, &snaps, &mut timings)?;
            io::write_basis(&out_dir.join(BASIS_FILE), &basis)?;
        }
        Stage::Rom => {
            let setup = build_case(cfg)?;
            let snaps = load_snapshots(&setup.ops, out_dir)?;
            let basis = load_basis(&setup.ops, out_dir)?;
            for &m in &cfg.modes {
                let (rom_ops, basis_m) = reduce(cfg, &setup.ops, &snaps, &basis, m, &mut timings)?;
                io::write_rom_ops(&out_dir.join(rom_ops_file(m)), &rom_ops)?;
                run_online(cfg, &setup.ops, &snaps, &basis_m, &rom_ops, &mut timings)?;
            }
        }
        Stage::Compare => {
            let setup = build_case(cfg)?;
            let snaps = load_snapshots(&setup.ops, out_dir)?;
            let basis = load_basis(&setup.ops, out_dir)?;
            for &m in &cfg.modes {
                let (rom_ops, basis_m) = reduce(cfg, &setup.ops, &snaps, &basis, m, &mut timings)?;
                let traj = run_online(cfg, &setup.ops, &snaps, &basis_m, &rom_ops, &mut timings)?;
                write_comparison(&setup, &snaps, &basis_m, &rom_ops, &traj, out_dir, m)?;
            }
        }
        Stage::All => {
            let (setup, snaps) = produce_snapshots(cfg)?;
            io::write_snapshots(&out_dir.join(SNAPSHOT_FILE), &snaps)?;
            let basis = produce_basis(cfg, &setup.ops, &snaps, &mut timings)?;
            io::write_basis(&out_dir.join(BASIS_FILE), &basis)?;
            for &m in &cfg.modes {
                let (rom_ops, basis_m) = reduce(cfg, &setup.ops, &snaps, &basis, m, &mut timings)?;
                io::write_rom_ops(&out_dir.join(rom_ops_file(m)), &rom_ops)?;
                let traj = run_online(cfg, &setup.ops, &snaps, &basis_m, &rom_ops, &mut timings)?;
                write_comparison(&setup, &snaps, &basis_m, &rom_ops, &traj, out_dir, m)?;
            }
        }
    }

    if !timings.is_empty() {
        write_timings_csv(&out_dir.join(TIMINGS_FILE), &timings)?;
    }
    Ok(())
}

fn produce_snapshots(cfg: &CaseConfig) -> Result<(CaseSetup, SnapshotSet)> {
    let setup = build_case(cfg)?;
    let poisson = PoissonSolver::new(&setup.ops)?;
    let v_bc = compute_lifting(&setup.ops, &poisson)?;
    let snaps = run_fom(&setup.ops, &poisson, &setup.v0, &cfg.fom, v_bc)?;
    Ok((setup, snaps))
}

fn produce_basis(
    cfg: &CaseConfig,
    ops: &FomOperators,
    snaps: &SnapshotSet,
    timings: &mut Vec<(String, f64)>,
) -> Result<RomBasis> {
    let m_max = *cfg.modes.iter().max().unwrap();
    let basis_cfg = BasisConfig {
        m: m_max,
        m_p: cfg.pressure_modes.resolve(m_max),
        constrained: cfg.constrained,
        method: PodMethod::ThinSvd,
    };
    let start = Instant::now();
    let basis = build_basis(ops, snaps, &basis_cfg)?;
    timings.push(("SVD".into(), start.elapsed().as_secs_f64()));
    Ok(basis)
}

/// Truncate the stored basis to m velocity modes and build the reduced
/// operators, timing the precompute phase.
fn reduce(
    cfg: &CaseConfig,
    ops: &FomOperators,
    snaps: &SnapshotSet,
    basis: &RomBasis,
    m: usize,
    timings: &mut Vec<(String, f64)>,
) -> Result<(RomOperators, RomBasis)> {
    if m > basis.m() {
        return Err(Error::InvalidConfig(format!(
            "requested {m} modes but the stored basis holds {}",
            basis.m()
        )));
    }
    let m_p = cfg.pressure_modes.resolve(m).min(basis.m_p());
    let basis_m = basis.truncated(m, m_p);
    let start = Instant::now();
    let rom_ops = precompute(ops, &basis_m, &snaps.v_bc);
    timings.push(("precompute".into(), start.elapsed().as_secs_f64()));
    Ok((rom_ops, basis_m))
}

fn run_online(
    cfg: &CaseConfig,
    ops: &FomOperators,
    snaps: &SnapshotSet,
    basis_m: &RomBasis,
    rom_ops: &RomOperators,
    timings: &mut Vec<(String, f64)>,
) -> Result<RomTrajectory> {
    let v0 = snaps.x.column(0);
    let a0 = initial_coeffs(ops, basis_m, v0.as_slice(), &snaps.v_bc);
    let start = Instant::now();
    let traj = run_rom(rom_ops, &a0, &cfg.rom)?;
    timings.push(("online".into(), start.elapsed().as_secs_f64()));
    Ok(traj)
}

fn write_comparison(
    setup: &CaseSetup,
    snaps: &SnapshotSet,
    basis_m: &RomBasis,
    rom_ops: &RomOperators,
    traj: &RomTrajectory,
    out_dir: &Path,
    m: usize,
) -> Result<()> {
    let rows = compute_trace(&setup.ops, basis_m, rom_ops, snaps, traj, &setup.refs)?;
    write_trace_csv(&out_dir.join(trace_file(m)), &rows)
}

fn load_snapshots(ops: &FomOperators, out_dir: &Path) -> Result<SnapshotSet> {
    let path = required(out_dir.join(SNAPSHOT_FILE), Error::MissingSnapshots)?;
    let snaps = io::read_snapshots(&path)?;
    if snaps.x.nrows() != ops.n_vel() || snaps.p.nrows() != ops.n_p() {
        return Err(Error::DimensionMismatch(format!(
            "snapshot file holds {}+{} unknowns but the configured grid has {}+{}",
            snaps.x.nrows(),
            snaps.p.nrows(),
            ops.n_vel(),
            ops.n_p()
        )));
    }
    Ok(snaps)
}

fn load_basis(ops: &FomOperators, out_dir: &Path) -> Result<RomBasis> {
    let path = required(out_dir.join(BASIS_FILE), Error::MissingArtifact)?;
    let basis = io::read_basis(&path)?;
    if basis.phi.nrows() != ops.n_vel() || basis.pi.nrows() != ops.n_p() {
        return Err(Error::DimensionMismatch(
            "basis file does not match the configured grid".into(),
        ));
    }
    Ok(basis)
}

fn required(path: PathBuf, wrap: fn(String) -> Error) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(wrap(path.display().to_string()))
    }
}

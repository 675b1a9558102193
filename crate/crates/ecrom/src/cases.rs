//! The three shipped flow cases and the run configuration that selects
//! grids, integrators, and basis options.
//!
//! Each case builds a [`CaseSetup`]: assembled operators (with the body
//! force attached where the case has one), an initial velocity that is
//! discretely divergence-consistent, and the reference scales used by the
//! error norms.

use crate::diagnostics::References;
use crate::error::{Error, Result};
use crate::grid::{Bc, GridSpec, Profile};
use crate::operators::{assemble_body_force, ActuatorDisk, FomOperators};
use crate::poisson::{self, PoissonSolver};
use crate::solver::{IntegratorConfig, Method};
use serde::Deserialize;
use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CaseKind {
    /// Periodic double shear layer on [0,2pi]^2, inviscid.
    ShearLayer {
        #[serde(default = "defaults::delta")]
        delta: f64,
        #[serde(default = "defaults::epsilon")]
        epsilon: f64,
    },
    /// Unit square, no-slip walls, north lid sliding at unit speed.
    LidDrivenCavity {
        #[serde(default = "defaults::re_cavity")]
        re: f64,
    },
    /// Channel [-4,8]x[-2,2] with parabolic inflow and a pulsed actuator
    /// segment at x=0.
    Actuator {
        #[serde(default = "defaults::c_t")]
        c_t: f64,
        #[serde(default = "defaults::re_wake")]
        re: f64,
    },
}

mod defaults {
    use std::f64::consts::PI;

    pub fn delta() -> f64 {
        PI / 15.0
    }

    pub fn epsilon() -> f64 {
        0.05
    }

    pub fn re_cavity() -> f64 {
        1000.0
    }

    pub fn c_t() -> f64 {
        0.5
    }

    pub fn re_wake() -> f64 {
        500.0
    }
}

impl CaseKind {
    pub fn shear_layer() -> Self {
        CaseKind::ShearLayer { delta: defaults::delta(), epsilon: defaults::epsilon() }
    }

    pub fn lid_driven_cavity() -> Self {
        CaseKind::LidDrivenCavity { re: defaults::re_cavity() }
    }

    pub fn actuator() -> Self {
        CaseKind::Actuator { c_t: defaults::c_t(), re: defaults::re_wake() }
    }

    /// Kinematic viscosity implied by the case parameters (reference length
    /// and velocity are both 1 in the wall-driven and wake cases).
    pub fn nu(&self) -> f64 {
        match *self {
            CaseKind::ShearLayer { .. } => 0.0,
            CaseKind::LidDrivenCavity { re } | CaseKind::Actuator { re, .. } => 1.0 / re,
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be positive and finite, got {v}")))
            }
        };
        match *self {
            CaseKind::ShearLayer { delta, epsilon } => {
                positive("delta", delta)?;
                if !epsilon.is_finite() {
                    return Err(Error::InvalidConfig("epsilon must be finite".into()));
                }
            }
            CaseKind::LidDrivenCavity { re } => positive("re", re)?,
            CaseKind::Actuator { c_t, re } => {
                positive("re", re)?;
                if !(c_t >= 0.0) || !c_t.is_finite() {
                    return Err(Error::InvalidConfig(format!(
                        "c_t must be non-negative and finite, got {c_t}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Number of pressure modes: an explicit count or "same" (match the
/// velocity mode count).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PressureModes {
    Same,
    Count(usize),
}

impl PressureModes {
    pub fn resolve(&self, m: usize) -> usize {
        match *self {
            PressureModes::Same => m,
            PressureModes::Count(n) => n,
        }
    }
}

impl<'de> Deserialize<'de> for PressureModes {
    fn deserialize<D>(d: D) -> std::result::Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(usize),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(n) => Ok(PressureModes::Count(n)),
            Raw::Word(w) if w == "same" => Ok(PressureModes::Same),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "expected a mode count or \"same\", got {w:?}"
            ))),
        }
    }
}

pub fn parse_method(s: &str) -> Result<Method> {
    match s {
        "imr" => Ok(Method::ImplicitMidpoint),
        "rk4" => Ok(Method::Erk4),
        other => Err(Error::InvalidConfig(format!(
            "unknown method {other:?}, expected \"imr\" or \"rk4\""
        ))),
    }
}

/// Fully resolved run configuration. Parsed from TOML with per-case
/// defaults filled in; CLI flags are applied on top by the binary.
#[derive(Debug, Clone)]
pub struct CaseConfig {
    pub case: CaseKind,
    pub nx: usize,
    pub ny: usize,
    pub fom: IntegratorConfig,
    pub rom: IntegratorConfig,
    /// Velocity mode counts to sweep; the basis is built once at the maximum.
    pub modes: Vec<usize>,
    pub pressure_modes: PressureModes,
    pub constrained: bool,
    /// Reserved for randomized diagnostics; the pipeline itself is
    /// deterministic.
    pub seed: u64,
}

fn desk_grid(case: &CaseKind) -> (usize, usize) {
    match case {
        CaseKind::ShearLayer { .. } => (64, 64),
        CaseKind::LidDrivenCavity { .. } => (64, 64),
        CaseKind::Actuator { .. } => (120, 40),
    }
}

fn paper_grid(case: &CaseKind) -> (usize, usize) {
    match case {
        CaseKind::ShearLayer { .. } => (200, 200),
        CaseKind::LidDrivenCavity { .. } => (100, 100),
        CaseKind::Actuator { .. } => (240, 80),
    }
}

impl CaseConfig {
    /// Defaults sized so the full pipeline runs in seconds to minutes.
    pub fn desk(case: CaseKind) -> Self {
        let (nx, ny) = desk_grid(&case);
        let (fom, rom, modes) = match case {
            CaseKind::ShearLayer { .. } => (
                IntegratorConfig::new(Method::Erk4, 0.01, 400, 1),
                IntegratorConfig::new(Method::ImplicitMidpoint, 0.01, 400, 1),
                vec![2, 4, 8, 16],
            ),
            CaseKind::LidDrivenCavity { .. } => (
                IntegratorConfig::new(Method::Erk4, 0.01, 1000, 1),
                IntegratorConfig::new(Method::Erk4, 0.01, 1000, 1),
                vec![5, 10, 15, 20],
            ),
            CaseKind::Actuator { .. } => (
                IntegratorConfig::new(Method::Erk4, 0.025, 800, 1),
                IntegratorConfig::new(Method::Erk4, 0.025, 800, 1),
                vec![10],
            ),
        };
        Self {
            case,
            nx,
            ny,
            fom,
            rom,
            modes,
            pressure_modes: PressureModes::Same,
            constrained: false,
            seed: 0,
        }
    }

    /// Same physics at the full study resolutions.
    pub fn paper(case: CaseKind) -> Self {
        let mut cfg = Self::desk(case);
        (cfg.nx, cfg.ny) = paper_grid(&case);
        cfg
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("config parse error: {e}")))?;
        let mut cfg = Self::desk(raw.case);
        if let Some(grid) = raw.grid {
            if let Some(scale) = grid.scale.as_deref() {
                match scale {
                    "desk" => {}
                    "paper" => (cfg.nx, cfg.ny) = paper_grid(&cfg.case),
                    other => {
                        return Err(Error::InvalidConfig(format!(
                            "unknown grid scale {other:?}, expected \"desk\" or \"paper\""
                        )))
                    }
                }
            }
            if let Some(nx) = grid.nx {
                cfg.nx = nx;
            }
            if let Some(ny) = grid.ny {
                cfg.ny = ny;
            }
        }
        if let Some(i) = raw.fom {
            i.apply(&mut cfg.fom)?;
        }
        if let Some(i) = raw.rom {
            i.apply(&mut cfg.rom)?;
        }
        if let Some(modes) = raw.modes {
            cfg.modes = modes;
        }
        if let Some(p) = raw.pressure_modes {
            cfg.pressure_modes = p;
        }
        if let Some(c) = raw.constrained {
            cfg.constrained = c;
        }
        if let Some(s) = raw.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.case.validate()?;
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::InvalidConfig(format!(
                "grid must be at least 2x2, got {}x{}",
                self.nx, self.ny
            )));
        }
        self.fom.validate()?;
        self.rom.validate()?;
        if self.modes.is_empty() {
            return Err(Error::InvalidConfig("mode list must not be empty".into()));
        }
        let min_m = if self.constrained { 2 } else { 1 };
        if self.modes.iter().any(|&m| m < min_m) {
            return Err(Error::InvalidConfig(format!(
                "every mode count must be at least {min_m} for this basis type"
            )));
        }
        if self.pressure_modes.resolve(self.modes.iter().copied().max().unwrap()) == 0 {
            return Err(Error::InvalidConfig("need at least one pressure mode".into()));
        }
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    case: CaseKind,
    grid: Option<RawGrid>,
    fom: Option<RawIntegrator>,
    rom: Option<RawIntegrator>,
    #[serde(rename = "M")]
    modes: Option<Vec<usize>>,
    #[serde(rename = "M_p")]
    pressure_modes: Option<PressureModes>,
    constrained: Option<bool>,
    seed: Option<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    nx: Option<usize>,
    ny: Option<usize>,
    scale: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntegrator {
    method: Option<String>,
    dt: Option<f64>,
    steps: Option<usize>,
    t_end: Option<f64>,
    snapshot_stride: Option<usize>,
    newton_tol: Option<f64>,
    newton_max_iters: Option<usize>,
}

impl RawIntegrator {
    fn apply(self, cfg: &mut IntegratorConfig) -> Result<()> {
        if let Some(m) = self.method.as_deref() {
            cfg.method = parse_method(m)?;
        }
        if let Some(dt) = self.dt {
            cfg.dt = dt;
        }
        match (self.steps, self.t_end) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidConfig("give steps or t_end, not both".into()))
            }
            (Some(s), None) => cfg.steps = s,
            (None, Some(t_end)) => {
                if !(cfg.dt > 0.0) {
                    return Err(Error::InvalidConfig("t_end needs a positive dt".into()));
                }
                let steps = (t_end / cfg.dt).round();
                if steps < 1.0 || (steps * cfg.dt - t_end).abs() > 1e-9 * t_end.abs().max(1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "t_end {t_end} is not a whole number of steps of dt {}",
                        cfg.dt
                    )));
                }
                cfg.steps = steps as usize;
            }
            (None, None) => {}
        }
        if let Some(s) = self.snapshot_stride {
            cfg.snapshot_stride = s;
        }
        if let Some(tol) = self.newton_tol {
            cfg.newton_tol = tol;
        }
        if let Some(iters) = self.newton_max_iters {
            cfg.newton_max_iters = iters;
        }
        Ok(())
    }
}

/// Assembled operators, admissible initial state, and error-norm scales.
pub struct CaseSetup {
    pub ops: FomOperators,
    pub v0: Vec<f64>,
    pub refs: References,
}

pub fn build_case(cfg: &CaseConfig) -> Result<CaseSetup> {
    cfg.validate()?;
    match cfg.case {
        CaseKind::ShearLayer { delta, epsilon } => case_shear_layer(cfg.nx, cfg.ny, delta, epsilon),
        CaseKind::LidDrivenCavity { re } => case_lid_driven_cavity(cfg.nx, cfg.ny, re),
        CaseKind::Actuator { c_t, re } => case_actuator(cfg.nx, cfg.ny, c_t, re),
    }
}

/// Two opposed shear layers with a sinusoidal transverse perturbation.
/// The mean of the u profile is nonzero so the two momentum components
/// differ. The sampled field is projected once so snapshot 0 is discretely
/// divergence-free to solver tolerance.
pub fn case_shear_layer(nx: usize, ny: usize, delta: f64, epsilon: f64) -> Result<CaseSetup> {
    let spec = GridSpec {
        nx,
        ny,
        x_min: 0.0,
        x_max: 2.0 * PI,
        y_min: 0.0,
        y_max: 2.0 * PI,
        bc_west: Bc::Periodic,
        bc_east: Bc::Periodic,
        bc_south: Bc::Periodic,
        bc_north: Bc::Periodic,
    };
    let ops = FomOperators::assemble(spec, 0.0)?;
    let grid = &ops.grid;
    let mut v0 = vec![0.0; grid.n_vel()];
    for j in 0..ny {
        let y = grid.y_center(j);
        let u = if y <= PI {
            1.0 + ((y - PI / 2.0) / delta).tanh()
        } else {
            1.0 + ((3.0 * PI / 2.0 - y) / delta).tanh()
        };
        for slot in 0..grid.nux {
            v0[grid.u_index(slot, j)] = u;
        }
    }
    for ci in 0..nx {
        let v = epsilon * grid.x_center(ci).sin();
        for slot in 0..grid.nvy {
            v0[grid.v_index(ci, slot)] = v;
        }
    }
    let solver = PoissonSolver::new(&ops)?;
    poisson::project_velocity(&ops, &solver, &mut v0, 1)?;
    Ok(CaseSetup { ops, v0, refs: References { v_ref: 1.0, p_ref: 1.0 } })
}

/// Closed cavity driven by the north wall; starts from rest. The lid speed
/// enters the diffusive boundary vector only, so the net boundary flux is
/// zero and no lifting field is needed.
pub fn case_lid_driven_cavity(nx: usize, ny: usize, re: f64) -> Result<CaseSetup> {
    let lid: Profile = Arc::new(|_, _| (1.0, 0.0));
    let spec = GridSpec {
        nx,
        ny,
        x_min: 0.0,
        x_max: 1.0,
        y_min: 0.0,
        y_max: 1.0,
        bc_west: Bc::NoSlip,
        bc_east: Bc::NoSlip,
        bc_south: Bc::NoSlip,
        bc_north: Bc::Dirichlet(lid),
    };
    let ops = FomOperators::assemble(spec, 1.0 / re)?;
    let v0 = vec![0.0; ops.n_vel()];
    Ok(CaseSetup { ops, v0, refs: References { v_ref: 1.0, p_ref: 1.0 } })
}

fn inflow_profile(y: f64) -> f64 {
    0.75 - 3.0 / 32.0 * (y - 2.0) * (y + 2.0)
}

/// Open channel with unit-mean parabolic inflow and a pulsed actuator
/// segment of strength c_t at x=0, |y| <= 1/2. The initial state extends
/// the inflow profile across the domain, which is exactly divergence-
/// consistent on the staggered layout. The pressure reference is the
/// actuator jump c_t/2.
pub fn case_actuator(nx: usize, ny: usize, c_t: f64, re: f64) -> Result<CaseSetup> {
    let inflow: Profile = Arc::new(|_, y| (inflow_profile(y), 0.0));
    let spec = GridSpec {
        nx,
        ny,
        x_min: -4.0,
        x_max: 8.0,
        y_min: -2.0,
        y_max: 2.0,
        bc_west: Bc::Dirichlet(inflow),
        bc_east: Bc::Outflow { p_inf: 0.0 },
        bc_south: Bc::Outflow { p_inf: 0.0 },
        bc_north: Bc::Outflow { p_inf: 0.0 },
    };
    let mut ops = FomOperators::assemble(spec, 1.0 / re)?;
    if c_t > 0.0 {
        let disk = ActuatorDisk { x0: 0.0, y_lo: -0.5, y_hi: 0.5, c_t };
        ops.force = Some(assemble_body_force(&ops.grid, &disk)?);
    }
    let grid = &ops.grid;
    let mut v0 = vec![0.0; grid.n_vel()];
    for j in 0..grid.ny() {
        let u = inflow_profile(grid.y_center(j));
        for slot in 0..grid.nux {
            v0[grid.u_index(slot, j)] = u;
        }
    }
    let p_ref = if c_t > 0.0 { 0.5 * c_t } else { 1.0 };
    Ok(CaseSetup { ops, v0, refs: References { v_ref: 1.0, p_ref } })
}

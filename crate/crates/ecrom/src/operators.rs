//! Assembly of every grid operator and boundary vector.
//!
//! The discrete structure this module guarantees:
//!
//! - gradient G is the negated transpose of divergence M, bitwise;
//! - diffusion D = -Q'Q for an explicitly built difference factor Q, so D is
//!   symmetric negative semi-definite by construction;
//! - convection is K.((I.Vc + y_I) o (A.Vu + y_A)) where the interpolation
//!   matrices I and A use mesh-independent 1/2 averages, K differences the
//!   four surrounding flux points of each velocity volume, and shared flux
//!   points give exact telescoping (skew-symmetry up to the divergence of
//!   the convecting field).
//!
//! Boundary handling: Dirichlet/no-slip values fold into the y_* vectors,
//! outflow faces keep one-sided (mirror) closures, and the tangential wall
//! distance for diffusion is the half cell left after ghost elimination.

use crate::error::{Error, Result};
use crate::grid::{Bc, GridSpec, Sample, Side, StaggeredGrid};
use crate::sparse::Csr;
use crate::vecops;

/// Scalar time factor of a body force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeFactor {
    Constant,
    /// g(t) = 1 + sin(pi t).
    OnePlusSinPi,
}

impl TimeFactor {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeFactor::Constant => 1.0,
            TimeFactor::OnePlusSinPi => 1.0 + (std::f64::consts::PI * t).sin(),
        }
    }
}

/// Body force split as spatial vector times scalar time factor, so reduced
/// models can precompute the projected spatial part.
#[derive(Debug, Clone)]
pub struct BodyForce {
    pub spatial: Vec<f64>,
    pub time_factor: TimeFactor,
}

impl BodyForce {
    /// Accumulate g(t) * spatial into out.
    pub fn add_at(&self, t: f64, out: &mut [f64]) {
        vecops::axpy(self.time_factor.eval(t), &self.spatial, out);
    }
}

/// Vertical actuator segment at x = x0 spanning y_lo..y_hi, with thrust
/// coefficient c_t acting in -x direction.
#[derive(Debug, Clone, Copy)]
pub struct ActuatorDisk {
    pub x0: f64,
    pub y_lo: f64,
    pub y_hi: f64,
    pub c_t: f64,
}

#[derive(Debug, Clone)]
pub struct FomOperators {
    pub grid: StaggeredGrid,
    pub nu: f64,
    /// Divergence, n_p x n_vel: M V = y_M on admissible states.
    pub m: Csr,
    /// Gradient, n_vel x n_p: exactly -M'.
    pub g: Csr,
    /// Velocity volume sizes (diagonal).
    pub omega: Vec<f64>,
    pub omega_inv: Vec<f64>,
    /// Pressure volume sizes (diagonal).
    pub omega_p: Vec<f64>,
    /// Difference factor with D = -Q'Q.
    pub q: Csr,
    pub d: Csr,
    /// Flux-point difference, n_vel x n_f.
    pub k: Csr,
    /// Convecting-flux interpolation, n_f x n_vel.
    pub i_op: Csr,
    /// Convected-velocity average, n_f x n_vel.
    pub a_op: Csr,
    /// Poisson operator M diag(1/omega) G, n_p x n_p.
    pub l: Csr,
    pub y_m: Vec<f64>,
    pub y_g: Vec<f64>,
    pub y_d: Vec<f64>,
    pub y_i: Vec<f64>,
    pub y_a: Vec<f64>,
    pub force: Option<BodyForce>,
}

impl FomOperators {
    pub fn assemble(spec: GridSpec, nu: f64) -> Result<Self> {
        let grid = StaggeredGrid::new(spec)?;
        let (m, y_m) = assemble_divergence(&grid);
        let g = m.transpose().negated();
        let y_g = assemble_outflow_pressure(&grid);
        let cell = grid.dx() * grid.dy();
        let omega = vec![cell; grid.n_vel()];
        let omega_inv = vec![1.0 / cell; grid.n_vel()];
        let omega_p = vec![cell; grid.n_p()];
        let (q, y_d) = assemble_diffusion(&grid);
        let d = q.transpose().matmul(&q).negated();
        let (k, i_op, a_op, y_i, y_a) = assemble_convection_parts(&grid);
        let l = m.matmul(&g.scale_rows(&omega_inv));
        Ok(Self {
            grid,
            nu,
            m,
            g,
            omega,
            omega_inv,
            omega_p,
            q,
            d,
            k,
            i_op,
            a_op,
            l,
            y_m,
            y_g,
            y_d,
            y_i,
            y_a,
            force: None,
        })
    }

    pub fn n_vel(&self) -> usize {
        self.grid.n_vel()
    }

    pub fn n_p(&self) -> usize {
        self.grid.n_p()
    }

    /// Diffusive term nu * (D V + y_D).
    pub fn diffusion(&self, v: &[f64]) -> Vec<f64> {
        let mut out = self.d.matvec(v);
        vecops::add_assign(&mut out, &self.y_d);
        vecops::scale(self.nu, &mut out);
        out
    }
}

/// Convective term C(V_c, V_u) = K.((I V_c + y_I) o (A V_u + y_A)); the first
/// argument convects the second.
pub fn convection(ops: &FomOperators, v_conv: &[f64], v_adv: &[f64]) -> Vec<f64> {
    assert_eq!(v_conv.len(), ops.n_vel(), "convecting field length");
    assert_eq!(v_adv.len(), ops.n_vel(), "convected field length");
    let mut w1 = ops.i_op.matvec(v_conv);
    vecops::add_assign(&mut w1, &ops.y_i);
    let mut w2 = ops.a_op.matvec(v_adv);
    vecops::add_assign(&mut w2, &ops.y_a);
    vecops::hadamard_assign(&mut w1, &w2);
    ops.k.matvec(&w1)
}

/// Convection frozen in its first argument: C~(V_c) = K diag(I V_c + y_I) A.
/// Only defined on grids without in/outflow edges, where C(V_c, V) =
/// C~(V_c) V holds exactly and C~ is skew-symmetric for divergence-free V_c.
pub fn convection_matrix(ops: &FomOperators, v_conv: &[f64]) -> Result<Csr> {
    let spec = &ops.grid.spec;
    for side in [Side::West, Side::East, Side::South, Side::North] {
        match spec.bc(side) {
            Bc::Periodic | Bc::NoSlip => {}
            Bc::Dirichlet(_) | Bc::Outflow { .. } => {
                return Err(Error::InvalidBc(
                    "convection matrix form requires periodic or no-slip boundaries".into(),
                ))
            }
        }
    }
    let mut w1 = ops.i_op.matvec(v_conv);
    vecops::add_assign(&mut w1, &ops.y_i);
    Ok(ops.k.matmul(&ops.a_op.scale_rows(&w1)))
}

/// Jacobian of V -> convection(V, V):
/// K (diag(I V + y_I) A + diag(A V + y_A) I).
pub fn convection_jacobian(ops: &FomOperators, v: &[f64]) -> Csr {
    let mut w1 = ops.i_op.matvec(v);
    vecops::add_assign(&mut w1, &ops.y_i);
    let mut w2 = ops.a_op.matvec(v);
    vecops::add_assign(&mut w2, &ops.y_a);
    let inner = ops.a_op.scale_rows(&w1).add_scaled(1.0, &ops.i_op.scale_rows(&w2), 1.0);
    ops.k.matmul(&inner)
}

/// Spatial force vector: -c_t * dy at every u volume the disk intersects.
pub fn assemble_body_force(grid: &StaggeredGrid, disk: &ActuatorDisk) -> Result<BodyForce> {
    let spec = &grid.spec;
    if disk.x0 < spec.x_min
        || disk.x0 > spec.x_max
        || disk.y_lo < spec.y_min
        || disk.y_hi > spec.y_max
        || disk.y_lo >= disk.y_hi
    {
        return Err(Error::ForceOutsideDomain(format!(
            "x0={}, y=[{},{}] not inside [{},{}]x[{},{}]",
            disk.x0, disk.y_lo, disk.y_hi, spec.x_min, spec.x_max, spec.y_min, spec.y_max
        )));
    }
    let (dx, dy) = (grid.dx(), grid.dy());
    // Nearest stored u-face column to x0, ties toward the lower index.
    let raw = ((disk.x0 - spec.x_min) / dx).round() as isize;
    let raw = raw.clamp(0, spec.nx as isize) as usize;
    let fi = [raw, raw.saturating_sub(1), (raw + 1).min(spec.nx)]
        .into_iter()
        .find(|&f| grid.u_slot_of_face(f).is_some())
        .ok_or_else(|| Error::ForceOutsideDomain("no stored u-face near x0".into()))?;
    let slot = grid.u_slot_of_face(fi).unwrap();
    let mut spatial = vec![0.0; grid.n_vel()];
    let tol = 1e-12 * dy;
    for j in 0..spec.ny {
        let (lo, hi) = (grid.y_face(j), grid.y_face(j + 1));
        if hi.min(disk.y_hi) - lo.max(disk.y_lo) > tol {
            spatial[grid.u_index(slot, j)] = -disk.c_t * dy;
        }
    }
    Ok(BodyForce { spatial, time_factor: TimeFactor::OnePlusSinPi })
}

fn push(trips: &mut Vec<(usize, usize, f64)>, y: &mut [f64], row: usize, weight: f64, s: Sample) {
    match s {
        Sample::Dof(ix) => trips.push((row, ix, weight)),
        Sample::Value(val) => y[row] += weight * val,
    }
}

fn assemble_divergence(grid: &StaggeredGrid) -> (Csr, Vec<f64>) {
    let (nx, ny) = (grid.nx(), grid.ny());
    let (dx, dy) = (grid.dx(), grid.dy());
    let mut trips = Vec::with_capacity(4 * nx * ny);
    let mut y_m = vec![0.0; grid.n_p()];
    for j in 0..ny {
        for i in 0..nx {
            let row = grid.p_index(i, j);
            // (face, sign): east/north positive, west/south negative
            for (fi, sign) in [(i as isize + 1, 1.0), (i as isize, -1.0)] {
                match grid.u_sample(fi, j as isize) {
                    Sample::Dof(ix) => trips.push((row, ix, sign * dy)),
                    Sample::Value(ub) => y_m[row] -= sign * dy * ub,
                }
            }
            for (gj, sign) in [(j as isize + 1, 1.0), (j as isize, -1.0)] {
                match grid.v_sample(i as isize, gj) {
                    Sample::Dof(ix) => trips.push((row, ix, sign * dx)),
                    Sample::Value(vb) => y_m[row] -= sign * dx * vb,
                }
            }
        }
    }
    (Csr::from_triplets(grid.n_p(), grid.n_vel(), trips), y_m)
}

/// Prescribed boundary-pressure contribution to the momentum equation:
/// p_inf times face area with the outward sign, on outflow-face unknowns.
fn assemble_outflow_pressure(grid: &StaggeredGrid) -> Vec<f64> {
    let spec = &grid.spec;
    let (nx, ny) = (grid.nx(), grid.ny());
    let (dx, dy) = (grid.dx(), grid.dy());
    let mut y_g = vec![0.0; grid.n_vel()];
    if let Bc::Outflow { p_inf } = spec.bc_west {
        let slot = grid.u_slot_of_face(0).unwrap();
        for j in 0..ny {
            y_g[grid.u_index(slot, j)] = -dy * p_inf;
        }
    }
    if let Bc::Outflow { p_inf } = spec.bc_east {
        let slot = grid.u_slot_of_face(nx).unwrap();
        for j in 0..ny {
            y_g[grid.u_index(slot, j)] = dy * p_inf;
        }
    }
    if let Bc::Outflow { p_inf } = spec.bc_south {
        let slot = grid.v_slot_of_face(0).unwrap();
        for i in 0..nx {
            y_g[grid.v_index(i, slot)] = -dx * p_inf;
        }
    }
    if let Bc::Outflow { p_inf } = spec.bc_north {
        let slot = grid.v_slot_of_face(ny).unwrap();
        for i in 0..nx {
            y_g[grid.v_index(i, slot)] = dx * p_inf;
        }
    }
    y_g
}

/// One difference row of Q per viscous flux interface. Prescribed neighbor
/// values become y_D entries on the adjacent unknown (c * value); the
/// tangential wall distance after ghost elimination is half a cell.
fn assemble_diffusion(grid: &StaggeredGrid) -> (Csr, Vec<f64>) {
    let spec = &grid.spec;
    let (nx, ny) = (grid.nx(), grid.ny());
    let (dx, dy) = (grid.dx(), grid.dy());
    let mut trips: Vec<(usize, usize, f64)> = Vec::new();
    let mut y_d = vec![0.0; grid.n_vel()];
    let mut row = 0usize;

    let pair = |trips: &mut Vec<(usize, usize, f64)>,
                    y_d: &mut Vec<f64>,
                    row: &mut usize,
                    c: f64,
                    sa: Sample,
                    sb: Sample| {
        let s = c.sqrt();
        match (sa, sb) {
            (Sample::Dof(a), Sample::Dof(b)) => {
                trips.push((*row, a, -s));
                trips.push((*row, b, s));
            }
            (Sample::Dof(a), Sample::Value(vb)) => {
                trips.push((*row, a, s));
                y_d[a] += c * vb;
            }
            (Sample::Value(va), Sample::Dof(b)) => {
                trips.push((*row, b, s));
                y_d[b] += c * va;
            }
            (Sample::Value(_), Sample::Value(_)) => {}
        }
        *row += 1;
    };
    let wall = |trips: &mut Vec<(usize, usize, f64)>,
                    y_d: &mut Vec<f64>,
                    row: &mut usize,
                    c: f64,
                    dof: usize,
                    value: f64| {
        trips.push((*row, dof, c.sqrt()));
        y_d[dof] += c * value;
        *row += 1;
    };

    // u, x-direction: one interface per cell, between its west and east faces.
    let cx = dy / dx;
    for j in 0..ny {
        for ci in 0..nx {
            let sa = grid.u_sample(ci as isize, j as isize);
            let sb = grid.u_sample(ci as isize + 1, j as isize);
            pair(&mut trips, &mut y_d, &mut row, cx, sa, sb);
        }
    }
    // u, y-direction: interfaces between vertical neighbors along each stored column.
    let cy = dx / dy;
    let cy_wall = 2.0 * dx / dy;
    for slot in 0..grid.nux {
        let fi = grid.u_face_of_slot(slot);
        if grid.periodic_y {
            for gj in 0..ny {
                let sa = grid.u_sample(fi as isize, gj as isize - 1);
                let sb = grid.u_sample(fi as isize, gj as isize);
                pair(&mut trips, &mut y_d, &mut row, cy, sa, sb);
            }
        } else {
            if spec.bc_south.is_wall() {
                let uw = spec.bc_south.velocity_at(grid.x_face(fi), spec.y_min).0;
                wall(&mut trips, &mut y_d, &mut row, cy_wall, grid.u_index(slot, 0), uw);
            }
            for gj in 1..ny {
                let sa = grid.u_sample(fi as isize, gj as isize - 1);
                let sb = grid.u_sample(fi as isize, gj as isize);
                pair(&mut trips, &mut y_d, &mut row, cy, sa, sb);
            }
            if spec.bc_north.is_wall() {
                let uw = spec.bc_north.velocity_at(grid.x_face(fi), spec.y_max).0;
                wall(&mut trips, &mut y_d, &mut row, cy_wall, grid.u_index(slot, ny - 1), uw);
            }
            // outflow: tangential viscous flux dropped (one-sided closure)
        }
    }
    // v, y-direction: one interface per cell.
    for cj in 0..ny {
        for ci in 0..nx {
            let sa = grid.v_sample(ci as isize, cj as isize);
            let sb = grid.v_sample(ci as isize, cj as isize + 1);
            pair(&mut trips, &mut y_d, &mut row, cy, sa, sb);
        }
    }
    // v, x-direction along each stored row of v faces.
    let cx_wall = 2.0 * dy / dx;
    for slot in 0..grid.nvy {
        let gj = grid.v_face_of_slot(slot);
        if grid.periodic_x {
            for fi in 0..nx {
                let sa = grid.v_sample(fi as isize - 1, gj as isize);
                let sb = grid.v_sample(fi as isize, gj as isize);
                pair(&mut trips, &mut y_d, &mut row, cx, sa, sb);
            }
        } else {
            if spec.bc_west.is_wall() {
                let vw = spec.bc_west.velocity_at(spec.x_min, grid.y_face(gj)).1;
                wall(&mut trips, &mut y_d, &mut row, cx_wall, grid.v_index(0, slot), vw);
            }
            for fi in 1..nx {
                let sa = grid.v_sample(fi as isize - 1, gj as isize);
                let sb = grid.v_sample(fi as isize, gj as isize);
                pair(&mut trips, &mut y_d, &mut row, cx, sa, sb);
            }
            if spec.bc_east.is_wall() {
                let vw = spec.bc_east.velocity_at(spec.x_max, grid.y_face(gj)).1;
                wall(&mut trips, &mut y_d, &mut row, cx_wall, grid.v_index(nx - 1, slot), vw);
            }
        }
    }

    (Csr::from_triplets(row, grid.n_vel(), trips), y_d)
}

/// Flux-point numbering shared by K (rows of velocity volumes) and I/A
/// (rows of flux points). Corner ids take canonical (wrapped) face indices.
struct FluxLayout {
    nx: usize,
    ux_west: usize,
    ux_east: usize,
    uy: usize,
    vx: usize,
    vy: usize,
    vy_south: usize,
    vy_north: usize,
    n_f: usize,
}

impl FluxLayout {
    fn new(nx: usize, ny: usize) -> Self {
        let ux_west = nx * ny;
        let ux_east = ux_west + ny;
        let uy = ux_east + ny;
        let vx = uy + (nx + 1) * (ny + 1);
        let vy = vx + (nx + 1) * (ny + 1);
        let vy_south = vy + nx * ny;
        let vy_north = vy_south + nx;
        let n_f = vy_north + nx;
        Self { nx, ux_west, ux_east, uy, vx, vy, vy_south, vy_north, n_f }
    }

    fn ux_cell(&self, ci: usize, j: usize) -> usize {
        j * self.nx + ci
    }

    fn ux_west(&self, j: usize) -> usize {
        self.ux_west + j
    }

    fn ux_east(&self, j: usize) -> usize {
        self.ux_east + j
    }

    fn uy(&self, fi: usize, gj: usize) -> usize {
        self.uy + gj * (self.nx + 1) + fi
    }

    fn vx(&self, fi: usize, gj: usize) -> usize {
        self.vx + gj * (self.nx + 1) + fi
    }

    fn vy_cell(&self, ci: usize, cj: usize) -> usize {
        self.vy + cj * self.nx + ci
    }

    fn vy_south(&self, ci: usize) -> usize {
        self.vy_south + ci
    }

    fn vy_north(&self, ci: usize) -> usize {
        self.vy_north + ci
    }
}

fn assemble_convection_parts(grid: &StaggeredGrid) -> (Csr, Csr, Csr, Vec<f64>, Vec<f64>) {
    let spec = &grid.spec;
    let (nx, ny) = (grid.nx(), grid.ny());
    let (dx, dy) = (grid.dx(), grid.dy());
    let flux = FluxLayout::new(nx, ny);
    let mut k_trips: Vec<(usize, usize, f64)> = Vec::with_capacity(4 * grid.n_vel());
    let mut i_trips: Vec<(usize, usize, f64)> = Vec::new();
    let mut a_trips: Vec<(usize, usize, f64)> = Vec::new();
    let mut y_i = vec![0.0; flux.n_f];
    let mut y_a = vec![0.0; flux.n_f];

    // K rows: flux differences around each velocity volume.
    for j in 0..ny {
        for slot in 0..grid.nux {
            let fi = grid.u_face_of_slot(slot);
            let r = grid.u_index(slot, j);
            let east = if fi == nx {
                if grid.periodic_x {
                    flux.ux_cell(0, j)
                } else {
                    flux.ux_east(j)
                }
            } else {
                flux.ux_cell(fi, j)
            };
            let west = if fi == 0 { flux.ux_west(j) } else { flux.ux_cell(fi - 1, j) };
            let north = flux.uy(fi, grid.wrap_v_face(j as isize + 1));
            let south = flux.uy(fi, grid.wrap_v_face(j as isize));
            k_trips.push((r, east, 1.0));
            k_trips.push((r, west, -1.0));
            k_trips.push((r, north, 1.0));
            k_trips.push((r, south, -1.0));
        }
    }
    for slot in 0..grid.nvy {
        let gj = grid.v_face_of_slot(slot);
        for ci in 0..nx {
            let r = grid.v_index(ci, slot);
            let north = if gj == ny {
                if grid.periodic_y {
                    flux.vy_cell(ci, 0)
                } else {
                    flux.vy_north(ci)
                }
            } else {
                flux.vy_cell(ci, gj)
            };
            let south = if gj == 0 { flux.vy_south(ci) } else { flux.vy_cell(ci, gj - 1) };
            let east = flux.vx(grid.wrap_u_face(ci as isize + 1), gj);
            let west = flux.vx(grid.wrap_u_face(ci as isize), gj);
            k_trips.push((r, east, 1.0));
            k_trips.push((r, west, -1.0));
            k_trips.push((r, north, 1.0));
            k_trips.push((r, south, -1.0));
        }
    }

    // ux cells: convecting u*dy and convected u from the cell's two faces.
    for j in 0..ny {
        for ci in 0..nx {
            let id = flux.ux_cell(ci, j);
            let sa = grid.u_sample(ci as isize, j as isize);
            let sb = grid.u_sample(ci as isize + 1, j as isize);
            push(&mut i_trips, &mut y_i, id, 0.5 * dy, sa);
            push(&mut i_trips, &mut y_i, id, 0.5 * dy, sb);
            push(&mut a_trips, &mut y_a, id, 0.5, sa);
            push(&mut a_trips, &mut y_a, id, 0.5, sb);
        }
    }
    // ux boundary lines: the boundary face value itself (one-sided).
    for j in 0..ny {
        let s = grid.u_sample(0, j as isize);
        push(&mut i_trips, &mut y_i, flux.ux_west(j), dy, s);
        push(&mut a_trips, &mut y_a, flux.ux_west(j), 1.0, s);
        let s = grid.u_sample(nx as isize, j as isize);
        push(&mut i_trips, &mut y_i, flux.ux_east(j), dy, s);
        push(&mut a_trips, &mut y_a, flux.ux_east(j), 1.0, s);
    }

    let fi_range: Vec<usize> =
        if grid.periodic_x { (1..=nx).collect() } else { (0..=nx).collect() };
    let gj_range: Vec<usize> =
        if grid.periodic_y { (1..=ny).collect() } else { (0..=ny).collect() };

    // uy corners: convecting v*dx (horizontal average), convected u (vertical).
    for &gj in &gj_range {
        for &fi in &fi_range {
            let id = flux.uy(fi, gj);
            // convecting flux
            if !grid.periodic_y && gj == 0 && spec.bc_south.is_wall() {
                y_i[id] += dx * spec.bc_south.velocity_at(grid.x_face(fi), spec.y_min).1;
            } else if !grid.periodic_y && gj == ny && spec.bc_north.is_wall() {
                y_i[id] += dx * spec.bc_north.velocity_at(grid.x_face(fi), spec.y_max).1;
            } else if !grid.periodic_x && fi == 0 {
                if spec.bc_west.is_wall() {
                    y_i[id] += dx * spec.bc_west.velocity_at(spec.x_min, grid.y_face(gj)).1;
                } else {
                    push(&mut i_trips, &mut y_i, id, dx, grid.v_sample(0, gj as isize));
                }
            } else if !grid.periodic_x && fi == nx {
                if spec.bc_east.is_wall() {
                    y_i[id] += dx * spec.bc_east.velocity_at(spec.x_max, grid.y_face(gj)).1;
                } else {
                    push(&mut i_trips, &mut y_i, id, dx, grid.v_sample(nx as isize - 1, gj as isize));
                }
            } else {
                push(&mut i_trips, &mut y_i, id, 0.5 * dx, grid.v_sample(fi as isize - 1, gj as isize));
                push(&mut i_trips, &mut y_i, id, 0.5 * dx, grid.v_sample(fi as isize, gj as isize));
            }
            // convected velocity
            if !grid.periodic_y && gj == 0 {
                if spec.bc_south.is_wall() {
                    y_a[id] += spec.bc_south.velocity_at(grid.x_face(fi), spec.y_min).0;
                } else {
                    push(&mut a_trips, &mut y_a, id, 1.0, grid.u_sample(fi as isize, 0));
                }
            } else if !grid.periodic_y && gj == ny {
                if spec.bc_north.is_wall() {
                    y_a[id] += spec.bc_north.velocity_at(grid.x_face(fi), spec.y_max).0;
                } else {
                    push(&mut a_trips, &mut y_a, id, 1.0, grid.u_sample(fi as isize, ny as isize - 1));
                }
            } else {
                push(&mut a_trips, &mut y_a, id, 0.5, grid.u_sample(fi as isize, gj as isize - 1));
                push(&mut a_trips, &mut y_a, id, 0.5, grid.u_sample(fi as isize, gj as isize));
            }
        }
    }

    // vx corners: convecting u*dy (vertical average), convected v (horizontal).
    for &gj in &gj_range {
        for &fi in &fi_range {
            let id = flux.vx(fi, gj);
            // convecting flux
            if !grid.periodic_x && fi == 0 && spec.bc_west.is_wall() {
                y_i[id] += dy * spec.bc_west.velocity_at(spec.x_min, grid.y_face(gj)).0;
            } else if !grid.periodic_x && fi == nx && spec.bc_east.is_wall() {
                y_i[id] += dy * spec.bc_east.velocity_at(spec.x_max, grid.y_face(gj)).0;
            } else if !grid.periodic_y && gj == 0 {
                if spec.bc_south.is_wall() {
                    y_i[id] += dy * spec.bc_south.velocity_at(grid.x_face(fi), spec.y_min).0;
                } else {
                    push(&mut i_trips, &mut y_i, id, dy, grid.u_sample(fi as isize, 0));
                }
            } else if !grid.periodic_y && gj == ny {
                if spec.bc_north.is_wall() {
                    y_i[id] += dy * spec.bc_north.velocity_at(grid.x_face(fi), spec.y_max).0;
                } else {
                    push(&mut i_trips, &mut y_i, id, dy, grid.u_sample(fi as isize, ny as isize - 1));
                }
            } else {
                push(&mut i_trips, &mut y_i, id, 0.5 * dy, grid.u_sample(fi as isize, gj as isize - 1));
                push(&mut i_trips, &mut y_i, id, 0.5 * dy, grid.u_sample(fi as isize, gj as isize));
            }
            // convected velocity
            if !grid.periodic_x && fi == 0 {
                if spec.bc_west.is_wall() {
                    y_a[id] += spec.bc_west.velocity_at(spec.x_min, grid.y_face(gj)).1;
                } else {
                    push(&mut a_trips, &mut y_a, id, 1.0, grid.v_sample(0, gj as isize));
                }
            } else if !grid.periodic_x && fi == nx {
                if spec.bc_east.is_wall() {
                    y_a[id] += spec.bc_east.velocity_at(spec.x_max, grid.y_face(gj)).1;
                } else {
                    push(&mut a_trips, &mut y_a, id, 1.0, grid.v_sample(nx as isize - 1, gj as isize));
                }
            } else {
                push(&mut a_trips, &mut y_a, id, 0.5, grid.v_sample(fi as isize - 1, gj as isize));
                push(&mut a_trips, &mut y_a, id, 0.5, grid.v_sample(fi as isize, gj as isize));
            }
        }
    }

    // vy cells.
    for cj in 0..ny {
        for ci in 0..nx {
            let id = flux.vy_cell(ci, cj);
            let sa = grid.v_sample(ci as isize, cj as isize);
            let sb = grid.v_sample(ci as isize, cj as isize + 1);
            push(&mut i_trips, &mut y_i, id, 0.5 * dx, sa);
            push(&mut i_trips, &mut y_i, id, 0.5 * dx, sb);
            push(&mut a_trips, &mut y_a, id, 0.5, sa);
            push(&mut a_trips, &mut y_a, id, 0.5, sb);
        }
    }
    // vy boundary lines.
    for ci in 0..nx {
        let s = grid.v_sample(ci as isize, 0);
        push(&mut i_trips, &mut y_i, flux.vy_south(ci), dx, s);
        push(&mut a_trips, &mut y_a, flux.vy_south(ci), 1.0, s);
        let s = grid.v_sample(ci as isize, ny as isize);
        push(&mut i_trips, &mut y_i, flux.vy_north(ci), dx, s);
        push(&mut a_trips, &mut y_a, flux.vy_north(ci), 1.0, s);
    }

    let k = Csr::from_triplets(grid.n_vel(), flux.n_f, k_trips);
    let i_op = Csr::from_triplets(flux.n_f, grid.n_vel(), i_trips);
    let a_op = Csr::from_triplets(flux.n_f, grid.n_vel(), a_trips);
    (k, i_op, a_op, y_i, y_a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Bc, GridSpec};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn periodic(nx: usize, ny: usize, lx: f64, ly: f64) -> GridSpec {
        GridSpec {
            nx,
            ny,
            x_min: 0.0,
            x_max: lx,
            y_min: 0.0,
            y_max: ly,
            bc_west: Bc::Periodic,
            bc_east: Bc::Periodic,
            bc_south: Bc::Periodic,
            bc_north: Bc::Periodic,
        }
    }

    fn cavity(nx: usize, ny: usize) -> GridSpec {
        GridSpec {
            nx,
            ny,
            x_min: 0.0,
            x_max: 1.0,
            y_min: 0.0,
            y_max: 1.0,
            bc_west: Bc::NoSlip,
            bc_east: Bc::NoSlip,
            bc_south: Bc::NoSlip,
            bc_north: Bc::Dirichlet(Arc::new(|_, _| (1.0, 0.0))),
        }
    }

    fn wake(nx: usize, ny: usize, p_inf: f64) -> GridSpec {
        GridSpec {
            nx,
            ny,
            x_min: -4.0,
            x_max: 8.0,
            y_min: -2.0,
            y_max: 2.0,
            bc_west: Bc::Dirichlet(Arc::new(|_, y| {
                (0.75 - 3.0 / 32.0 * (y - 2.0) * (y + 2.0), 0.0)
            })),
            bc_east: Bc::Outflow { p_inf },
            bc_south: Bc::Outflow { p_inf },
            bc_north: Bc::Outflow { p_inf },
        }
    }

    fn random_v(ops: &FomOperators, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..ops.n_vel()).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn divergence_two_by_two_periodic_matches_enumeration() {
        let ops = FomOperators::assemble(periodic(2, 2, 1.0, 1.0), 0.0).unwrap();
        let expected: [(&[usize], &[f64]); 4] = [
            (&[0, 1, 4, 6], &[0.5, -0.5, 0.5, -0.5]),
            (&[0, 1, 5, 7], &[-0.5, 0.5, 0.5, -0.5]),
            (&[2, 3, 4, 6], &[0.5, -0.5, -0.5, 0.5]),
            (&[2, 3, 5, 7], &[-0.5, 0.5, -0.5, 0.5]),
        ];
        for (row, (cols, vals)) in expected.iter().enumerate() {
            let (c, v) = ops.m.row(row);
            assert_eq!(c, *cols, "row {row} columns");
            assert_eq!(v, *vals, "row {row} values");
        }
        assert!(ops.y_m.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn divergence_of_constant_field_is_zero_periodic() {
        let ops = FomOperators::assemble(periodic(5, 4, 2.7, 1.3), 0.0).unwrap();
        let mut v = vec![0.0; ops.n_vel()];
        for x in v[..ops.grid.n_u()].iter_mut() {
            *x = 3.25;
        }
        for x in v[ops.grid.n_u()..].iter_mut() {
            *x = -1.5;
        }
        let div = ops.m.matvec(&v);
        assert!(div.iter().all(|&x| x == 0.0), "constant field must telescope exactly");
    }

    #[test]
    fn west_inflow_flux_enters_y_m() {
        let ops = FomOperators::assemble(wake(12, 8, 0.0), 0.002).unwrap();
        let g = &ops.grid;
        let dy = g.dy();
        for j in 0..8 {
            let y = g.y_center(j);
            let ub = 0.75 - 3.0 / 32.0 * (y - 2.0) * (y + 2.0);
            assert!((ops.y_m[g.p_index(0, j)] - ub * dy).abs() < 1e-14);
            assert_eq!(ops.y_m[g.p_index(5, j)], 0.0);
        }
    }

    #[test]
    fn gradient_is_negated_transpose_bitwise() {
        for spec in [periodic(4, 3, 1.0, 1.0), cavity(5, 5), wake(8, 6, 0.3)] {
            let ops = FomOperators::assemble(spec, 0.1).unwrap();
            for (i, j, v) in ops.m.triplets() {
                assert_eq!(ops.g.get(j, i).to_bits(), (-v).to_bits());
            }
            assert_eq!(ops.g.nnz(), ops.m.nnz());
        }
    }

    #[test]
    fn diffusion_interior_stencil_anisotropic() {
        // dx = 1/2, dy = 1/4: x-coupling dy/dx = 1/2, y-coupling dx/dy = 2.
        let ops = FomOperators::assemble(periodic(4, 4, 2.0, 1.0), 1.0).unwrap();
        let g = &ops.grid;
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-14 * b.abs();
        let r = g.u_index(0, 1); // face 1, row 1
        assert!(close(ops.d.get(r, r), -5.0));
        assert!(close(ops.d.get(r, g.u_index(1, 1)), 0.5)); // face 2
        assert!(close(ops.d.get(r, g.u_index(3, 1)), 0.5)); // face 4 wraps to west neighbor
        assert!(close(ops.d.get(r, g.u_index(0, 0)), 2.0));
        assert!(close(ops.d.get(r, g.u_index(0, 2)), 2.0));
        let rv = g.v_index(2, 1);
        assert!(close(ops.d.get(rv, rv), -5.0));
    }

    #[test]
    fn diffusion_symmetric_negative_and_annihilates_constants() {
        for spec in [periodic(4, 3, 2.0 * std::f64::consts::PI, 1.0), cavity(4, 5), wake(6, 4, 0.0)] {
            let ops = FomOperators::assemble(spec, 1.0).unwrap();
            assert_eq!(ops.d, ops.d.transpose(), "D symmetric bitwise");
            let v = random_v(&ops, 42);
            let vdv = vecops::dot(&v, &ops.d.matvec(&v));
            let qv = ops.q.matvec(&v);
            let q2 = vecops::dot(&qv, &qv);
            assert!((vdv + q2).abs() <= 1e-12 * q2.max(1.0), "x'Dx = -|Qx|^2");
            assert!(vdv <= 0.0);
        }
        let ops = FomOperators::assemble(periodic(6, 5, 3.0, 2.0), 1.0).unwrap();
        let ones = vec![1.0; ops.n_vel()];
        assert!(vecops::norm_inf(&ops.d.matvec(&ones)) <= 1e-13);
    }

    #[test]
    fn lid_velocity_enters_y_d_and_y_a() {
        let ops = FomOperators::assemble(cavity(8, 8), 1e-3).unwrap();
        let g = &ops.grid;
        let scale = 2.0 * g.dx() / g.dy();
        for slot in 0..g.nux {
            let dof = g.u_index(slot, 7);
            assert!((ops.y_d[dof] - scale).abs() < 1e-14, "lid wall term");
            let dof0 = g.u_index(slot, 0);
            assert_eq!(ops.y_d[dof0], 0.0, "no-slip floor contributes zero value");
        }
        // convected u on the lid line equals the lid velocity
        let flux = FluxLayout::new(8, 8);
        for fi in 1..8 {
            assert_eq!(ops.y_a[flux.uy(fi, 8)], 1.0);
        }
        // the affine convection part vanishes: no-penetration kills every
        // referenced known-times-known flux product
        let zero = vec![0.0; ops.n_vel()];
        let c0 = convection(&ops, &zero, &zero);
        assert!(c0.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn outflow_pressure_vector() {
        let ops = FomOperators::assemble(wake(10, 6, 0.0), 0.002).unwrap();
        assert!(ops.y_g.iter().all(|&x| x == 0.0), "p_inf = 0 gives empty y_G");
        let ops = FomOperators::assemble(wake(10, 6, 2.0), 0.002).unwrap();
        let g = &ops.grid;
        let (dx, dy) = (g.dx(), g.dy());
        let se = g.u_slot_of_face(10).unwrap();
        assert_eq!(ops.y_g[g.u_index(se, 3)], 2.0 * dy);
        let ss = g.v_slot_of_face(0).unwrap();
        let sn = g.v_slot_of_face(6).unwrap();
        assert_eq!(ops.y_g[g.v_index(4, ss)], -2.0 * dx);
        assert_eq!(ops.y_g[g.v_index(4, sn)], 2.0 * dx);
        let count = ops.y_g.iter().filter(|&&x| x != 0.0).count();
        assert_eq!(count, 6 + 10 + 10);
    }

    #[test]
    fn convection_of_constant_field_telescopes_exactly() {
        let ops = FomOperators::assemble(periodic(5, 3, 2.0, 3.0), 0.0).unwrap();
        let mut v = vec![0.0; ops.n_vel()];
        for x in v[..ops.grid.n_u()].iter_mut() {
            *x = 2.0;
        }
        for x in v[ops.grid.n_u()..].iter_mut() {
            *x = -0.75;
        }
        let c = convection(&ops, &v, &v);
        assert!(c.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn convection_matrix_matches_bilinear_application() {
        let ops = FomOperators::assemble(periodic(4, 4, 1.0, 1.0), 0.0).unwrap();
        let vc = random_v(&ops, 7);
        let vu = random_v(&ops, 8);
        let ct = convection_matrix(&ops, &vc).unwrap();
        let direct = convection(&ops, &vc, &vu);
        let via_matrix = ct.matvec(&vu);
        for (a, b) in direct.iter().zip(&via_matrix) {
            assert!((a - b).abs() <= 1e-14 * (1.0 + a.abs()));
        }
        // matrix form rejected on in/outflow grids
        let wops = FomOperators::assemble(wake(6, 4, 0.0), 0.002).unwrap();
        let vw = random_v(&wops, 9);
        assert!(convection_matrix(&wops, &vw).is_err());
    }

    #[test]
    fn convection_skew_structure() {
        // Off-diagonal of C~ + C~' cancels exactly; the diagonal equals the
        // average divergence of the two cells flanking each velocity volume.
        let ops = FomOperators::assemble(periodic(4, 3, 1.7, 2.3), 0.0).unwrap();
        let g = &ops.grid;
        let v = random_v(&ops, 11);
        let ct = convection_matrix(&ops, &v).unwrap().to_dense();
        let sym = &ct + &ct.transpose();
        let div = ops.m.matvec(&v);
        let scale = ct.amax();
        for j in 0..g.ny() {
            for slot in 0..g.nux {
                let r = g.u_index(slot, j);
                let fi = g.u_face_of_slot(slot);
                let east_cell = g.p_index(fi % g.nx(), j);
                let west_cell = g.p_index(fi - 1, j);
                let expect = 0.5 * (div[east_cell] + div[west_cell]);
                assert!((sym[(r, r)] - expect).abs() <= 1e-14 * scale.max(1.0));
            }
        }
        for slot in 0..g.nvy {
            for ci in 0..g.nx() {
                let r = g.v_index(ci, slot);
                let gj = g.v_face_of_slot(slot);
                let north_cell = g.p_index(ci, gj % g.ny());
                let south_cell = g.p_index(ci, gj - 1);
                let expect = 0.5 * (div[north_cell] + div[south_cell]);
                assert!((sym[(r, r)] - expect).abs() <= 1e-14 * scale.max(1.0));
            }
        }
        for i in 0..sym.nrows() {
            for j in 0..sym.ncols() {
                if i != j {
                    assert_eq!(sym[(i, j)], 0.0, "off-diagonal telescoping at ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn global_momentum_telescoping_periodic() {
        let ops = FomOperators::assemble(periodic(8, 8, 2.0 * std::f64::consts::PI, 1.9), 0.0).unwrap();
        let v = random_v(&ops, 3);
        let c = convection(&ops, &v, &v);
        let scale: f64 = c.iter().map(|x| x.abs()).sum();
        let su: f64 = c[..ops.grid.n_u()].iter().sum();
        let sv: f64 = c[ops.grid.n_u()..].iter().sum();
        assert!(su.abs() <= 1e-13 * scale.max(1.0));
        assert!(sv.abs() <= 1e-13 * scale.max(1.0));
    }

    #[test]
    fn convection_jacobian_matches_finite_differences() {
        for spec in [periodic(4, 3, 1.0, 1.0), wake(5, 4, 0.0), cavity(4, 4)] {
            let ops = FomOperators::assemble(spec, 0.01).unwrap();
            let v = random_v(&ops, 17);
            let jac = convection_jacobian(&ops, &v).to_dense();
            let n = ops.n_vel();
            let h = 1e-6;
            let mut fd = DMatrix::zeros(n, n);
            for col in 0..n {
                let mut vp = v.clone();
                let mut vm = v.clone();
                vp[col] += h;
                vm[col] -= h;
                let cp = convection(&ops, &vp, &vp);
                let cm = convection(&ops, &vm, &vm);
                for row in 0..n {
                    fd[(row, col)] = (cp[row] - cm[row]) / (2.0 * h);
                }
            }
            let err = (&jac - &fd).amax();
            assert!(err <= 1e-6 * jac.amax().max(1.0), "jacobian FD error {err}");
        }
    }

    #[test]
    fn body_force_actuator_layout() {
        let spec = wake(120, 40, 0.0);
        let grid = StaggeredGrid::new(spec).unwrap();
        let disk = ActuatorDisk { x0: 0.0, y_lo: -0.5, y_hi: 0.5, c_t: 0.5 };
        let f = assemble_body_force(&grid, &disk).unwrap();
        let nz: Vec<f64> = f.spatial.iter().copied().filter(|&x| x != 0.0).collect();
        assert_eq!(nz.len(), 10);
        for x in nz {
            assert!((x - (-0.5 * 0.1)).abs() < 1e-15);
        }
        let total: f64 = f.spatial.iter().sum();
        assert!((total - (-0.5)).abs() < 1e-13);
        assert_eq!(f.time_factor.eval(0.0), 1.0);
        assert!((f.time_factor.eval(0.5) - 2.0).abs() < 1e-15);
        let bad = ActuatorDisk { x0: 100.0, y_lo: -0.5, y_hi: 0.5, c_t: 0.5 };
        assert!(assemble_body_force(&grid, &bad).is_err());
    }

    #[test]
    fn poisson_operator_structure() {
        let ops = FomOperators::assemble(periodic(6, 4, 2.0, 1.0), 0.0).unwrap();
        assert_eq!(ops.l, ops.l.transpose(), "L symmetric bitwise");
        let ones = vec![1.0; ops.n_p()];
        assert!(vecops::norm_inf(&ops.l.matvec(&ones)) <= 1e-13, "L 1 = 0 on periodic grids");
        // columns of M sum to zero exactly when every face touches two cells
        let mt_ones = ops.m.transpose().matvec(&ones);
        assert!(vecops::norm_inf(&mt_ones) == 0.0);
        let wops = FomOperators::assemble(wake(8, 6, 0.0), 0.002).unwrap();
        assert_eq!(wops.l, wops.l.transpose());
    }
}

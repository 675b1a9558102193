//! Staggered cartesian grid: geometry, boundary conditions, unknown layout.
//!
//! Pressure unknowns live at cell centers, u-velocities on vertical faces,
//! v-velocities on horizontal faces. Faces whose normal velocity is
//! prescribed (no-slip or Dirichlet boundaries) are not stored as unknowns;
//! faces on an outflow boundary keep their normal velocity as an unknown.
//! In a periodic direction the two coinciding boundary faces are stored once.
//!
//! Unknown ordering: all u first (row-major, x fastest), then all v, then
//! (separately) pressure cell-major. On a fully periodic grid this reduces to
//! the fixed layout u_{i+1/2,j} -> (j-1)*nx + (i-1), v_{i,j+1/2} ->
//! N_p + (j-1)*nx + (i-1).

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Boundary velocity profile; receives the physical coordinates of a face
/// point and returns (u, v) there.
pub type Profile = Arc<dyn Fn(f64, f64) -> (f64, f64) + Send + Sync>;

#[derive(Clone)]
pub enum Bc {
    Periodic,
    /// Zero velocity wall.
    NoSlip,
    /// Prescribed wall velocity, evaluated once at assembly time.
    Dirichlet(Profile),
    /// Prescribed normal stress -p + nu du/dn = -p_inf with dv_t/dn = 0;
    /// the face-normal velocity stays an unknown.
    Outflow { p_inf: f64 },
}

impl Bc {
    pub fn is_periodic(&self) -> bool {
        matches!(self, Bc::Periodic)
    }

    pub fn is_outflow(&self) -> bool {
        matches!(self, Bc::Outflow { .. })
    }

    pub fn is_wall(&self) -> bool {
        matches!(self, Bc::NoSlip | Bc::Dirichlet(_))
    }

    /// Prescribed velocity at a boundary point. Only meaningful on walls.
    pub fn velocity_at(&self, x: f64, y: f64) -> (f64, f64) {
        match self {
            Bc::NoSlip => (0.0, 0.0),
            Bc::Dirichlet(profile) => profile(x, y),
            Bc::Periodic | Bc::Outflow { .. } => {
                unreachable!("velocity_at called on a non-wall boundary")
            }
        }
    }
}

impl fmt::Debug for Bc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bc::Periodic => write!(f, "Periodic"),
            Bc::NoSlip => write!(f, "NoSlip"),
            Bc::Dirichlet(_) => write!(f, "Dirichlet(<profile>)"),
            Bc::Outflow { p_inf } => write!(f, "Outflow {{ p_inf: {p_inf} }}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    West,
    East,
    South,
    North,
}

#[derive(Debug, Clone)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub bc_west: Bc,
    pub bc_east: Bc,
    pub bc_south: Bc,
    pub bc_north: Bc,
}

impl GridSpec {
    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        (self.y_max - self.y_min) / self.ny as f64
    }

    pub fn bc(&self, side: Side) -> &Bc {
        match side {
            Side::West => &self.bc_west,
            Side::East => &self.bc_east,
            Side::South => &self.bc_south,
            Side::North => &self.bc_north,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 cells per direction, got {}x{}",
                self.nx, self.ny
            )));
        }
        if !(self.x_max - self.x_min > 0.0) || !(self.y_max - self.y_min > 0.0) {
            return Err(Error::InvalidGrid("domain has non-positive measure".into()));
        }
        if self.bc_west.is_periodic() != self.bc_east.is_periodic() {
            return Err(Error::InvalidBc("west/east periodic flags must be paired".into()));
        }
        if self.bc_south.is_periodic() != self.bc_north.is_periodic() {
            return Err(Error::InvalidBc("south/north periodic flags must be paired".into()));
        }
        Ok(())
    }
}

/// A velocity value at a face point: either a stored unknown or a value
/// prescribed by the boundary conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sample {
    Dof(usize),
    Value(f64),
}

/// Validated grid with the derived unknown layout.
#[derive(Debug, Clone)]
pub struct StaggeredGrid {
    pub spec: GridSpec,
    pub periodic_x: bool,
    pub periodic_y: bool,
    u_slot_of_face: Vec<Option<usize>>,
    u_face_of_slot: Vec<usize>,
    v_slot_of_face: Vec<Option<usize>>,
    v_face_of_slot: Vec<usize>,
    /// Stored u faces per row.
    pub nux: usize,
    /// Stored v faces per column.
    pub nvy: usize,
    n_u: usize,
    n_v: usize,
}

impl StaggeredGrid {
    pub fn new(spec: GridSpec) -> Result<Self> {
        spec.validate()?;
        let (nx, ny) = (spec.nx, spec.ny);
        let periodic_x = spec.bc_west.is_periodic();
        let periodic_y = spec.bc_south.is_periodic();

        let mut u_faces: Vec<usize> = Vec::new();
        if periodic_x {
            u_faces.extend(1..=nx);
        } else {
            if spec.bc_west.is_outflow() {
                u_faces.push(0);
            }
            u_faces.extend(1..nx);
            if spec.bc_east.is_outflow() {
                u_faces.push(nx);
            }
        }
        let mut u_slot_of_face = vec![None; nx + 1];
        for (slot, &fi) in u_faces.iter().enumerate() {
            u_slot_of_face[fi] = Some(slot);
        }

        let mut v_faces: Vec<usize> = Vec::new();
        if periodic_y {
            v_faces.extend(1..=ny);
        } else {
            if spec.bc_south.is_outflow() {
                v_faces.push(0);
            }
            v_faces.extend(1..ny);
            if spec.bc_north.is_outflow() {
                v_faces.push(ny);
            }
        }
        let mut v_slot_of_face = vec![None; ny + 1];
        for (slot, &gj) in v_faces.iter().enumerate() {
            v_slot_of_face[gj] = Some(slot);
        }

        let nux = u_faces.len();
        let nvy = v_faces.len();
        Ok(Self {
            periodic_x,
            periodic_y,
            u_slot_of_face,
            u_face_of_slot: u_faces,
            v_slot_of_face,
            v_face_of_slot: v_faces,
            nux,
            nvy,
            n_u: nux * ny,
            n_v: nvy * nx,
            spec,
        })
    }

    pub fn nx(&self) -> usize {
        self.spec.nx
    }

    pub fn ny(&self) -> usize {
        self.spec.ny
    }

    pub fn dx(&self) -> f64 {
        self.spec.dx()
    }

    pub fn dy(&self) -> f64 {
        self.spec.dy()
    }

    /// Number of stored u unknowns.
    pub fn n_u(&self) -> usize {
        self.n_u
    }

    /// Number of stored v unknowns.
    pub fn n_v(&self) -> usize {
        self.n_v
    }

    /// Total velocity unknowns.
    pub fn n_vel(&self) -> usize {
        self.n_u + self.n_v
    }

    /// Pressure unknowns (cells).
    pub fn n_p(&self) -> usize {
        self.spec.nx * self.spec.ny
    }

    pub fn has_outflow(&self) -> bool {
        [Side::West, Side::East, Side::South, Side::North]
            .iter()
            .any(|&s| self.spec.bc(s).is_outflow())
    }

    // Coordinates. Face index fi counts cells to its west (x_face(0) = x_min);
    // line index gj counts cells to its south.
    pub fn x_face(&self, fi: usize) -> f64 {
        self.spec.x_min + fi as f64 * self.dx()
    }

    pub fn y_face(&self, gj: usize) -> f64 {
        self.spec.y_min + gj as f64 * self.dy()
    }

    pub fn x_center(&self, i: usize) -> f64 {
        self.spec.x_min + (i as f64 + 0.5) * self.dx()
    }

    pub fn y_center(&self, j: usize) -> f64 {
        self.spec.y_min + (j as f64 + 0.5) * self.dy()
    }

    pub fn p_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.spec.nx && j < self.spec.ny);
        j * self.spec.nx + i
    }

    pub fn u_index(&self, slot: usize, j: usize) -> usize {
        debug_assert!(slot < self.nux && j < self.spec.ny);
        j * self.nux + slot
    }

    pub fn v_index(&self, ci: usize, slot: usize) -> usize {
        debug_assert!(ci < self.spec.nx && slot < self.nvy);
        self.n_u + slot * self.spec.nx + ci
    }

    pub fn u_face_of_slot(&self, slot: usize) -> usize {
        self.u_face_of_slot[slot]
    }

    pub fn v_face_of_slot(&self, slot: usize) -> usize {
        self.v_face_of_slot[slot]
    }

    pub fn u_slot_of_face(&self, fi: usize) -> Option<usize> {
        self.u_slot_of_face[fi]
    }

    pub fn v_slot_of_face(&self, gj: usize) -> Option<usize> {
        self.v_slot_of_face[gj]
    }

    /// Canonical u-face index with periodic wrap applied.
    pub fn wrap_u_face(&self, fi: isize) -> usize {
        if self.periodic_x {
            ((fi - 1).rem_euclid(self.spec.nx as isize) + 1) as usize
        } else {
            debug_assert!(fi >= 0 && fi <= self.spec.nx as isize);
            fi as usize
        }
    }

    /// Canonical v-face index with periodic wrap applied.
    pub fn wrap_v_face(&self, gj: isize) -> usize {
        if self.periodic_y {
            ((gj - 1).rem_euclid(self.spec.ny as isize) + 1) as usize
        } else {
            debug_assert!(gj >= 0 && gj <= self.spec.ny as isize);
            gj as usize
        }
    }

    pub fn wrap_cell_x(&self, i: isize) -> usize {
        if self.periodic_x {
            i.rem_euclid(self.spec.nx as isize) as usize
        } else {
            debug_assert!(i >= 0 && i < self.spec.nx as isize);
            i as usize
        }
    }

    pub fn wrap_cell_y(&self, j: isize) -> usize {
        if self.periodic_y {
            j.rem_euclid(self.spec.ny as isize) as usize
        } else {
            debug_assert!(j >= 0 && j < self.spec.ny as isize);
            j as usize
        }
    }

    /// u at face column fi, cell row j (periodic wrap applied).
    pub fn u_sample(&self, fi: isize, j: isize) -> Sample {
        let fi = self.wrap_u_face(fi);
        let j = self.wrap_cell_y(j);
        match self.u_slot_of_face[fi] {
            Some(slot) => Sample::Dof(self.u_index(slot, j)),
            None => {
                let bc = if fi == 0 { &self.spec.bc_west } else { &self.spec.bc_east };
                debug_assert!(fi == 0 || fi == self.spec.nx);
                Sample::Value(bc.velocity_at(self.x_face(fi), self.y_center(j)).0)
            }
        }
    }

    /// v at cell column ci, face row gj (periodic wrap applied).
    pub fn v_sample(&self, ci: isize, gj: isize) -> Sample {
        let ci = self.wrap_cell_x(ci);
        let gj = self.wrap_v_face(gj);
        match self.v_slot_of_face[gj] {
            Some(slot) => Sample::Dof(self.v_index(ci, slot)),
            None => {
                let bc = if gj == 0 { &self.spec.bc_south } else { &self.spec.bc_north };
                debug_assert!(gj == 0 || gj == self.spec.ny);
                Sample::Value(bc.velocity_at(self.x_center(ci), self.y_face(gj)).1)
            }
        }
    }
}

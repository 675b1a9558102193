//! Shared helpers for the integration suites: independent dense stencil
//! evaluators for periodic grids (a second implementation of the discrete
//! operators, written over 2-D arrays with explicit wraps) and random
//! admissible states and bases.

#![allow(dead_code)]

use ecrom::grid::{Bc, GridSpec};
use ecrom::operators::FomOperators;
use ecrom::poisson::PoissonSolver;
use ecrom::pod::RomBasis;
use ecrom::vecops;
use nalgebra::DMatrix;
use rand::Rng;

pub fn periodic_spec(nx: usize, ny: usize, lx: f64, ly: f64) -> GridSpec {
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

pub fn periodic_ops(nx: usize, ny: usize, lx: f64, ly: f64, nu: f64) -> FomOperators {
    FomOperators::assemble(periodic_spec(nx, ny, lx, ly), nu).unwrap()
}

/// 2-D views of a packed periodic state: u\[j\]\[s\] is the u unknown in row
/// j at face s+1, v\[t\]\[i\] is the v unknown in column i at face t+1.
pub struct DenseState {
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

pub fn unpack(ops: &FomOperators, w: &[f64]) -> DenseState {
    let grid = &ops.grid;
    assert!(grid.periodic_x && grid.periodic_y);
    let (nx, ny) = (grid.nx(), grid.ny());
    let u = (0..ny).map(|j| (0..nx).map(|s| w[grid.u_index(s, j)]).collect()).collect();
    let v = (0..ny).map(|t| (0..nx).map(|i| w[grid.v_index(i, t)]).collect()).collect();
    DenseState { u, v }
}

/// Divergence of each cell, evaluated directly from the 2-D arrays.
pub fn dense_divergence(ops: &FomOperators, w: &[f64]) -> Vec<f64> {
    let grid = &ops.grid;
    let s = unpack(ops, w);
    let (nx, ny) = (grid.nx(), grid.ny());
    let (dx, dy) = (grid.dx(), grid.dy());
    let mut out = vec![0.0; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let u_e = s.u[j][i];
            let u_w = s.u[j][(i + nx - 1) % nx];
            let v_n = s.v[j][i];
            let v_s = s.v[(j + ny - 1) % ny][i];
            out[j * nx + i] = dy * (u_e - u_w) + dx * (v_n - v_s);
        }
    }
    out
}

/// Convective flux differences for every velocity unknown, evaluated with
/// explicit two-point interpolations at cell centers and corners.
pub fn dense_convection(ops: &FomOperators, w: &[f64]) -> Vec<f64> {
    let grid = &ops.grid;
    let st = unpack(ops, w);
    let (nx, ny) = (grid.nx(), grid.ny());
    let (dx, dy) = (grid.dx(), grid.dy());
    let mut out = vec![0.0; grid.n_vel()];

    // velocity at an arbitrary face index, wrapped
    let u_at = |fi: usize, row: usize| -> f64 {
        st.u[row % ny][(fi + nx - 1) % nx]
    };
    let v_at = |col: usize, gj: usize| -> f64 {
        st.v[(gj + ny - 1) % ny][col % nx]
    };

    // u-momentum cell around face s+1 in row j
    for j in 0..ny {
        for s in 0..nx {
            let fi = s + 1;
            // east/west fluxes live at the centers of cells fi and fi-1
            let f_cell = |cell: usize| -> f64 {
                let west = u_at(cell, j);
                let east = u_at(cell + 1, j);
                0.5 * (west + east) * dy * (0.5 * (west + east))
            };
            // north/south fluxes live at the corners (fi, g)
            let f_corner = |g: usize| -> f64 {
                let conv = 0.5 * (v_at(fi - 1, g) + v_at(fi, g)) * dx;
                let adv = 0.5 * (u_at(fi, g + ny - 1) + u_at(fi, g));
                conv * adv
            };
            out[grid.u_index(s, j)] =
                f_cell(fi) - f_cell(fi - 1) + f_corner(j + 1) - f_corner(j);
        }
    }

    // v-momentum cell around face t+1 in column i
    for t in 0..ny {
        for i in 0..nx {
            let gj = t + 1;
            let f_cell = |cell: usize| -> f64 {
                let south = v_at(i, cell);
                let north = v_at(i, cell + 1);
                0.5 * (south + north) * dx * (0.5 * (south + north))
            };
            let f_corner = |f: usize| -> f64 {
                let conv = 0.5 * (u_at(f, gj + ny - 1) + u_at(f, gj)) * dy;
                let adv = 0.5 * (v_at(f + nx - 1, gj) + v_at(f, gj));
                conv * adv
            };
            out[grid.v_index(i, t)] =
                f_cell(gj) - f_cell(gj - 1) + f_corner(i + 1) - f_corner(i);
        }
    }
    out
}

/// Laplacian flux sums (the 1 -2 1 stencil scaled by face area over
/// distance) for every velocity unknown.
pub fn dense_diffusion(ops: &FomOperators, w: &[f64]) -> Vec<f64> {
    let grid = &ops.grid;
    let s = unpack(ops, w);
    let (nx, ny) = (grid.nx(), grid.ny());
    let (cx, cy) = (grid.dy() / grid.dx(), grid.dx() / grid.dy());
    let mut out = vec![0.0; grid.n_vel()];
    for j in 0..ny {
        for i in 0..nx {
            let u = &s.u;
            out[grid.u_index(i, j)] = cx
                * (u[j][(i + 1) % nx] - 2.0 * u[j][i] + u[j][(i + nx - 1) % nx])
                + cy * (u[(j + 1) % ny][i] - 2.0 * u[j][i] + u[(j + ny - 1) % ny][i]);
            let v = &s.v;
            out[grid.v_index(i, j)] = cx
                * (v[j][(i + 1) % nx] - 2.0 * v[j][i] + v[j][(i + nx - 1) % nx])
                + cy * (v[(j + 1) % ny][i] - 2.0 * v[j][i] + v[(j + ny - 1) % ny][i]);
        }
    }
    out
}

pub fn random_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Remove the discrete divergence of w entirely (target M w = 0, not the
/// boundary flux balance), leaving a homogeneous admissible state.
pub fn project_homogeneous(ops: &FomOperators, solver: &PoissonSolver, w: &mut [f64]) {
    for _ in 0..2 {
        let r = ops.m.matvec(w);
        let q = solver.solve(ops, &r).unwrap();
        let gq = ops.g.matvec(&q);
        for i in 0..w.len() {
            w[i] -= ops.omega_inv[i] * gq[i];
        }
    }
}

/// Twice-iterated modified Gram-Schmidt in the weighted inner product.
pub fn orthonormalize_weighted(weights: &[f64], cols: &mut DMatrix<f64>) {
    let m = cols.ncols();
    for _pass in 0..2 {
        for j in 0..m {
            for k in 0..j {
                let proj = {
                    let cj = cols.column(j);
                    let ck = cols.column(k);
                    vecops::dot_weighted(ck.as_slice(), weights, cj.as_slice())
                };
                let ck = cols.column(k).into_owned();
                cols.column_mut(j).iter_mut().zip(ck.iter()).for_each(|(x, &c)| *x -= proj * c);
            }
            let norm = vecops::norm_weighted(cols.column(j).as_slice(), weights);
            assert!(norm > 1e-8, "random column degenerated");
            cols.column_mut(j).iter_mut().for_each(|x| *x /= norm);
        }
    }
}

/// Random Omega-orthonormal divergence-free velocity basis with a random
/// Omega_p-orthonormal pressure basis, exercising the same code paths as a
/// snapshot basis without needing a solver run.
pub fn random_basis<R: Rng>(
    ops: &FomOperators,
    solver: &PoissonSolver,
    m: usize,
    m_p: usize,
    rng: &mut R,
) -> RomBasis {
    let n = ops.n_vel();
    let mut phi = DMatrix::zeros(n, m);
    for j in 0..m {
        let mut w = random_vec(rng, n);
        project_homogeneous(ops, solver, &mut w);
        phi.column_mut(j).copy_from_slice(&w);
    }
    orthonormalize_weighted(&ops.omega, &mut phi);
    let mut pi = DMatrix::from_fn(ops.n_p(), m_p, |_, _| rng.gen_range(-1.0..1.0));
    orthonormalize_weighted(&ops.omega_p, &mut pi);
    RomBasis { phi, pi, sigma: vec![1.0; m], n_constraint: 0 }
}

//! Petrov-Galerkin localized orthogonal decomposition.

mod corrector;
mod interp;
mod surrogate;

pub use corrector::{solve_correctors, solve_correctors_with_loads, CorrectorSet, PatchRegion};
pub use interp::{prolong_coarse, Interpolator};
pub use surrogate::{assemble_global, compute_local_surrogates, local_surrogate, LocalSurrogate};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{assemble_load, stiffness_from_cells, Source, SparseMatrix, CORNER_OFFSETS, Q1_MASS};
use crate::grid::{CoarseGrid, FineGrid, CORNERS};
use crate::linalg::dense_solve;
use crate::randfield::FieldRealization;

/// Smallest coefficient value accepted by the corrector solver.
pub const MIN_COEFFICIENT: f64 = 1e-14;

/// Cellwise coefficient on the corrector mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct Coefficient {
    grid: FineGrid,
    values: Vec<f64>,
}

impl Coefficient {
    pub fn new(grid: FineGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_cells() {
            return Err(Error::Shape(format!(
                "{} coefficient values for {} cells",
                values.len(),
                grid.num_cells()
            )));
        }
        if let Some((cell, &value)) = values.iter().enumerate().find(|(_, v)| !(**v >= MIN_COEFFICIENT)) {
            return Err(Error::NonPositiveCoefficient { cell, value });
        }
        Ok(Self { grid, values })
    }

    /// Prolongs a (possibly coarser) realization to `grid`.
    pub fn from_field(field: &FieldRealization, grid: FineGrid) -> Result<Self> {
        let values = field.grid().prolong_cells(field.values(), &grid)?;
        Self::new(grid, values)
    }

    pub fn constant(grid: FineGrid, value: f64) -> Result<Self> {
        Self::new(grid, vec![value; grid.num_cells()])
    }

    pub fn grid(&self) -> FineGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|v| v * s).collect())
    }

    /// Global fine stiffness over interior nodes.
    pub fn stiffness(&self) -> SparseMatrix {
        stiffness_from_cells(&self.grid, &self.values)
    }
}

/// Q1 coarse load `int f L_i` for a source given on the cells of `fine`.
pub fn coarse_load(fine: &FineGrid, f: &Source) -> Result<Vec<f64>> {
    let b = fine.expand_interior(&assemble_load(fine, f)?);
    let coarse = fine.parent();
    let r = fine.ratio();
    let rf = r as f64;
    let mut out = vec![0.0; coarse.num_interior_nodes()];
    for (k, o) in out.iter_mut().enumerate() {
        let [zx, zy] = coarse.interior_node_coords(k);
        for y in (zy - 1) * r + 1..(zy + 1) * r {
            let wy = 1.0 - (y as f64 / rf - zy as f64).abs();
            for x in (zx - 1) * r + 1..(zx + 1) * r {
                let wx = 1.0 - (x as f64 / rf - zx as f64).abs();
                *o += wx * wy * b[fine.node_index(x, y)];
            }
        }
    }
    Ok(out)
}

/// Solves `S u = b` for the coarse interior nodal values.
pub fn solve_pglod(s: &SparseMatrix, load: &[f64], tol: f64) -> Result<Vec<f64>> {
    dense_solve(&s.to_dense(), load, tol)
}

/// Coarse Q1 mass matrix over interior nodes.
pub fn coarse_mass_matrix(grid: &CoarseGrid) -> SparseMatrix {
    let n = grid.cells_per_axis();
    let h2 = grid.mesh_size() * grid.mesh_size();
    let mut triplets = Vec::with_capacity(16 * n * n);
    for cy in 0..n {
        for cx in 0..n {
            let dofs = CORNER_OFFSETS.map(|[ox, oy]| grid.interior_node((cx + ox) as isize, (cy + oy) as isize));
            for (p, dp) in dofs.iter().enumerate() {
                for (q, dq) in dofs.iter().enumerate() {
                    if let (Some(i), Some(j)) = (dp, dq) {
                        triplets.push((*i, *j, h2 * Q1_MASS[p][q]));
                    }
                }
            }
        }
    }
    let m = grid.num_interior_nodes();
    SparseMatrix::from_triplets(m, m, &triplets).expect("indices in range")
}

/// `L2(D)` norm of the coarse Q1 function with interior nodal values `v`.
pub fn coarse_l2_norm(grid: &CoarseGrid, v: &[f64]) -> f64 {
    let m = coarse_mass_matrix(grid);
    let mv = m.matvec(v);
    mv.iter().zip(v).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
}

/// One row of a corrector decay table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub ell: usize,
    /// Energy norm of the difference to the full-domain correctors, summed
    /// in quadrature over the four corners.
    pub error: f64,
    /// Same quantity relative to the full-domain correctors.
    pub relative: f64,
}

/// Smallest order whose patch around `t` covers the whole domain.
pub fn covering_order(grid: &CoarseGrid, t: usize) -> usize {
    let [tx, ty] = grid.element_coords(t);
    let n = grid.cells_per_axis() - 1;
    tx.max(ty).max(n - tx).max(n - ty).max(1)
}

/// Patch-truncation error of the correctors of element `t` for
/// `ell = 1..=covering_order`; the last row is exactly zero.
pub fn corrector_decay(interp: &Interpolator, coef: &Coefficient, t: usize) -> Result<Vec<DecayRow>> {
    let coarse = interp.coarse();
    let full_ell = covering_order(&coarse, t);
    let fine = interp.fine();
    let k = coef.stiffness();
    let energy = |v: &[f64]| {
        let v = fine.restrict_interior(v);
        k.matvec(&v).iter().zip(&v).map(|(a, b)| a * b).sum::<f64>().max(0.0)
    };
    let full = solve_correctors(&coarse.patch(t, full_ell)?, interp, coef)?;
    let full_vecs: Vec<Vec<f64>> = (0..CORNERS).map(|j| full.to_global(j)).collect();
    let full_norm: f64 = full_vecs.iter().map(|v| energy(v)).sum::<f64>().sqrt();
    let mut rows = Vec::with_capacity(full_ell);
    for ell in 1..=full_ell {
        let c = solve_correctors(&coarse.patch(t, ell)?, interp, coef)?;
        let err: f64 = (0..CORNERS)
            .map(|j| {
                let d: Vec<f64> = c.to_global(j).iter().zip(&full_vecs[j]).map(|(a, b)| a - b).collect();
                energy(&d)
            })
            .sum::<f64>()
            .sqrt();
        rows.push(DecayRow {
            ell,
            error: err,
            relative: if full_norm > 0.0 { err / full_norm } else { 0.0 },
        });
    }
    Ok(rows)
}

/// Direct PG-LOD matrix `a((id - Q) L_j, L_i)` from globally summed
/// correctors, bypassing the local matrices. Intended for small grids.
pub fn direct_global_matrix(interp: &Interpolator, coef: &Coefficient, ell: usize) -> Result<DMatrix<f64>> {
    let coarse = interp.coarse();
    let fine = interp.fine();
    let m = coarse.num_interior_nodes();
    let nodes = fine.num_nodes();
    let mut q = vec![vec![0.0; nodes]; m];
    for t in 0..coarse.num_elements() {
        let corr = solve_correctors(&coarse.patch(t, ell)?, interp, coef)?;
        let [tx, ty] = coarse.element_coords(t);
        for (j, [ox, oy]) in CORNER_OFFSETS.iter().enumerate() {
            if let Some(z) = coarse.interior_node((tx + ox) as isize, (ty + oy) as isize) {
                for (a, b) in q[z].iter_mut().zip(corr.to_global(j)) {
                    *a += b;
                }
            }
        }
    }
    let k = coef.stiffness();
    let hats: Vec<Vec<f64>> = (0..m)
        .map(|z| {
            let mut e = vec![0.0; m];
            e[z] = 1.0;
            fine.restrict_interior(&prolong_coarse(&coarse, &fine, &e))
        })
        .collect();
    let mut s = DMatrix::zeros(m, m);
    for j in 0..m {
        let trial: Vec<f64> = hats[j]
            .iter()
            .zip(fine.restrict_interior(&q[j]))
            .map(|(a, b)| a - b)
            .collect();
        let kt = k.matvec(&trial);
        for i in 0..m {
            s[(i, j)] = hats[i].iter().zip(&kt).map(|(a, b)| a * b).sum();
        }
    }
    Ok(s)
}

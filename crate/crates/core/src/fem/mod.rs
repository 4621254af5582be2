//! Q1 finite elements on the fine grid with homogeneous Dirichlet data.

mod sparse;

use std::path::Path;

pub use sparse::SparseMatrix;

use crate::error::{Error, Result};
use crate::grid::FineGrid;
use crate::io;
use crate::randfield::FieldRealization;

/// Q1 stiffness on a square for unit coefficient; corners ordered
/// `(0,0), (1,0), (0,1), (1,1)`. Independent of the cell size in 2D.
pub const Q1_STIFFNESS: [[f64; 4]; 4] = [
    [4.0 / 6.0, -1.0 / 6.0, -1.0 / 6.0, -2.0 / 6.0],
    [-1.0 / 6.0, 4.0 / 6.0, -2.0 / 6.0, -1.0 / 6.0],
    [-1.0 / 6.0, -2.0 / 6.0, 4.0 / 6.0, -1.0 / 6.0],
    [-2.0 / 6.0, -1.0 / 6.0, -1.0 / 6.0, 4.0 / 6.0],
];

/// Q1 mass on the unit square, same corner order; scale by `h^2`.
pub const Q1_MASS: [[f64; 4]; 4] = [
    [4.0 / 36.0, 2.0 / 36.0, 2.0 / 36.0, 1.0 / 36.0],
    [2.0 / 36.0, 4.0 / 36.0, 1.0 / 36.0, 2.0 / 36.0],
    [2.0 / 36.0, 1.0 / 36.0, 4.0 / 36.0, 2.0 / 36.0],
    [1.0 / 36.0, 2.0 / 36.0, 2.0 / 36.0, 4.0 / 36.0],
];

/// Corner offsets matching [`Q1_STIFFNESS`].
pub const CORNER_OFFSETS: [[usize; 2]; 4] = [[0, 0], [1, 0], [0, 1], [1, 1]];

/// Cellwise coefficient on `grid`, prolonged from a coarser coefficient mesh
/// when needed, and checked for positivity.
pub fn coefficient_on(grid: &FineGrid, a: &FieldRealization) -> Result<Vec<f64>> {
    let values = a.grid().prolong_cells(a.values(), grid)?;
    if let Some((cell, &value)) = values.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NonPositiveCoefficient { cell, value });
    }
    Ok(values)
}

/// Stiffness matrix over the interior nodes of `grid`.
pub fn assemble_stiffness(grid: &FineGrid, a: &FieldRealization) -> Result<SparseMatrix> {
    let coef = coefficient_on(grid, a)?;
    Ok(stiffness_from_cells(grid, &coef))
}

pub(crate) fn stiffness_from_cells(grid: &FineGrid, coef: &[f64]) -> SparseMatrix {
    let n = grid.cells_per_axis();
    let mut triplets = Vec::with_capacity(16 * n * n);
    for cy in 0..n {
        for cx in 0..n {
            let a = coef[grid.cell_index(cx, cy)];
            let dofs = CORNER_OFFSETS.map(|[ox, oy]| grid.interior_node(cx + ox, cy + oy));
            for (p, dp) in dofs.iter().enumerate() {
                let Some(i) = *dp else { continue };
                for (q, dq) in dofs.iter().enumerate() {
                    if let Some(j) = *dq {
                        triplets.push((i, j, a * Q1_STIFFNESS[p][q]));
                    }
                }
            }
        }
    }
    let m = grid.num_interior_nodes();
    SparseMatrix::from_triplets(m, m, &triplets).expect("indices in range")
}

/// Q1 mass matrix over all nodes of `grid` (boundary included).
pub fn assemble_mass(grid: &FineGrid) -> SparseMatrix {
    let n = grid.cells_per_axis();
    let h2 = grid.mesh_size() * grid.mesh_size();
    let mut triplets = Vec::with_capacity(16 * n * n);
    for cy in 0..n {
        for cx in 0..n {
            let dofs = CORNER_OFFSETS.map(|[ox, oy]| grid.node_index(cx + ox, cy + oy));
            for (p, &i) in dofs.iter().enumerate() {
                for (q, &j) in dofs.iter().enumerate() {
                    triplets.push((i, j, h2 * Q1_MASS[p][q]));
                }
            }
        }
    }
    let m = grid.num_nodes();
    SparseMatrix::from_triplets(m, m, &triplets).expect("indices in range")
}

/// `L2(D)` norm of the Q1 function with nodal values `v` on all nodes.
pub fn l2_norm(grid: &FineGrid, v: &[f64]) -> f64 {
    let mv = assemble_mass(grid).matvec(v);
    mv.iter().zip(v).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
}

/// Right-hand side: constant or one value per fine cell.
#[derive(Clone, Debug, PartialEq)]
pub enum Source {
    Constant(f64),
    Cellwise(Vec<f64>),
}

impl Source {
    pub(crate) fn cell_value(&self, k: usize) -> f64 {
        match self {
            Source::Constant(c) => *c,
            Source::Cellwise(v) => v[k],
        }
    }
}

/// Exact Q1 load vector over interior nodes for a cellwise-constant source.
pub fn assemble_load(grid: &FineGrid, f: &Source) -> Result<Vec<f64>> {
    if let Source::Cellwise(v) = f {
        if v.len() != grid.num_cells() {
            return Err(Error::Shape(format!("{} source values for {} cells", v.len(), grid.num_cells())));
        }
    }
    let n = grid.cells_per_axis();
    let quarter = 0.25 * grid.mesh_size() * grid.mesh_size();
    let mut b = vec![0.0; grid.num_interior_nodes()];
    for cy in 0..n {
        for cx in 0..n {
            let fv = f.cell_value(grid.cell_index(cx, cy)) * quarter;
            for [ox, oy] in CORNER_OFFSETS {
                if let Some(i) = grid.interior_node(cx + ox, cy + oy) {
                    b[i] += fv;
                }
            }
        }
    }
    Ok(b)
}

/// Jacobi-preconditioned conjugate gradients to relative residual `tol`.
pub fn solve_pcg(k: &SparseMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = b.len();
    if k.nrows() != n || k.ncols() != n {
        return Err(Error::Shape(format!("{}x{} matrix, rhs {}", k.nrows(), k.ncols(), n)));
    }
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let inv_diag: Vec<f64> = k
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut q = vec![0.0; n];
    let mut res = 1.0;
    let mut restart = false;
    for it in 0..max_iter {
        k.matvec_into(&p, &mut q);
        let pq: f64 = p.iter().zip(&q).map(|(a, b)| a * b).sum();
        if !(pq > 0.0) {
            return Err(Error::Singular(format!("matrix not positive definite (iteration {it})")));
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        res = r.iter().map(|v| v * v).sum::<f64>().sqrt() / bnorm;
        if res <= tol {
            // confirm against the true residual, recurrences drift
            let kx = k.matvec(&x);
            let true_res = kx.iter().zip(b).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt() / bnorm;
            if true_res <= tol {
                return Ok(x);
            }
            r = b.iter().zip(&kx).map(|(c, a)| c - a).collect();
            res = true_res;
            restart = true;
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = if restart { 0.0 } else { rz_new / rz };
        restart = false;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        residual: res,
    })
}

/// Nodal values on all fine nodes, zero on the boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct FemSolution {
    grid: FineGrid,
    values: Vec<f64>,
}

impl FemSolution {
    pub fn from_interior(grid: FineGrid, interior: &[f64]) -> Self {
        Self {
            grid,
            values: grid.expand_interior(interior),
        }
    }

    pub fn grid(&self) -> FineGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn interior_values(&self) -> Vec<f64> {
        self.grid.restrict_interior(&self.values)
    }

    /// Bilinear evaluation at a point of the closed unit square.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let n = self.grid.cells_per_axis();
        let nf = n as f64;
        let (sx, sy) = ((x * nf).clamp(0.0, nf), (y * nf).clamp(0.0, nf));
        let (cx, cy) = ((sx.floor() as usize).min(n - 1), (sy.floor() as usize).min(n - 1));
        let (tx, ty) = (sx - cx as f64, sy - cy as f64);
        let v = |i, j| self.values[self.grid.node_index(i, j)];
        (1.0 - tx) * (1.0 - ty) * v(cx, cy)
            + tx * (1.0 - ty) * v(cx + 1, cy)
            + (1.0 - tx) * ty * v(cx, cy + 1)
            + tx * ty * v(cx + 1, cy + 1)
    }

    /// Values at the interior nodes of the coarse parent grid (nodal
    /// restriction, not projection).
    pub fn coarse_nodal(&self) -> Vec<f64> {
        let coarse = self.grid.parent();
        let r = self.grid.ratio();
        (0..coarse.num_interior_nodes())
            .map(|k| {
                let [ix, iy] = coarse.interior_node_coords(k);
                self.values[self.grid.node_index(ix * r, iy * r)]
            })
            .collect()
    }

    pub fn save(&self, stem: &Path, meta: serde_json::Value) -> Result<()> {
        io::write_f64_le(&stem.with_extension("bin"), &self.values)?;
        io::write_json(
            &stem.with_extension("json"),
            &serde_json::json!({
                "coarse_cells": self.grid.parent().cells_per_axis(),
                "ratio": self.grid.ratio(),
                "nodes_per_axis": self.grid.nodes_per_axis(),
                "kind": "nodal",
                "meta": meta,
            }),
        )
    }
}

pub const DEFAULT_TOL: f64 = 1e-10;

/// Solves `K x = b` over interior nodes.
pub fn solve_dirichlet(grid: FineGrid, k: &SparseMatrix, b: &[f64], tol: f64) -> Result<FemSolution> {
    let cap = 20 * grid.cells_per_axis() * grid.cells_per_axis().max(50);
    let x = solve_pcg(k, b, tol, cap)?;
    Ok(FemSolution::from_interior(grid, &x))
}

/// Assemble and solve the fine problem for coefficient `a` and source `f`.
pub fn solve_fem(grid: FineGrid, a: &FieldRealization, f: &Source, tol: f64) -> Result<FemSolution> {
    let k = assemble_stiffness(&grid, a)?;
    let b = assemble_load(&grid, f)?;
    solve_dirichlet(grid, &k, &b, tol)
}

//! Element corrector problems on physical patches.
//!
//! For an element `T` and each of its four coarse basis functions `L_j`, the
//! corrector `phi_j` lives on the fine nodes strictly inside the patch
//! `N^ell(T) ∩ D` and solves the saddle-point system
//!
//! ```text
//! K phi + C^T mu = F_j        F_j(w) = int_T A grad L_j . grad w
//! C phi          = 0
//! ```
//!
//! where `C` collects the rows of `I_H` for every coarse node of the closed
//! patch that is interior to the domain, so `I_H phi = 0` holds globally.
//! The system is solved by block elimination with a banded Cholesky factor
//! of `K` and a dense Cholesky factor of the Schur complement.

use nalgebra::{DMatrix, DVector};

use super::interp::Interpolator;
use super::Coefficient;
use crate::error::{Error, Result};
use crate::fem::{CORNER_OFFSETS, Q1_STIFFNESS};
use crate::grid::{FineGrid, PatchIndex, CORNERS};
use crate::linalg::{BandCholesky, BandMatrix};

/// Fine-node box of a physical patch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchRegion {
    /// Fine node coordinates of the lower-left corner.
    pub lo: [usize; 2],
    /// Fine cells per axis.
    pub cells: [usize; 2],
}

impl PatchRegion {
    pub fn of(patch: &PatchIndex, fine: &FineGrid) -> Self {
        let r = fine.ratio();
        let (lo, hi) = patch.inside_cell_range();
        Self {
            lo: [lo[0] * r, lo[1] * r],
            cells: [(hi[0] + 1 - lo[0]) * r, (hi[1] + 1 - lo[1]) * r],
        }
    }

    pub fn free_per_axis(&self) -> [usize; 2] {
        [self.cells[0] - 1, self.cells[1] - 1]
    }

    pub fn num_free(&self) -> usize {
        let [a, b] = self.free_per_axis();
        a * b
    }

    pub fn nodes_per_axis(&self) -> [usize; 2] {
        [self.cells[0] + 1, self.cells[1] + 1]
    }

    pub fn num_nodes(&self) -> usize {
        let [a, b] = self.nodes_per_axis();
        a * b
    }

    /// Free index of global fine node `(x, y)`, if strictly inside.
    #[inline]
    pub fn free_index(&self, x: usize, y: usize) -> Option<usize> {
        let (i, j) = (x.checked_sub(self.lo[0] + 1)?, y.checked_sub(self.lo[1] + 1)?);
        let [fx, fy] = self.free_per_axis();
        (i < fx && j < fy).then_some(i + fx * j)
    }

    /// Local (all-node) index of global fine node `(x, y)`.
    #[inline]
    pub fn node_index(&self, x: usize, y: usize) -> Option<usize> {
        let (i, j) = (x.checked_sub(self.lo[0])?, y.checked_sub(self.lo[1])?);
        let [nx, ny] = self.nodes_per_axis();
        (i < nx && j < ny).then_some(i + nx * j)
    }
}

/// Correctors of the four coarse basis functions of one element.
#[derive(Clone, Debug)]
pub struct CorrectorSet {
    pub(crate) patch: PatchIndex,
    pub(crate) fine: FineGrid,
    pub(crate) region: PatchRegion,
    /// Values on the free nodes of `region`, one vector per corner of `T`.
    pub(crate) correctors: Vec<Vec<f64>>,
}

impl CorrectorSet {
    pub fn patch(&self) -> &PatchIndex {
        &self.patch
    }

    pub fn region(&self) -> PatchRegion {
        self.region
    }

    pub fn free_values(&self, corner: usize) -> &[f64] {
        &self.correctors[corner]
    }

    /// Corrector `corner` extended by zero to all nodes of the fine grid.
    pub fn to_global(&self, corner: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.fine.num_nodes()];
        let [fx, fy] = self.region.free_per_axis();
        let v = &self.correctors[corner];
        for j in 0..fy {
            for i in 0..fx {
                let (x, y) = (self.region.lo[0] + 1 + i, self.region.lo[1] + 1 + j);
                out[self.fine.node_index(x, y)] = v[i + fx * j];
            }
        }
        out
    }

    /// Corrector `corner` on all nodes of the patch region (zero on its boundary).
    pub(crate) fn to_region(&self, corner: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.region.num_nodes()];
        let [fx, fy] = self.region.free_per_axis();
        let [nx, _] = self.region.nodes_per_axis();
        let v = &self.correctors[corner];
        for j in 0..fy {
            for i in 0..fx {
                out[(i + 1) + nx * (j + 1)] = v[i + fx * j];
            }
        }
        out
    }
}

/// Value of the coarse hat of corner `c` of element `(tx, ty)` at fine node
/// `(x, y)` of that element.
#[inline]
pub(crate) fn element_hat(r: usize, t: [usize; 2], c: usize, x: usize, y: usize) -> f64 {
    let rf = r as f64;
    let s = (x - t[0] * r) as f64 / rf;
    let u = (y - t[1] * r) as f64 / rf;
    let [cx, cy] = CORNER_OFFSETS[c];
    (if cx == 1 { s } else { 1.0 - s }) * (if cy == 1 { u } else { 1.0 - u })
}

/// Patch stiffness, constraint rows and their factorizations.
struct PatchSystem {
    region: PatchRegion,
    chol: BandCholesky,
    /// Sparse constraint rows over free indices.
    constraints: Vec<Vec<(usize, f64)>>,
    /// `K^-1 C^T`, one column per constraint.
    kinv_ct: Vec<Vec<f64>>,
    schur: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl PatchSystem {
    fn new(patch: &PatchIndex, interp: &Interpolator, coef: &Coefficient) -> Result<Self> {
        let fine = interp.fine();
        let coarse = interp.coarse();
        let region = PatchRegion::of(patch, &fine);
        let [fx, _] = region.free_per_axis();
        let mut k = BandMatrix::zeros(region.num_free(), fx + 1);
        let vals = coef.values();
        for cy in region.lo[1]..region.lo[1] + region.cells[1] {
            for cx in region.lo[0]..region.lo[0] + region.cells[0] {
                let a = vals[fine.cell_index(cx, cy)];
                let dofs = CORNER_OFFSETS.map(|[ox, oy]| region.free_index(cx + ox, cy + oy));
                for (p, dp) in dofs.iter().enumerate() {
                    let Some(i) = *dp else { continue };
                    for (q, dq) in dofs.iter().enumerate() {
                        match *dq {
                            Some(j) if j <= i => k.add_lower(i, j, a * Q1_STIFFNESS[p][q]),
                            _ => {}
                        }
                    }
                }
            }
        }
        let chol = k.cholesky()?;

        let (clo, chi) = patch.inside_cell_range();
        let nn = fine.nodes_per_axis();
        let mut constraints = Vec::new();
        for zy in clo[1]..=chi[1] + 1 {
            for zx in clo[0]..=chi[0] + 1 {
                let Some(z) = coarse.interior_node(zx as isize, zy as isize) else {
                    continue;
                };
                let row: Vec<(usize, f64)> = interp
                    .matrix()
                    .row(z)
                    .filter_map(|(g, w)| region.free_index(g % nn, g / nn).map(|i| (i, w)))
                    .collect();
                constraints.push(row);
            }
        }
        let nc = constraints.len();
        let mut kinv_ct = Vec::with_capacity(nc);
        for row in &constraints {
            let mut col = vec![0.0; region.num_free()];
            for &(i, w) in row {
                col[i] = w;
            }
            chol.solve_in_place(&mut col);
            kinv_ct.push(col);
        }
        let s = DMatrix::from_fn(nc, nc, |a, b| constraints[a].iter().map(|&(i, w)| w * kinv_ct[b][i]).sum());
        // symmetrize round-off before factoring
        let s = (&s + s.transpose()) * 0.5;
        let schur = s.cholesky().ok_or_else(|| {
            Error::Singular(format!(
                "constraint Schur complement of patch around element {} is not positive definite",
                patch.center()
            ))
        })?;
        Ok(Self {
            region,
            chol,
            constraints,
            kinv_ct,
            schur,
        })
    }

    /// Solves the constrained problem for one load vector over free nodes.
    fn solve(&self, load: &[f64]) -> Vec<f64> {
        let x0 = self.chol.solve(load);
        let cx = DVector::from_iterator(
            self.constraints.len(),
            self.constraints.iter().map(|row| row.iter().map(|&(i, w)| w * x0[i]).sum::<f64>()),
        );
        let mu = self.schur.solve(&cx);
        let mut x = x0;
        for (col, m) in self.kinv_ct.iter().zip(mu.iter()) {
            for (xi, ci) in x.iter_mut().zip(col) {
                *xi -= m * ci;
            }
        }
        x
    }
}

/// Loads `F_j(w) = int_T A grad L_j . grad w` over the free patch nodes.
fn element_loads(patch: &PatchIndex, fine: &FineGrid, region: &PatchRegion, coef: &Coefficient) -> Vec<Vec<f64>> {
    let r = fine.ratio();
    let t = patch.center_coords();
    let vals = coef.values();
    let mut loads = vec![vec![0.0; region.num_free()]; CORNERS];
    for cy in t[1] * r..(t[1] + 1) * r {
        for cx in t[0] * r..(t[0] + 1) * r {
            let a = vals[fine.cell_index(cx, cy)];
            let dofs = CORNER_OFFSETS.map(|[ox, oy]| region.free_index(cx + ox, cy + oy));
            for (j, load) in loads.iter_mut().enumerate() {
                let lam = CORNER_OFFSETS.map(|[ox, oy]| element_hat(r, t, j, cx + ox, cy + oy));
                for (p, dp) in dofs.iter().enumerate() {
                    if let Some(i) = *dp {
                        let s: f64 = (0..4).map(|q| Q1_STIFFNESS[p][q] * lam[q]).sum();
                        load[i] += a * s;
                    }
                }
            }
        }
    }
    loads
}

/// Solves the four element corrector problems of `patch`.
pub fn solve_correctors(patch: &PatchIndex, interp: &Interpolator, coef: &Coefficient) -> Result<CorrectorSet> {
    check_inputs(patch, interp, coef)?;
    let fine = interp.fine();
    let system = PatchSystem::new(patch, interp, coef)?;
    let loads = element_loads(patch, &fine, &system.region, coef);
    let correctors = loads.iter().map(|l| system.solve(l)).collect();
    Ok(CorrectorSet {
        patch: patch.clone(),
        fine,
        region: system.region,
        correctors,
    })
}

/// Same system with caller-supplied loads over the free patch nodes.
pub fn solve_correctors_with_loads(
    patch: &PatchIndex,
    interp: &Interpolator,
    coef: &Coefficient,
    loads: &[Vec<f64>],
) -> Result<CorrectorSet> {
    check_inputs(patch, interp, coef)?;
    let system = PatchSystem::new(patch, interp, coef)?;
    if loads.len() != CORNERS || loads.iter().any(|l| l.len() != system.region.num_free()) {
        return Err(Error::Shape("loads must be 4 vectors over the free patch nodes".into()));
    }
    let correctors = loads.iter().map(|l| system.solve(l)).collect();
    Ok(CorrectorSet {
        patch: patch.clone(),
        fine: interp.fine(),
        region: system.region,
        correctors,
    })
}

fn check_inputs(patch: &PatchIndex, interp: &Interpolator, coef: &Coefficient) -> Result<()> {
    if patch.grid() != interp.coarse() {
        return Err(Error::InvalidGrid("patch and interpolator use different coarse grids".into()));
    }
    if coef.grid() != interp.fine() {
        return Err(Error::InvalidGrid("coefficient does not live on the corrector mesh".into()));
    }
    Ok(())
}

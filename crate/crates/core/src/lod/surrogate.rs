//! Local PG-LOD matrices `S_{A,T}` and their global assembly.

use rayon::prelude::*;

use super::corrector::{element_hat, solve_correctors, CorrectorSet, PatchRegion};
use super::interp::Interpolator;
use super::Coefficient;
use crate::error::{Error, Result};
use crate::fem::{SparseMatrix, CORNER_OFFSETS, Q1_STIFFNESS};
use crate::grid::{local_to_global, CoarseGrid, PatchIndex, CORNERS};

/// The `N^ell_H x 4` local matrix of one element, stored column-major.
///
/// Rows are the padded node slots of the patch, columns the corners of the
/// center element. Rows of slots outside the closed domain are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalSurrogate {
    patch: PatchIndex,
    vec: Vec<f64>,
}

impl LocalSurrogate {
    pub fn zeros(patch: PatchIndex) -> Self {
        let len = patch.num_node_slots() * CORNERS;
        Self { patch, vec: vec![0.0; len] }
    }

    /// Builds from a flattened vector, zeroing the virtual rows.
    pub fn from_vec(patch: PatchIndex, mut vec: Vec<f64>) -> Result<Self> {
        let rows = patch.num_node_slots();
        if vec.len() != rows * CORNERS {
            return Err(Error::Shape(format!(
                "local surrogate needs {} entries, got {}",
                rows * CORNERS,
                vec.len()
            )));
        }
        for (s, inside) in patch.node_inside().iter().enumerate() {
            if !inside {
                for j in 0..CORNERS {
                    vec[s + rows * j] = 0.0;
                }
            }
        }
        Ok(Self { patch, vec })
    }

    pub fn patch(&self) -> &PatchIndex {
        &self.patch
    }

    pub fn rows(&self) -> usize {
        self.patch.num_node_slots()
    }

    pub fn cols(&self) -> usize {
        CORNERS
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.vec[i + self.rows() * j]
    }

    /// Column-major flattening.
    pub fn vec(&self) -> &[f64] {
        &self.vec
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.vec
    }

    pub fn scaled_norm(&self) -> f64 {
        self.vec.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Entry `(i, j)` is `int A grad(L_j|_T - Q_T L_j) . grad L_i` over the patch.
pub fn local_surrogate(correctors: &CorrectorSet, coef: &Coefficient) -> Result<LocalSurrogate> {
    let fine = correctors.fine;
    if coef.grid() != fine {
        return Err(Error::InvalidGrid("coefficient and correctors use different meshes".into()));
    }
    let patch = &correctors.patch;
    let region = correctors.region;
    let r = fine.ratio();
    let vals = coef.values();
    let t = patch.center_coords();

    // T term: int_T A grad L_j . grad L_i for the corners i, j of T
    let mut tterm = [[0.0; CORNERS]; CORNERS];
    for cy in t[1] * r..(t[1] + 1) * r {
        for cx in t[0] * r..(t[0] + 1) * r {
            let a = vals[fine.cell_index(cx, cy)];
            let lam: [[f64; 4]; CORNERS] = std::array::from_fn(|c| {
                CORNER_OFFSETS.map(|[ox, oy]| element_hat(r, t, c, cx + ox, cy + oy))
            });
            for i in 0..CORNERS {
                for j in 0..CORNERS {
                    tterm[i][j] += a * quad(&lam[i], &lam[j]);
                }
            }
        }
    }

    // g_j = K_region phi_j over all region nodes
    let [nx, _] = region.nodes_per_axis();
    let g: Vec<Vec<f64>> = (0..CORNERS)
        .map(|j| {
            let phi = correctors.to_region(j);
            let mut g = vec![0.0; region.num_nodes()];
            for ly in 0..region.cells[1] {
                for lx in 0..region.cells[0] {
                    let a = vals[fine.cell_index(region.lo[0] + lx, region.lo[1] + ly)];
                    let idx = CORNER_OFFSETS.map(|[ox, oy]| (lx + ox) + nx * (ly + oy));
                    let loc = idx.map(|k| phi[k]);
                    if loc.iter().all(|v| *v == 0.0) {
                        continue;
                    }
                    for (p, &k) in idx.iter().enumerate() {
                        g[k] += a * (0..4).map(|q| Q1_STIFFNESS[p][q] * loc[q]).sum::<f64>();
                    }
                }
            }
            g
        })
        .collect();

    let rows = patch.num_node_slots();
    let mut vec = vec![0.0; rows * CORNERS];
    for (s, (&[zx, zy], &inside)) in patch.nodes().iter().zip(patch.node_inside()).enumerate() {
        if !inside {
            continue;
        }
        let (zx, zy) = (zx as usize, zy as usize);
        let corner = CORNER_OFFSETS
            .iter()
            .position(|&[ox, oy]| t[0] + ox == zx && t[1] + oy == zy);
        let pairing = hat_pairing(&region, r, [zx, zy], &g);
        for j in 0..CORNERS {
            let tt = corner.map_or(0.0, |i| tterm[i][j]);
            vec[s + rows * j] = tt - pairing[j];
        }
    }
    Ok(LocalSurrogate {
        patch: patch.clone(),
        vec,
    })
}

#[inline]
fn quad(u: &[f64; 4], v: &[f64; 4]) -> f64 {
    let mut s = 0.0;
    for p in 0..4 {
        for q in 0..4 {
            s += u[p] * Q1_STIFFNESS[p][q] * v[q];
        }
    }
    s
}

/// `sum_x L_z(x) g_j(x)` over region nodes in the support of the coarse hat at `z`.
fn hat_pairing(region: &PatchRegion, r: usize, z: [usize; 2], g: &[Vec<f64>]) -> [f64; CORNERS] {
    let [nx, ny] = region.nodes_per_axis();
    let rf = r as f64;
    let span = |zc: usize, lo: usize, n: usize| {
        let a = (zc * r).saturating_sub(r).max(lo);
        let b = (zc * r + r).min(lo + n - 1);
        (a, b)
    };
    let (x0, x1) = span(z[0], region.lo[0], nx);
    let (y0, y1) = span(z[1], region.lo[1], ny);
    let mut out = [0.0; CORNERS];
    if x0 > x1 || y0 > y1 {
        return out;
    }
    for y in y0..=y1 {
        let wy = 1.0 - (y as f64 / rf - z[1] as f64).abs();
        for x in x0..=x1 {
            let wx = 1.0 - (x as f64 / rf - z[0] as f64).abs();
            let w = wx * wy;
            if w == 0.0 {
                continue;
            }
            let k = (x - region.lo[0]) + nx * (y - region.lo[1]);
            for (o, gj) in out.iter_mut().zip(g) {
                *o += w * gj[k];
            }
        }
    }
    out
}

/// Correctors and local surrogate for every element, in element order.
pub fn compute_local_surrogates(interp: &Interpolator, coef: &Coefficient, ell: usize) -> Result<Vec<LocalSurrogate>> {
    let coarse = interp.coarse();
    (0..coarse.num_elements())
        .into_par_iter()
        .map(|t| {
            let patch = coarse.patch(t, ell)?;
            let corr = solve_correctors(&patch, interp, coef)?;
            local_surrogate(&corr, coef)
        })
        .collect()
}

/// `S_A = sum_T Phi_T(S_{A,T})` over the interior coarse nodes.
pub fn assemble_global(grid: &CoarseGrid, locals: &[LocalSurrogate]) -> Result<SparseMatrix> {
    if locals.len() != grid.num_elements() {
        return Err(Error::Shape(format!(
            "{} local matrices for {} elements",
            locals.len(),
            grid.num_elements()
        )));
    }
    let mut triplets = Vec::with_capacity(locals.len() * locals.first().map_or(0, |l| l.vec.len()));
    for (t, local) in locals.iter().enumerate() {
        let p = local.patch();
        if p.center() != t || p.grid() != *grid {
            return Err(Error::Shape(format!("local matrix {t} belongs to element {}", p.center())));
        }
        let map = local_to_global(grid, p);
        let rows = local.rows();
        for j in 0..CORNERS {
            for s in 0..rows {
                if let Some((gi, gj)) = map.entry(s, j) {
                    triplets.push((gi, gj, local.vec[s + rows * j]));
                }
            }
        }
    }
    let m = grid.num_interior_nodes();
    SparseMatrix::from_triplets(m, m, &triplets)
}

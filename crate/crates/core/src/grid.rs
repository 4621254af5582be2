//! Uniform Cartesian meshes on the unit square, padded element patches and
//! the local-to-global maps used by patch-based assembly.
//!
//! All index sets are row-major with x fastest. A coarse grid with `n` cells
//! per axis has nodes `(ix, iy)` with `0 <= ix, iy <= n`; the degrees of
//! freedom live on the `(n - 1)^2` interior nodes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::randfield::FieldRealization;

/// Only the unit square is supported.
pub const DIM: usize = 2;

/// Number of coarse basis functions supported on one element.
pub const CORNERS: usize = 1 << DIM;

fn dyadic_inverse(h: f64) -> Result<usize> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::InvalidGrid(format!("mesh size {h} not in (0, 1)")));
    }
    let inv = 1.0 / h;
    let n = inv.round();
    if (inv - n).abs() > 1e-9 * inv || !(n as usize).is_power_of_two() {
        return Err(Error::InvalidGrid(format!("mesh size {h} is not dyadic")));
    }
    Ok(n as usize)
}

fn ratio_of(coarse: f64, fine: f64) -> Result<usize> {
    let r = coarse / fine;
    let n = r.round();
    if n < 1.0 || (r - n).abs() > 1e-9 * r || !(n as usize).is_power_of_two() {
        return Err(Error::InvalidGrid(format!(
            "{fine} does not refine {coarse} by a power of two"
        )));
    }
    Ok(n as usize)
}

/// Uniform coarse mesh `T_H` of `(0,1)^2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoarseGrid {
    n: usize,
}

impl CoarseGrid {
    /// Builds the grid with mesh size `h = 2^-p`, `p >= 1`.
    pub fn new(h: f64, dim: usize) -> Result<Self> {
        if dim != DIM {
            return Err(Error::UnsupportedDimension(dim));
        }
        Self::with_cells(dyadic_inverse(h)?)
    }

    pub fn with_cells(n: usize) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "{n} cells per axis; need a power of two >= 2"
            )));
        }
        Ok(Self { n })
    }

    pub fn cells_per_axis(&self) -> usize {
        self.n
    }

    pub fn mesh_size(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn dim(&self) -> usize {
        DIM
    }

    pub fn num_elements(&self) -> usize {
        self.n * self.n
    }

    pub fn num_interior_nodes(&self) -> usize {
        (self.n - 1) * (self.n - 1)
    }

    pub fn element_coords(&self, t: usize) -> [usize; 2] {
        [t % self.n, t / self.n]
    }

    pub fn element_index(&self, c: [usize; 2]) -> usize {
        c[0] + self.n * c[1]
    }

    /// DOF index of node `(ix, iy)`, or `None` for boundary and exterior nodes.
    pub fn interior_node(&self, ix: isize, iy: isize) -> Option<usize> {
        let n = self.n as isize;
        if ix > 0 && ix < n && iy > 0 && iy < n {
            Some((ix - 1) as usize + (self.n - 1) * (iy - 1) as usize)
        } else {
            None
        }
    }

    pub fn interior_node_coords(&self, k: usize) -> [usize; 2] {
        [k % (self.n - 1) + 1, k / (self.n - 1) + 1]
    }

    pub fn node_position(&self, c: [usize; 2]) -> [f64; 2] {
        let h = self.mesh_size();
        [c[0] as f64 * h, c[1] as f64 * h]
    }

    /// Element neighbourhood of order `ell`, padded to full size.
    pub fn patch(&self, t: usize, ell: usize) -> Result<PatchIndex> {
        PatchIndex::new(*self, t, ell)
    }
}

/// Uniform refinement of a [`CoarseGrid`] by the ratio `H / h`.
///
/// Used both for the corrector mesh `T_h` and the coefficient mesh `T_eps`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FineGrid {
    parent: CoarseGrid,
    ratio: usize,
}

impl FineGrid {
    pub fn new(parent: CoarseGrid, ratio: usize) -> Result<Self> {
        if ratio == 0 || !ratio.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "refinement ratio {ratio} is not a power of two"
            )));
        }
        Ok(Self { parent, ratio })
    }

    /// Fine grid of mesh size `h` below the coarse grid of mesh size `coarse_h`.
    pub fn from_sizes(coarse_h: f64, h: f64) -> Result<Self> {
        let parent = CoarseGrid::new(coarse_h, DIM)?;
        Self::new(parent, ratio_of(coarse_h, h)?)
    }

    pub fn parent(&self) -> CoarseGrid {
        self.parent
    }

    pub fn ratio(&self) -> usize {
        self.ratio
    }

    pub fn cells_per_axis(&self) -> usize {
        self.parent.n * self.ratio
    }

    pub fn mesh_size(&self) -> f64 {
        1.0 / self.cells_per_axis() as f64
    }

    pub fn num_cells(&self) -> usize {
        let n = self.cells_per_axis();
        n * n
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.cells_per_axis() + 1
    }

    pub fn num_nodes(&self) -> usize {
        let n = self.nodes_per_axis();
        n * n
    }

    pub fn num_interior_nodes(&self) -> usize {
        let n = self.cells_per_axis() - 1;
        n * n
    }

    pub fn cell_index(&self, ix: usize, iy: usize) -> usize {
        ix + self.cells_per_axis() * iy
    }

    pub fn node_index(&self, ix: usize, iy: usize) -> usize {
        ix + self.nodes_per_axis() * iy
    }

    pub fn interior_node(&self, ix: usize, iy: usize) -> Option<usize> {
        let n = self.cells_per_axis();
        if ix > 0 && ix < n && iy > 0 && iy < n {
            Some(ix - 1 + (n - 1) * (iy - 1))
        } else {
            None
        }
    }

    /// Cell midpoint coordinates.
    pub fn cell_midpoint(&self, ix: usize, iy: usize) -> [f64; 2] {
        let h = self.mesh_size();
        [(ix as f64 + 0.5) * h, (iy as f64 + 0.5) * h]
    }

    /// Ratio `self.h / other.h` when `other` refines `self`.
    pub fn refinement_to(&self, other: &FineGrid) -> Result<usize> {
        let (a, b) = (self.cells_per_axis(), other.cells_per_axis());
        if b < a || b % a != 0 {
            return Err(Error::InvalidGrid(format!(
                "grid with {b} cells per axis does not refine {a}"
            )));
        }
        Ok(b / a)
    }

    /// Piecewise-constant injection of cell values on `self` into `target`.
    pub fn prolong_cells(&self, values: &[f64], target: &FineGrid) -> Result<Vec<f64>> {
        if values.len() != self.num_cells() {
            return Err(Error::Shape(format!(
                "{} cell values on a grid with {} cells",
                values.len(),
                self.num_cells()
            )));
        }
        let r = self.refinement_to(target)?;
        if r == 1 {
            return Ok(values.to_vec());
        }
        let n = target.cells_per_axis();
        let mut out = Vec::with_capacity(n * n);
        for iy in 0..n {
            for ix in 0..n {
                out.push(values[self.cell_index(ix / r, iy / r)]);
            }
        }
        Ok(out)
    }

    /// Expands interior-node values to all nodes, zero on the boundary.
    pub fn expand_interior(&self, interior: &[f64]) -> Vec<f64> {
        let n = self.cells_per_axis();
        let mut out = vec![0.0; self.num_nodes()];
        for iy in 1..n {
            for ix in 1..n {
                out[self.node_index(ix, iy)] = interior[ix - 1 + (n - 1) * (iy - 1)];
            }
        }
        out
    }

    pub fn restrict_interior(&self, all: &[f64]) -> Vec<f64> {
        let n = self.cells_per_axis();
        let mut out = Vec::with_capacity(self.num_interior_nodes());
        for iy in 1..n {
            for ix in 1..n {
                out.push(all[self.node_index(ix, iy)]);
            }
        }
        out
    }
}

/// Padded element neighbourhood `N^ell(T)`.
///
/// The bounding box always holds `(2 ell + 1)^2` cell slots and
/// `(2 ell + 2)^2` node slots; slots outside the domain are virtual.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchIndex {
    grid: CoarseGrid,
    center: usize,
    ell: usize,
    cells: Vec<[isize; 2]>,
    nodes: Vec<[isize; 2]>,
    cell_inside: Vec<bool>,
    node_inside: Vec<bool>,
}

impl PatchIndex {
    pub fn new(grid: CoarseGrid, center: usize, ell: usize) -> Result<Self> {
        if center >= grid.num_elements() {
            return Err(Error::InvalidGrid(format!(
                "element {center} out of range ({} elements)",
                grid.num_elements()
            )));
        }
        if ell == 0 {
            return Err(Error::InvalidParameter("patch order must be >= 1".into()));
        }
        let [tx, ty] = grid.element_coords(center);
        let (tx, ty, l) = (tx as isize, ty as isize, ell as isize);
        let n = grid.n as isize;

        let side = 2 * l + 1;
        let mut cells = Vec::with_capacity((side * side) as usize);
        let mut cell_inside = Vec::with_capacity(cells.capacity());
        for j in 0..side {
            for i in 0..side {
                let c = [tx - l + i, ty - l + j];
                cell_inside.push((0..n).contains(&c[0]) && (0..n).contains(&c[1]));
                cells.push(c);
            }
        }
        let side = side + 1;
        let mut nodes = Vec::with_capacity((side * side) as usize);
        let mut node_inside = Vec::with_capacity(nodes.capacity());
        for j in 0..side {
            for i in 0..side {
                let c = [tx - l + i, ty - l + j];
                node_inside.push((0..=n).contains(&c[0]) && (0..=n).contains(&c[1]));
                nodes.push(c);
            }
        }
        Ok(Self {
            grid,
            center,
            ell,
            cells,
            nodes,
            cell_inside,
            node_inside,
        })
    }

    pub fn grid(&self) -> CoarseGrid {
        self.grid
    }

    pub fn center(&self) -> usize {
        self.center
    }

    pub fn center_coords(&self) -> [usize; 2] {
        self.grid.element_coords(self.center)
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    /// Coarse cell coordinates of every cell slot (may be negative).
    pub fn cells(&self) -> &[[isize; 2]] {
        &self.cells
    }

    /// Coarse node coordinates of every node slot (may be negative).
    pub fn nodes(&self) -> &[[isize; 2]] {
        &self.nodes
    }

    /// Cell slots lying in the domain.
    pub fn cell_inside(&self) -> &[bool] {
        &self.cell_inside
    }

    /// Node slots lying in the closed domain (boundary nodes included).
    pub fn node_inside(&self) -> &[bool] {
        &self.node_inside
    }

    pub fn num_node_slots(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_cell_slots(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_slots_per_axis(&self) -> usize {
        2 * self.ell + 1
    }

    pub fn node_slots_per_axis(&self) -> usize {
        2 * self.ell + 2
    }

    /// Inclusive coarse-cell bounds `(lo, hi)` of `N^ell(T)` clipped to the domain.
    pub fn inside_cell_range(&self) -> ([usize; 2], [usize; 2]) {
        let [tx, ty] = self.center_coords();
        let n = self.grid.n - 1;
        (
            [tx.saturating_sub(self.ell), ty.saturating_sub(self.ell)],
            [(tx + self.ell).min(n), (ty + self.ell).min(n)],
        )
    }

    /// Node slot index of coarse node `(ix, iy)`, if it lies in the bounding box.
    pub fn node_slot(&self, ix: isize, iy: isize) -> Option<usize> {
        let [ox, oy] = self.nodes[0];
        let s = self.node_slots_per_axis() as isize;
        let (i, j) = (ix - ox, iy - oy);
        ((0..s).contains(&i) && (0..s).contains(&j)).then(|| (i + s * j) as usize)
    }
}

/// The map `Phi_T` from local surrogate entries to global matrix entries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalToGlobal {
    /// Global DOF per patch node slot; `None` means the row is discarded.
    pub rows: Vec<Option<usize>>,
    /// Global DOF per corner of the center element (x fastest).
    pub cols: [Option<usize>; CORNERS],
}

impl LocalToGlobal {
    /// Global `(row, col)` of local entry `(slot, corner)`, `None` when discarded.
    pub fn entry(&self, slot: usize, corner: usize) -> Option<(usize, usize)> {
        Some((self.rows[slot]?, self.cols[corner]?))
    }
}

pub fn local_to_global(grid: &CoarseGrid, p: &PatchIndex) -> LocalToGlobal {
    let rows = p
        .nodes
        .iter()
        .map(|&[ix, iy]| grid.interior_node(ix, iy))
        .collect();
    let [tx, ty] = p.center_coords();
    let mut cols = [None; CORNERS];
    for (c, col) in cols.iter_mut().enumerate() {
        let (ix, iy) = ((tx + (c & 1)) as isize, (ty + (c >> 1)) as isize);
        *col = grid.interior_node(ix, iy);
    }
    LocalToGlobal { rows, cols }
}

/// The feature operator `R_T`: field values on every fine cell of the padded
/// patch, row-major over the `(2 ell + 1) r` square of fine cells, zero on
/// virtual cells.
pub fn restrict_field(field: &FieldRealization, p: &PatchIndex) -> Result<Vec<f64>> {
    let fine = field.grid();
    if fine.parent() != p.grid {
        return Err(Error::InvalidGrid(format!(
            "field refines a {0}x{0} coarse grid, patch lives on {1}x{1}",
            fine.parent().cells_per_axis(),
            p.grid.cells_per_axis()
        )));
    }
    let r = fine.ratio() as isize;
    let n = fine.cells_per_axis() as isize;
    let side = p.cell_slots_per_axis() as isize * r;
    let [ox, oy] = p.cells[0];
    let (ox, oy) = (ox * r, oy * r);
    let values = field.values();
    let mut out = Vec::with_capacity((side * side) as usize);
    for j in 0..side {
        let y = oy + j;
        for i in 0..side {
            let x = ox + i;
            if (0..n).contains(&x) && (0..n).contains(&y) {
                out.push(values[(x + n * y) as usize]);
            } else {
                out.push(0.0);
            }
        }
    }
    Ok(out)
}

/// Input length of [`restrict_field`] for a given order and refinement ratio.
pub fn patch_input_len(ell: usize, ratio: usize) -> usize {
    let s = (2 * ell + 1) * ratio;
    s * s
}

/// Output length of a flattened local surrogate.
pub fn patch_output_len(ell: usize) -> usize {
    let s = 2 * ell + 2;
    s * s * CORNERS
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randfield::{FieldKind, FieldRealization};

    #[test]
    fn coarse_grid_counts() {
        let g = CoarseGrid::new(1.0 / 16.0, 2).unwrap();
        assert_eq!(g.num_elements(), 256);
        assert_eq!(g.num_interior_nodes(), 225);
        let g = CoarseGrid::new(0.5, 2).unwrap();
        assert_eq!(g.num_elements(), 4);
        assert_eq!(g.num_interior_nodes(), 1);
    }

    #[test]
    fn coarse_grid_rejects_bad_input() {
        assert!(matches!(
            CoarseGrid::new(0.25, 3),
            Err(Error::UnsupportedDimension(3))
        ));
        assert!(CoarseGrid::new(0.3, 2).is_err());
        assert!(CoarseGrid::new(1.0, 2).is_err());
        assert!(CoarseGrid::new(1.0 / 12.0, 2).is_err());
    }

    #[test]
    fn patch_sizes() {
        let g = CoarseGrid::with_cells(16).unwrap();
        for t in [0, 17, 100, 255] {
            let p = g.patch(t, 2).unwrap();
            assert_eq!(p.num_node_slots(), 36);
            assert_eq!(p.num_cell_slots(), 25);
        }
    }

    #[test]
    fn corner_patch_mask_matches_enumeration() {
        let g = CoarseGrid::with_cells(16).unwrap();
        let p = g.patch(0, 2).unwrap();
        // brute force: slot cells are (-2..=2)^2, inside iff both coords in [0,16)
        let mut cells = 0;
        for j in -2..=2 {
            for i in -2..=2 {
                if (0..16).contains(&i) && (0..16).contains(&j) {
                    cells += 1;
                }
            }
        }
        let mut nodes = 0;
        for j in -2..=3 {
            for i in -2..=3 {
                if (0..=16).contains(&i) && (0..=16).contains(&j) {
                    nodes += 1;
                }
            }
        }
        assert_eq!(cells, 9);
        assert_eq!(nodes, 16);
        assert_eq!(p.cell_inside().iter().filter(|&&b| b).count(), cells);
        assert_eq!(p.node_inside().iter().filter(|&&b| b).count(), nodes);
    }

    #[test]
    fn interior_patch_fully_inside() {
        let g = CoarseGrid::with_cells(16).unwrap();
        let p = g.patch(g.element_index([7, 8]), 2).unwrap();
        assert!(p.cell_inside().iter().all(|&b| b));
        assert!(p.node_inside().iter().all(|&b| b));
        let map = local_to_global(&g, &p);
        assert!(map.rows.iter().all(Option::is_some));
        assert!(map.cols.iter().all(Option::is_some));
    }

    #[test]
    fn corner_patch_discards_boundary_rows() {
        let g = CoarseGrid::with_cells(16).unwrap();
        let p = g.patch(0, 2).unwrap();
        let map = local_to_global(&g, &p);
        for (slot, &[ix, iy]) in p.nodes().iter().enumerate() {
            let interior = ix > 0 && iy > 0 && ix < 16 && iy < 16;
            assert_eq!(map.rows[slot].is_some(), interior);
        }
        assert_eq!(map.cols[0], None);
        assert_eq!(map.cols[3], Some(0));
    }

    #[test]
    fn retained_rows_are_injective() {
        let g = CoarseGrid::with_cells(8).unwrap();
        for t in 0..g.num_elements() {
            let map = local_to_global(&g, &g.patch(t, 2).unwrap());
            let mut seen: Vec<usize> = map.rows.iter().flatten().copied().collect();
            let len = seen.len();
            seen.sort_unstable();
            seen.dedup();
            assert_eq!(seen.len(), len);
        }
    }

    #[test]
    fn all_ones_assembly_counts_covering_patches() {
        let g = CoarseGrid::with_cells(4).unwrap();
        let ell = 1;
        let nd = g.num_interior_nodes();
        let mut assembled = vec![0usize; nd * nd];
        for t in 0..g.num_elements() {
            let p = g.patch(t, ell).unwrap();
            let map = local_to_global(&g, &p);
            for s in 0..p.num_node_slots() {
                for c in 0..CORNERS {
                    if let Some((i, j)) = map.entry(s, c) {
                        assembled[i * nd + j] += 1;
                    }
                }
            }
        }
        // direct count: element T contributes to (i, j) iff j is a corner of T
        // and i lies in the node box of N^1(T).
        let mut expected = vec![0usize; nd * nd];
        for t in 0..g.num_elements() {
            let [tx, ty] = g.element_coords(t);
            for i in 0..nd {
                let [ix, iy] = g.interior_node_coords(i);
                let in_box = ix + 1 >= tx && ix <= tx + 2 && iy + 1 >= ty && iy <= ty + 2;
                if !in_box {
                    continue;
                }
                for j in 0..nd {
                    let [jx, jy] = g.interior_node_coords(j);
                    if (jx == tx || jx == tx + 1) && (jy == ty || jy == ty + 1) {
                        expected[i * nd + j] += 1;
                    }
                }
            }
        }
        assert_eq!(assembled, expected);
    }

    fn constant_field(fine: FineGrid, c: f64) -> FieldRealization {
        FieldRealization::new(fine, vec![c; fine.num_cells()], FieldKind::Lognormal).unwrap()
    }

    #[test]
    fn restrict_full_scale_dimensions() {
        let fine = FineGrid::from_sizes(1.0 / 16.0, 1.0 / 128.0).unwrap();
        let f = constant_field(fine, 2.5);
        let g = fine.parent();
        let p = g.patch(g.element_index([8, 8]), 2).unwrap();
        let v = restrict_field(&f, &p).unwrap();
        assert_eq!(v.len(), 1600);
        assert_eq!(patch_input_len(2, 8), 1600);
        assert!(v.iter().all(|&x| x == 2.5));
    }

    #[test]
    fn restrict_corner_padding_matches_mask() {
        let fine = FineGrid::from_sizes(1.0 / 16.0, 1.0 / 128.0).unwrap();
        let f = constant_field(fine, 1.0);
        let p = fine.parent().patch(0, 2).unwrap();
        let v = restrict_field(&f, &p).unwrap();
        let r = 8;
        let side = 5 * r;
        for j in 0..side {
            for i in 0..side {
                let slot = i / r + 5 * (j / r);
                let expected = if p.cell_inside()[slot] { 1.0 } else { 0.0 };
                assert_eq!(v[i + side * j], expected);
            }
        }
    }

    #[test]
    fn restrict_rejects_foreign_grid() {
        let fine = FineGrid::from_sizes(1.0 / 8.0, 1.0 / 64.0).unwrap();
        let f = constant_field(fine, 1.0);
        let p = CoarseGrid::with_cells(16).unwrap().patch(0, 2).unwrap();
        assert!(restrict_field(&f, &p).is_err());
    }

    #[test]
    fn prolong_injects() {
        let coarse = FineGrid::from_sizes(0.5, 0.25).unwrap();
        let fine = FineGrid::from_sizes(0.5, 0.125).unwrap();
        let v: Vec<f64> = (0..16).map(f64::from).collect();
        let p = coarse.prolong_cells(&v, &fine).unwrap();
        assert_eq!(p.len(), 64);
        assert_eq!(p[fine.cell_index(0, 0)], 0.0);
        assert_eq!(p[fine.cell_index(7, 7)], 15.0);
        assert_eq!(p[fine.cell_index(3, 2)], v[coarse.cell_index(1, 1)]);
        assert!(fine.prolong_cells(&p, &coarse).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn restrict_is_linear(seed in 0u64..1000, t in 0usize..64, alpha in -3.0f64..3.0) {
                use rand::{Rng, SeedableRng};
                let fine = FineGrid::from_sizes(0.125, 1.0 / 32.0).unwrap();
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let a: Vec<f64> = (0..fine.num_cells()).map(|_| rng.random::<f64>()).collect();
                let b: Vec<f64> = (0..fine.num_cells()).map(|_| rng.random::<f64>()).collect();
                let c: Vec<f64> = a.iter().zip(&b).map(|(x, y)| alpha * x + y).collect();
                let mk = |v: Vec<f64>| FieldRealization::new(fine, v, FieldKind::Gaussian).unwrap();
                let p = fine.parent().patch(t, 2).unwrap();
                let ra = restrict_field(&mk(a), &p).unwrap();
                let rb = restrict_field(&mk(b), &p).unwrap();
                let rc = restrict_field(&mk(c), &p).unwrap();
                for k in 0..rc.len() {
                    prop_assert!((rc[k] - (alpha * ra[k] + rb[k])).abs() < 1e-12);
                }
            }
        }
    }
}

use crate::error::{Error, Result};
use crate::fem::SparseMatrix;
use crate::grid::{CoarseGrid, FineGrid};

/// Quasi-interpolation `I_H = E_H o Pi_H`: elementwise L2 projection onto
/// Q1, then averaging of the element values over the four elements sharing
/// each interior coarse node. Boundary coarse nodes are fixed to zero.
///
/// Stored as a sparse `(coarse interior nodes) x (all fine nodes)` matrix.
#[derive(Clone, Debug)]
pub struct Interpolator {
    coarse: CoarseGrid,
    fine: FineGrid,
    op: SparseMatrix,
}

/// `P = M^-1 B` for the 1D projection of a fine P1 function on `[0, 1]`
/// (split into `r` cells) onto linear polynomials. Row `k` holds the weights
/// producing the value at end point `k`.
pub(crate) fn projection_weights_1d(r: usize) -> [Vec<f64>; 2] {
    let h = 1.0 / r as f64;
    let mut b = [vec![0.0; r + 1], vec![0.0; r + 1]];
    let coarse = [|t: f64| 1.0 - t, |t: f64| t];
    for s in 0..r {
        let (a, e) = (s as f64 * h, (s + 1) as f64 * h);
        let m = 0.5 * (a + e);
        for (k, phi) in coarse.iter().enumerate() {
            // Simpson is exact for products of two linear functions
            b[k][s] += h / 6.0 * (phi(a) + 4.0 * phi(m) * 0.5);
            b[k][s + 1] += h / 6.0 * (4.0 * phi(m) * 0.5 + phi(e));
        }
    }
    let mut p = [vec![0.0; r + 1], vec![0.0; r + 1]];
    for i in 0..=r {
        p[0][i] = 4.0 * b[0][i] - 2.0 * b[1][i];
        p[1][i] = -2.0 * b[0][i] + 4.0 * b[1][i];
    }
    p
}

impl Interpolator {
    pub fn new(coarse: CoarseGrid, fine: FineGrid) -> Result<Self> {
        if fine.parent() != coarse {
            return Err(Error::InvalidGrid("fine grid does not refine the coarse grid".into()));
        }
        let r = fine.ratio();
        let p = projection_weights_1d(r);
        let n = coarse.cells_per_axis();
        let side = 2 * r + 1;
        let mut triplets = Vec::new();
        let mut buf = vec![0.0; side * side];
        for k in 0..coarse.num_interior_nodes() {
            let [zx, zy] = coarse.interior_node_coords(k);
            buf.iter_mut().for_each(|v| *v = 0.0);
            // element (zx - 1 + a, zy - 1 + b) sees z as its corner (1 - a, 1 - b)
            for b in 0..2 {
                for a in 0..2 {
                    let (cx, cy) = (1 - a, 1 - b);
                    for j in 0..=r {
                        for i in 0..=r {
                            buf[(a * r + i) + side * (b * r + j)] += 0.25 * p[cx][i] * p[cy][j];
                        }
                    }
                }
            }
            let (ox, oy) = ((zx - 1) * r, (zy - 1) * r);
            for j in 0..side {
                for i in 0..side {
                    let w = buf[i + side * j];
                    if w != 0.0 {
                        triplets.push((k, fine.node_index(ox + i, oy + j), w));
                    }
                }
            }
        }
        debug_assert!(n >= 2);
        let op = SparseMatrix::from_triplets(coarse.num_interior_nodes(), fine.num_nodes(), &triplets)?;
        Ok(Self { coarse, fine, op })
    }

    pub fn coarse(&self) -> CoarseGrid {
        self.coarse
    }

    pub fn fine(&self) -> FineGrid {
        self.fine
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.op
    }

    /// Coarse interior nodal values of `I_H v` for `v` given on all fine nodes.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.op.matvec(v)
    }
}

/// Fine nodal values (all nodes) of the coarse Q1 function with the given
/// interior nodal values.
pub fn prolong_coarse(coarse: &CoarseGrid, fine: &FineGrid, values: &[f64]) -> Vec<f64> {
    let r = fine.ratio();
    let rf = r as f64;
    let nn = fine.nodes_per_axis();
    let node = |ix: usize, iy: usize| {
        coarse
            .interior_node(ix as isize, iy as isize)
            .map_or(0.0, |k| values[k])
    };
    let n = coarse.cells_per_axis();
    let mut out = vec![0.0; fine.num_nodes()];
    for y in 0..nn {
        let cy = (y / r).min(n - 1);
        let ty = (y - cy * r) as f64 / rf;
        for x in 0..nn {
            let cx = (x / r).min(n - 1);
            let tx = (x - cx * r) as f64 / rf;
            out[fine.node_index(x, y)] = (1.0 - tx) * (1.0 - ty) * node(cx, cy)
                + tx * (1.0 - ty) * node(cx + 1, cy)
                + (1.0 - tx) * ty * node(cx, cy + 1)
                + tx * ty * node(cx + 1, cy + 1);
        }
    }
    out
}

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{assemble_nn_surrogate, lognormal, Discretization, FieldSource, LocalModel};
use crate::error::{Error, Result};
use crate::grid::CoarseGrid;
use crate::io;
use crate::lod::{coarse_l2_norm, solve_pglod};
use crate::randfield::contrast;

/// Power-iteration tolerance of the spectral error.
pub const SPECTRAL_TOL: f64 = 1e-8;
pub const SPECTRAL_MAX_ITER: usize = 10_000;
const SOLVE_TOL: f64 = 1e-12;

/// Values along the line `x1 = 0.5` or `x2 = 0.5` at the
/// coarse nodes, boundary included.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossSection {
    /// Coordinate held fixed at 0.5: 1 for `x1`, 2 for `x2`.
    pub fixed: usize,
    pub coordinate: Vec<f64>,
    pub fem: Option<Vec<f64>>,
    pub pglod: Option<Vec<f64>>,
    pub nnlod: Option<Vec<f64>>,
}

impl CrossSection {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut header = vec!["coordinate"];
        let mut cols = vec![&self.coordinate];
        for (name, c) in [("fem", &self.fem), ("pglod", &self.pglod), ("nnlod", &self.nnlod)] {
            if let Some(c) = c {
                header.push(name);
                cols.push(c);
            }
        }
        let rows: Vec<Vec<f64>> = (0..self.coordinate.len()).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
        io::write_csv(path, &header, &rows)
    }
}

/// Extracts one coarse nodal vector (interior nodes) along a line.
fn line_values(grid: &CoarseGrid, v: &[f64], fixed: usize) -> Vec<f64> {
    let n = grid.cells_per_axis() as isize;
    let mid = n / 2;
    (0..=n)
        .map(|k| {
            let (ix, iy) = if fixed == 1 { (mid, k) } else { (k, mid) };
            grid.interior_node(ix, iy).map_or(0.0, |i| v[i])
        })
        .collect()
}

/// Cross-sections along `x1 = 0.5` and `x2 = 0.5` of coarse nodal vectors.
pub fn cross_sections(grid: &CoarseGrid, fem: Option<&[f64]>, pglod: Option<&[f64]>, nnlod: Option<&[f64]>) -> Vec<CrossSection> {
    let n = grid.cells_per_axis();
    let coordinate: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
    [1, 2]
        .into_iter()
        .map(|fixed| CrossSection {
            fixed,
            coordinate: coordinate.clone(),
            fem: fem.map(|v| line_values(grid, v, fixed)),
            pglod: pglod.map(|v| line_values(grid, v, fixed)),
            nnlod: nnlod.map(|v| line_values(grid, v, fixed)),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub index: usize,
    pub kappa: Option<f64>,
    pub contrast: f64,
    /// `||u_pg - u_nn||_{L2(D)}`.
    pub l2_error: f64,
    /// `||u_pg||_{L2(D)}`.
    pub l2_reference: f64,
    /// `||S_pg - S_nn||_2`.
    pub spectral_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub test_loss: Option<f64>,
    pub rows: Vec<EvalRow>,
    /// Cross-sections of the first fresh realization.
    pub cross_sections: Vec<CrossSection>,
}

impl EvalReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let rows: Vec<Vec<f64>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.index as f64,
                    r.kappa.unwrap_or(f64::NAN),
                    r.contrast,
                    r.l2_error,
                    r.l2_reference,
                    r.spectral_error,
                ]
            })
            .collect();
        io::write_csv(
            path,
            &["index", "kappa", "contrast", "l2_error", "l2_reference", "spectral_error"],
            &rows,
        )
    }
}

struct Sample {
    row: EvalRow,
    u_pg: Vec<f64>,
    u_nn: Vec<f64>,
}

/// Compares the NN-LOD surrogate with PG-LOD on `count` fresh realizations
/// `0..count` of `seed`. With `with_fem` the reference FEM solution of the
/// first realization enters the cross-sections. The test loss is left for
/// the caller, which knows whether the model has one.
pub fn evaluate(
    model: &dyn LocalModel,
    disc: &Discretization,
    source: &FieldSource,
    f: f64,
    seed: u64,
    count: usize,
    with_fem: bool,
) -> Result<EvalReport> {
    if count == 0 {
        return Err(Error::InvalidParameter("evaluation needs at least one realization".into()));
    }
    let load = disc.coarse_load(f)?;
    let samples: Vec<Sample> = (0..count)
        .into_par_iter()
        .map(|i| {
            let run = || -> Result<Sample> {
                let (kappa, z) = source.sample(seed, i as u64)?;
                let a = lognormal(&z)?;
                let s_pg = disc.pglod_matrix(&a)?;
                let s_nn = assemble_nn_surrogate(model, &z, disc)?;
                let u_pg = solve_pglod(&s_pg, &load, SOLVE_TOL)?;
                let u_nn = solve_pglod(&s_nn, &load, SOLVE_TOL)?;
                let diff: Vec<f64> = u_pg.iter().zip(&u_nn).map(|(p, q)| p - q).collect();
                let spectral_error = s_pg.sub(&s_nn)?.spectral_norm(SPECTRAL_TOL, SPECTRAL_MAX_ITER)?;
                Ok(Sample {
                    row: EvalRow {
                        index: i,
                        kappa,
                        contrast: contrast(&a)?,
                        l2_error: coarse_l2_norm(&disc.coarse, &diff),
                        l2_reference: coarse_l2_norm(&disc.coarse, &u_pg),
                        spectral_error,
                    },
                    u_pg,
                    u_nn,
                })
            };
            run().map_err(|e| Error::Realization {
                index: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let fem = if with_fem {
        let (_, z) = source.sample(seed, 0)?;
        Some(disc.solve_fem(&lognormal(&z)?, f)?.coarse_nodal())
    } else {
        None
    };
    let first = &samples[0];
    let cross = cross_sections(&disc.coarse, fem.as_deref(), Some(&first.u_pg), Some(&first.u_nn));
    Ok(EvalReport {
        test_loss: None,
        rows: samples.into_iter().map(|s| s.row).collect(),
        cross_sections: cross,
    })
}

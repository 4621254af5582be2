use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::evaluate::{cross_sections, CrossSection};
use super::{assemble_nn_surrogate, lognormal, Discretization, FieldSource, LocalModel, MC_SALT};
use crate::config::CoefficientClass;
use crate::error::{Error, Result};
use crate::io;
use crate::lod::{coarse_l2_norm, solve_pglod};
use crate::randfield::derive_seed;

const SOLVE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    /// Fine FEM, restricted to the coarse nodes.
    Fem,
    Pglod,
    Nnlod,
}

impl Solver {
    pub const ALL: [Solver; 3] = [Solver::Fem, Solver::Pglod, Solver::Nnlod];

    pub fn name(self) -> &'static str {
        match self {
            Solver::Fem => "fem",
            Solver::Pglod => "pglod",
            Solver::Nnlod => "nnlod",
        }
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Solver::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown solver {s:?} (expected fem, pglod or nnlod)")))
    }
}

/// Sample means of the coarse nodal solutions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub samples: usize,
    pub seed: u64,
    pub solvers: Vec<Solver>,
    /// One mean per solver, over the interior coarse nodes.
    pub means: Vec<Vec<f64>>,
    pub cross_sections: Vec<CrossSection>,
}

impl McResult {
    pub fn mean(&self, s: Solver) -> Option<&[f64]> {
        self.solvers.iter().position(|&v| v == s).map(|k| &self.means[k][..])
    }

    /// `mean_<solver>.csv` per solver (columns `coordinate,x1_half,x2_half`)
    /// and `cross_section_x1.csv`, `cross_section_x2.csv` with all solvers.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let [c1, c2] = [&self.cross_sections[0], &self.cross_sections[1]];
        for &s in &self.solvers {
            let pick = |c: &CrossSection| -> Vec<f64> {
                match s {
                    Solver::Fem => c.fem.clone(),
                    Solver::Pglod => c.pglod.clone(),
                    Solver::Nnlod => c.nnlod.clone(),
                }
                .unwrap_or_default()
            };
            let (a, b) = (pick(c1), pick(c2));
            let rows: Vec<Vec<f64>> = (0..c1.coordinate.len()).map(|i| vec![c1.coordinate[i], a[i], b[i]]).collect();
            io::write_csv(&dir.join(format!("mean_{s}.csv")), &["coordinate", "x1_half", "x2_half"], &rows)?;
        }
        c1.write_csv(&dir.join("cross_section_x1.csv"))?;
        c2.write_csv(&dir.join("cross_section_x2.csv"))?;
        io::write_json(&dir.join("mc.json"), self)
    }
}

/// Solves sample `i` of the common stream with every requested solver.
fn solve_sample(
    disc: &Discretization,
    source: &FieldSource,
    f: f64,
    load: &[f64],
    solvers: &[Solver],
    model: Option<&dyn LocalModel>,
    seed: u64,
    i: usize,
) -> Result<Vec<Vec<f64>>> {
    let (_, z) = source.sample(seed, i as u64)?;
    let a = lognormal(&z)?;
    solvers
        .iter()
        .map(|s| match s {
            Solver::Fem => Ok(disc.solve_fem(&a, f)?.coarse_nodal()),
            Solver::Pglod => solve_pglod(&disc.pglod_matrix(&a)?, load, SOLVE_TOL),
            Solver::Nnlod => {
                let m = model.ok_or_else(|| Error::InvalidParameter("nnlod needs a model".into()))?;
                solve_pglod(&assemble_nn_surrogate(m, &z, disc)?, load, SOLVE_TOL)
            }
        })
        .collect()
}

/// Monte Carlo means over samples `0..n` of the stream derived from `seed`;
/// every solver sees the same realizations.
pub fn monte_carlo_mean(
    disc: &Discretization,
    source: &FieldSource,
    f: f64,
    solvers: &[Solver],
    model: Option<&dyn LocalModel>,
    n: usize,
    seed: u64,
) -> Result<McResult> {
    if n == 0 {
        return Err(Error::InvalidParameter("n_samples must be >= 1".into()));
    }
    if solvers.is_empty() {
        return Err(Error::InvalidParameter("no solver requested".into()));
    }
    if solvers.contains(&Solver::Nnlod) && model.is_none() {
        return Err(Error::InvalidParameter("nnlod needs a model".into()));
    }
    let stream = derive_seed(seed, MC_SALT);
    let load = disc.coarse_load(f)?;
    let per_sample: Vec<Vec<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            solve_sample(disc, source, f, &load, solvers, model, stream, i).map_err(|e| Error::Realization {
                index: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let dofs = disc.coarse.num_interior_nodes();
    let mut means = vec![vec![0.0; dofs]; solvers.len()];
    for sample in &per_sample {
        for (m, u) in means.iter_mut().zip(sample) {
            m.iter_mut().zip(u).for_each(|(a, b)| *a += b);
        }
    }
    means.iter_mut().flatten().for_each(|v| *v /= n as f64);
    let get = |s: Solver| solvers.iter().position(|&v| v == s).map(|k| &means[k][..]);
    let cross = cross_sections(&disc.coarse, get(Solver::Fem), get(Solver::Pglod), get(Solver::Nnlod));
    Ok(McResult {
        samples: n,
        seed,
        solvers: solvers.to_vec(),
        means,
        cross_sections: cross,
    })
}

/// `L2` norm on `[0, 1]` of the piecewise linear interpolant of `values`.
pub fn line_l2(coords: &[f64], values: &[f64]) -> f64 {
    coords
        .windows(2)
        .zip(values.windows(2))
        .map(|(x, v)| (x[1] - x[0]) / 3.0 * (v[0] * v[0] + v[0] * v[1] + v[1] * v[1]))
        .sum::<f64>()
        .sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub coarse_h: f64,
    pub ell: usize,
    /// `||E[u_fem] - E[u_pg]||_{L2(D)}` over the coarse nodes.
    pub l2_error: f64,
    pub relative: f64,
}

/// FEM-vs-PG-LOD mean discrepancy for each `(H, ell)` with a common sample
/// set. The coefficient mesh `eps` and fine mesh `h` are shared.
pub fn convergence_study(
    levels: &[(f64, usize)],
    eps: f64,
    h: f64,
    class: &CoefficientClass,
    f: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<ConvergenceRow>> {
    levels
        .iter()
        .map(|&(coarse_h, ell)| {
            let disc = Discretization::new(coarse_h, eps, h, ell)?;
            let source = FieldSource::from_class(class, disc.field)?;
            let mc = monte_carlo_mean(&disc, &source, f, &[Solver::Fem, Solver::Pglod], None, n, seed)?;
            let diff: Vec<f64> = mc.means[0].iter().zip(&mc.means[1]).map(|(a, b)| a - b).collect();
            let l2_error = coarse_l2_norm(&disc.coarse, &diff);
            Ok(ConvergenceRow {
                coarse_h,
                ell,
                l2_error,
                relative: l2_error / coarse_l2_norm(&disc.coarse, &mc.means[0]),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::OracleModel;

    fn tiny() -> Discretization {
        Discretization::new(0.25, 1.0 / 16.0, 1.0 / 32.0, 1).unwrap()
    }

    fn lognormal_class() -> CoefficientClass {
        CoefficientClass::Lognormal {
            sigma2: 0.5,
            nu: 1.0,
            kappa: 1.0 / 16.0,
        }
    }

    #[test]
    fn single_sample_mean_is_the_solution() {
        let disc = tiny();
        let source = FieldSource::from_class(&lognormal_class(), disc.field).unwrap();
        let mc = monte_carlo_mean(&disc, &source, 1.0, &Solver::ALL[..2], None, 1, 3).unwrap();
        let (_, z) = source.sample(derive_seed(3, MC_SALT), 0).unwrap();
        let a = lognormal(&z).unwrap();
        let u = solve_pglod(&disc.pglod_matrix(&a).unwrap(), &disc.coarse_load(1.0).unwrap(), SOLVE_TOL).unwrap();
        assert_eq!(mc.mean(Solver::Pglod).unwrap(), &u[..]);
        assert_eq!(mc.mean(Solver::Fem).unwrap(), &disc.solve_fem(&a, 1.0).unwrap().coarse_nodal()[..]);
    }

    #[test]
    fn deterministic_coefficient_mean_equals_each_sample() {
        let disc = tiny();
        let class = CoefficientClass::Lognormal {
            sigma2: 0.0,
            nu: 1.0,
            kappa: 0.1,
        };
        let source = FieldSource::from_class(&class, disc.field).unwrap();
        let one = monte_carlo_mean(&disc, &source, 1.0, &[Solver::Pglod], None, 1, 0).unwrap();
        let many = monte_carlo_mean(&disc, &source, 1.0, &[Solver::Pglod], None, 5, 0).unwrap();
        for (a, b) in one.means[0].iter().zip(&many.means[0]) {
            assert!((a - b).abs() <= 1e-15 * a.abs().max(1e-300));
        }
    }

    #[test]
    fn oracle_nnlod_mean_matches_pglod() {
        // the oracle only knows the local matrices of one realization, so
        // use the deterministic class
        let disc = tiny();
        let class = CoefficientClass::Lognormal {
            sigma2: 0.0,
            nu: 1.0,
            kappa: 0.1,
        };
        let source = FieldSource::from_class(&class, disc.field).unwrap();
        let (_, z) = source.sample(0, 0).unwrap();
        let oracle = OracleModel::new(&disc.local_surrogates(&lognormal(&z).unwrap()).unwrap()).unwrap();
        let mc = monte_carlo_mean(&disc, &source, 1.0, &[Solver::Pglod, Solver::Nnlod], Some(&oracle), 3, 1).unwrap();
        assert_eq!(mc.means[0], mc.means[1]);
    }

    #[test]
    fn nnlod_without_model_is_rejected() {
        let disc = tiny();
        let source = FieldSource::from_class(&lognormal_class(), disc.field).unwrap();
        assert!(monte_carlo_mean(&disc, &source, 1.0, &[Solver::Nnlod], None, 1, 0).is_err());
    }

    #[test]
    fn line_l2_of_linear_functions() {
        let x: Vec<f64> = (0..=4).map(|k| k as f64 / 4.0).collect();
        // int_0^1 x^2 = 1/3 is exact for the interpolant of x
        assert!((line_l2(&x, &x) - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(line_l2(&x, &[0.0; 5]), 0.0);
    }

    #[test]
    fn solver_names_roundtrip() {
        for s in Solver::ALL {
            assert_eq!(s.name().parse::<Solver>().unwrap(), s);
        }
        assert!("fe".parse::<Solver>().is_err());
    }

    #[test]
    fn field_values_do_not_depend_on_the_coarse_grid() {
        let class = lognormal_class();
        let a = FieldSource::from_class(&class, crate::grid::FineGrid::from_sizes(0.25, 1.0 / 16.0).unwrap()).unwrap();
        let b = FieldSource::from_class(&class, crate::grid::FineGrid::from_sizes(0.125, 1.0 / 16.0).unwrap()).unwrap();
        assert_eq!(a.sample(4, 2).unwrap().1.values(), b.sample(4, 2).unwrap().1.values());
    }
}

//! End-to-end experiments: datasets, warm-start pretraining, NN-LOD assembly,
//! evaluation and Monte Carlo studies.

mod dataset;
mod evaluate;
mod montecarlo;
mod pretrain;

pub use dataset::{generate_dataset, load_dataset, split_counts, DatasetManifest, GroupInfo, LoadedDataset, MANIFEST_FILE, PAIRS_FILE};
pub use evaluate::{cross_sections, evaluate, CrossSection, EvalReport, EvalRow, SPECTRAL_MAX_ITER, SPECTRAL_TOL};
pub use montecarlo::{convergence_study, line_l2, monte_carlo_mean, ConvergenceRow, McResult, Solver};
pub use pretrain::{pretrain_uniform, uniform_field, PretrainOutcome};

use ndarray::{Array2, ArrayView2};

use crate::config::{CoefficientClass, ExperimentConfig};
use crate::error::{Error, Result};
use crate::fem::{solve_dirichlet, FemSolution, Source, SparseMatrix, DEFAULT_TOL};
use crate::grid::{patch_input_len, patch_output_len, restrict_field, CoarseGrid, FineGrid, PatchIndex};
use crate::lod::{assemble_global, coarse_load, compute_local_surrogates, Coefficient, Interpolator, LocalSurrogate};
use crate::mlp::MlpModel;
use crate::randfield::{
    derive_seed, sample_hierarchical_gaussian, to_lognormal, FieldKind, FieldRealization, GaussianSampler,
    HierarchicalParams,
};

/// Salt separating fresh evaluation draws from dataset draws.
pub const FRESH_SALT: u64 = 0x6576_616c;
/// Salt of the Monte Carlo sample stream.
pub const MC_SALT: u64 = 0x6d63;

/// The three meshes, the patch order and everything derived from them.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub coarse: CoarseGrid,
    /// Mesh of the coefficient (and of the network inputs).
    pub field: FineGrid,
    /// Mesh of the correctors and the reference FEM.
    pub fine: FineGrid,
    pub ell: usize,
    interp: Interpolator,
    patches: Vec<PatchIndex>,
}

impl Discretization {
    pub fn new(coarse_h: f64, eps: f64, h: f64, ell: usize) -> Result<Self> {
        let coarse = CoarseGrid::new(coarse_h, 2)?;
        let field = FineGrid::from_sizes(coarse_h, eps)?;
        let fine = FineGrid::from_sizes(coarse_h, h)?;
        field.refinement_to(&fine)?;
        let interp = Interpolator::new(coarse, fine)?;
        let patches = (0..coarse.num_elements())
            .map(|t| coarse.patch(t, ell))
            .collect::<Result<_>>()?;
        Ok(Self {
            coarse,
            field,
            fine,
            ell,
            interp,
            patches,
        })
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        Self::new(cfg.coarse_h, cfg.eps, cfg.fine_h, cfg.ell)
    }

    pub fn interpolator(&self) -> &Interpolator {
        &self.interp
    }

    pub fn patches(&self) -> &[PatchIndex] {
        &self.patches
    }

    pub fn input_len(&self) -> usize {
        patch_input_len(self.ell, self.field.ratio())
    }

    pub fn output_len(&self) -> usize {
        patch_output_len(self.ell)
    }

    /// `R_T` of every element as the rows of one matrix.
    pub fn patch_inputs(&self, z: &FieldRealization) -> Result<Array2<f64>> {
        let m = self.input_len();
        let mut out = Array2::zeros((self.patches.len(), m));
        for (mut row, p) in out.outer_iter_mut().zip(&self.patches) {
            let v = restrict_field(z, p)?;
            row.assign(&ndarray::ArrayView1::from(&v[..]));
        }
        Ok(out)
    }

    pub fn coefficient(&self, a: &FieldRealization) -> Result<Coefficient> {
        if a.kind() != FieldKind::Lognormal {
            return Err(Error::InvalidParameter("the diffusion coefficient must be a lognormal field".into()));
        }
        Coefficient::from_field(a, self.fine)
    }

    /// PG-LOD local matrices of every element.
    pub fn local_surrogates(&self, a: &FieldRealization) -> Result<Vec<LocalSurrogate>> {
        compute_local_surrogates(&self.interp, &self.coefficient(a)?, self.ell)
    }

    pub fn pglod_matrix(&self, a: &FieldRealization) -> Result<SparseMatrix> {
        assemble_global(&self.coarse, &self.local_surrogates(a)?)
    }

    /// Coarse load of a constant source.
    pub fn coarse_load(&self, f: f64) -> Result<Vec<f64>> {
        coarse_load(&FineGrid::new(self.coarse, 1)?, &Source::Constant(f))
    }

    /// Fine-scale reference solution.
    pub fn solve_fem(&self, a: &FieldRealization, f: f64) -> Result<FemSolution> {
        let k = self.coefficient(a)?.stiffness();
        let b = crate::fem::assemble_load(&self.fine, &Source::Constant(f))?;
        solve_dirichlet(self.fine, &k, &b, DEFAULT_TOL)
    }
}

/// Anything that maps patch inputs (rows) to flattened local matrices (rows).
pub trait LocalModel: Sync {
    fn predict(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>>;
}

impl LocalModel for MlpModel {
    fn predict(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.forward(inputs)
    }
}

/// Returns fixed local matrices regardless of the inputs.
#[derive(Clone, Debug)]
pub struct OracleModel {
    rows: Array2<f64>,
}

impl OracleModel {
    pub fn new(locals: &[LocalSurrogate]) -> Result<Self> {
        let len = locals.first().map_or(0, |l| l.vec().len());
        let flat: Vec<f64> = locals.iter().flat_map(|l| l.vec().iter().copied()).collect();
        let rows = Array2::from_shape_vec((locals.len(), len), flat).map_err(|e| Error::Shape(e.to_string()))?;
        Ok(Self { rows })
    }
}

impl LocalModel for OracleModel {
    fn predict(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        if inputs.nrows() != self.rows.nrows() {
            return Err(Error::Shape(format!(
                "oracle holds {} local matrices, asked for {}",
                self.rows.nrows(),
                inputs.nrows()
            )));
        }
        Ok(self.rows.clone())
    }
}

/// `S_hat = sum_T Phi_T(Psi(R_T z))` with the virtual rows of every
/// prediction zeroed before assembly.
pub fn assemble_nn_surrogate(model: &dyn LocalModel, z: &FieldRealization, disc: &Discretization) -> Result<SparseMatrix> {
    let inputs = disc.patch_inputs(z)?;
    let outputs = model.predict(inputs.view())?;
    if outputs.dim() != (disc.patches.len(), disc.output_len()) {
        return Err(Error::Shape(format!(
            "model produced {:?}, expected ({}, {})",
            outputs.dim(),
            disc.patches.len(),
            disc.output_len()
        )));
    }
    let locals = disc
        .patches
        .iter()
        .zip(outputs.outer_iter())
        .map(|(p, row)| LocalSurrogate::from_vec(p.clone(), row.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    assemble_global(&disc.coarse, &locals)
}

/// Source of Gaussian fields `Z` for fresh samples.
pub enum FieldSource {
    Fixed(GaussianSampler),
    Hierarchical { params: HierarchicalParams, grid: FineGrid },
    /// `Z` identically equal to a constant (degenerate randomness).
    Constant { grid: FineGrid, value: f64 },
}

impl FieldSource {
    /// Sampler of a coefficient class; `sigma2 = 0` gives `Z = 0`.
    pub fn from_class(class: &CoefficientClass, grid: FineGrid) -> Result<Self> {
        if class.is_deterministic() {
            return Ok(FieldSource::Constant { grid, value: 0.0 });
        }
        Ok(match class {
            CoefficientClass::Lognormal { sigma2, nu, kappa } => {
                FieldSource::Fixed(GaussianSampler::new(crate::randfield::MaternParams::new(*sigma2, *nu, *kappa)?, grid)?)
            }
            CoefficientClass::Hierarchical {
                sigma2,
                nu,
                kappa_low,
                kappa_high,
                ..
            } => FieldSource::Hierarchical {
                params: HierarchicalParams::new(*sigma2, *nu, *kappa_low, *kappa_high)?,
                grid,
            },
        })
    }

    /// Realization `index` of `seed`, with the correlation length it used.
    pub fn sample(&self, seed: u64, index: u64) -> Result<(Option<f64>, FieldRealization)> {
        match self {
            FieldSource::Fixed(s) => Ok((Some(s.params().kappa), s.sample(seed, index)?)),
            FieldSource::Hierarchical { params, grid } => {
                let (k, z) = sample_hierarchical_gaussian(params, *grid, seed, index)?;
                Ok((Some(k), z))
            }
            FieldSource::Constant { grid, value } => Ok((
                None,
                FieldRealization::new(*grid, vec![*value; grid.num_cells()], FieldKind::Gaussian)?,
            )),
        }
    }
}

/// Seed of the fresh (never in a dataset) realizations of an experiment.
pub fn fresh_seed(seed: u64) -> u64 {
    derive_seed(seed, FRESH_SALT)
}

pub(crate) fn lognormal(z: &FieldRealization) -> Result<FieldRealization> {
    to_lognormal(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randfield::MaternParams;

    fn tiny() -> Discretization {
        Discretization::new(0.25, 1.0 / 16.0, 1.0 / 32.0, 1).unwrap()
    }

    fn sample(disc: &Discretization, seed: u64) -> FieldRealization {
        let p = MaternParams::new(0.5, 1.0, 1.0 / 16.0).unwrap();
        GaussianSampler::new(p, disc.field).unwrap().sample(seed, 0).unwrap()
    }

    #[test]
    fn oracle_model_reproduces_assembly_bitwise() {
        let disc = tiny();
        let z = sample(&disc, 1);
        let a = lognormal(&z).unwrap();
        let locals = disc.local_surrogates(&a).unwrap();
        let s = assemble_global(&disc.coarse, &locals).unwrap();
        let oracle = OracleModel::new(&locals).unwrap();
        assert_eq!(assemble_nn_surrogate(&oracle, &z, &disc).unwrap(), s);
    }

    #[test]
    fn zero_model_gives_zero_matrix() {
        let disc = tiny();
        let z = sample(&disc, 2);
        let widths = [disc.input_len(), 8, disc.output_len()];
        let m = MlpModel::zeros(&widths).unwrap();
        assert_eq!(assemble_nn_surrogate(&m, &z, &disc).unwrap().nnz(), 0);
    }

    #[test]
    fn virtual_rows_of_predictions_are_dropped() {
        // a model predicting all ones contributes only through retained rows
        let disc = tiny();
        let z = sample(&disc, 3);
        let n = disc.patches().len();
        let ones = OracleModel {
            rows: Array2::ones((n, disc.output_len())),
        };
        let s = assemble_nn_surrogate(&ones, &z, &disc).unwrap();
        let ones_locals: Vec<LocalSurrogate> = disc
            .patches()
            .iter()
            .map(|p| LocalSurrogate::from_vec(p.clone(), vec![1.0; disc.output_len()]).unwrap())
            .collect();
        assert_eq!(s, assemble_global(&disc.coarse, &ones_locals).unwrap());
    }

    #[test]
    fn patch_inputs_shape() {
        let disc = tiny();
        let z = sample(&disc, 4);
        let x = disc.patch_inputs(&z).unwrap();
        assert_eq!(x.dim(), (16, 144));
    }
}

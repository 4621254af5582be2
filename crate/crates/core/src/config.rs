//! Experiment configuration with defaults for the full-scale lognormal setup.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CoarseGrid, FineGrid};
use crate::mlp::{reference_dims, LrStage, Schedule, TrainConfig};
use crate::randfield::{HierarchicalParams, MaternParams};

/// Distribution of the Gaussian field `Z` behind `A = exp(Z)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientClass {
    /// Whittle-Matérn field with fixed hyperparameters.
    Lognormal { sigma2: f64, nu: f64, kappa: f64 },
    /// Random correlation length `kappa ~ Unif[kappa_low, kappa_high]`.
    /// Datasets are generated for the fixed `representative_kappas`, one
    /// group of `realizations` per value; fresh samples draw `kappa`.
    Hierarchical {
        sigma2: f64,
        nu: f64,
        kappa_low: f64,
        kappa_high: f64,
        representative_kappas: Vec<f64>,
    },
}

impl Default for CoefficientClass {
    fn default() -> Self {
        CoefficientClass::Lognormal {
            sigma2: 0.5,
            nu: 1.0,
            kappa: 2f64.powi(-6),
        }
    }
}

impl CoefficientClass {
    pub fn hierarchical_default(sigma2: f64) -> Self {
        CoefficientClass::Hierarchical {
            sigma2,
            nu: 1.0,
            kappa_low: 2f64.powi(-6),
            kappa_high: 2f64.powi(-3),
            representative_kappas: (3..=6).map(|k| 2f64.powi(-k)).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            // sigma2 = 0 is the deterministic coefficient a = 1
            CoefficientClass::Lognormal { sigma2, nu, kappa } if *sigma2 == 0.0 => MaternParams::new(1.0, *nu, *kappa).map(|_| ()),
            CoefficientClass::Lognormal { sigma2, nu, kappa } => MaternParams::new(*sigma2, *nu, *kappa).map(|_| ()),
            CoefficientClass::Hierarchical {
                sigma2,
                nu,
                kappa_low,
                kappa_high,
                representative_kappas,
            } => {
                let s2 = if *sigma2 == 0.0 { 1.0 } else { *sigma2 };
                let hp = HierarchicalParams::new(s2, *nu, *kappa_low, *kappa_high)?;
                if representative_kappas.is_empty() {
                    return Err(Error::InvalidParameter("representative_kappas is empty".into()));
                }
                for &k in representative_kappas {
                    MaternParams::new(hp.sigma2, hp.nu, k)?;
                }
                Ok(())
            }
        }
    }

    pub fn is_deterministic(&self) -> bool {
        match self {
            CoefficientClass::Lognormal { sigma2, .. } | CoefficientClass::Hierarchical { sigma2, .. } => *sigma2 == 0.0,
        }
    }

    /// Matérn parameters of each dataset group.
    pub fn groups(&self) -> Vec<MaternParams> {
        match self {
            CoefficientClass::Lognormal { sigma2, nu, kappa } => vec![MaternParams {
                sigma2: *sigma2,
                nu: *nu,
                kappa: *kappa,
            }],
            CoefficientClass::Hierarchical {
                sigma2,
                nu,
                representative_kappas,
                ..
            } => representative_kappas
                .iter()
                .map(|&kappa| MaternParams {
                    sigma2: *sigma2,
                    nu: *nu,
                    kappa,
                })
                .collect(),
        }
    }
}

/// Synthetic uniformly elliptic coefficients for the warm-start network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub realizations: usize,
    /// Cell values on the coefficient mesh are drawn from `Unif[low, high]`.
    pub low: f64,
    pub high: f64,
    pub training: TrainConfig,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            realizations: 50,
            low: 0.1,
            high: 10.0,
            training: TrainConfig {
                schedule: Schedule::constant(60, 1e-3),
                batch_size: 100,
                seed: 0,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Coarse mesh size `H`.
    pub coarse_h: f64,
    /// Coefficient mesh size `eps`.
    pub eps: f64,
    /// Corrector mesh size `h`.
    pub fine_h: f64,
    /// Patch order.
    pub ell: usize,
    pub dim: usize,
    /// Constant right-hand side.
    pub source: f64,
    pub coefficient: CoefficientClass,
    /// Realizations per dataset group.
    pub realizations: usize,
    /// Layer widths; defaults to the eight-layer pyramid for the patch sizes.
    pub architecture: Option<Vec<usize>>,
    pub training: TrainConfig,
    pub pretrain: PretrainConfig,
    pub warm_start: Option<PathBuf>,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            coarse_h: 2f64.powi(-4),
            eps: 2f64.powi(-7),
            fine_h: 2f64.powi(-9),
            ell: 2,
            dim: 2,
            source: 1.0,
            coefficient: CoefficientClass::default(),
            realizations: 300,
            architecture: None,
            training: TrainConfig::default(),
            pretrain: PretrainConfig::default(),
            warm_start: None,
            seed: 0,
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    /// Small setup used by tests and quick runs: `H = 2^-3`, `eps = 2^-5`,
    /// `h = 2^-7`, 40 realizations.
    pub fn desk() -> Self {
        Self {
            coarse_h: 2f64.powi(-3),
            eps: 2f64.powi(-5),
            fine_h: 2f64.powi(-7),
            realizations: 40,
            coefficient: CoefficientClass::Lognormal {
                sigma2: 0.5,
                nu: 1.0,
                kappa: 2f64.powi(-5),
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grids()?;
        if self.ell == 0 {
            return Err(Error::InvalidParameter("ell must be >= 1".into()));
        }
        if !self.source.is_finite() {
            return Err(Error::InvalidParameter("source must be finite".into()));
        }
        self.coefficient.validate()?;
        self.training.schedule.validate()?;
        self.pretrain.training.schedule.validate()?;
        if self.training.batch_size == 0 || self.pretrain.training.batch_size == 0 {
            return Err(Error::InvalidParameter("batch_size must be positive".into()));
        }
        if !(self.pretrain.low > 0.0 && self.pretrain.high >= self.pretrain.low) {
            return Err(Error::InvalidParameter(format!(
                "pretraining range [{}, {}] must be positive and nonempty",
                self.pretrain.low, self.pretrain.high
            )));
        }
        let widths = self.widths();
        if widths.first() != Some(&self.input_len()?) || widths.last() != Some(&self.output_len()) || widths.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "architecture {widths:?} must map {} inputs to {} outputs",
                self.input_len()?,
                self.output_len()
            )));
        }
        Ok(())
    }

    /// Coarse grid, coefficient mesh and corrector mesh.
    pub fn grids(&self) -> Result<(CoarseGrid, FineGrid, FineGrid)> {
        let coarse = CoarseGrid::new(self.coarse_h, self.dim)?;
        let field = FineGrid::from_sizes(self.coarse_h, self.eps)?;
        let fine = FineGrid::from_sizes(self.coarse_h, self.fine_h)?;
        field.refinement_to(&fine)?;
        Ok((coarse, field, fine))
    }

    pub fn input_len(&self) -> Result<usize> {
        let (_, field, _) = self.grids()?;
        Ok(crate::grid::patch_input_len(self.ell, field.ratio()))
    }

    pub fn output_len(&self) -> usize {
        crate::grid::patch_output_len(self.ell)
    }

    pub fn widths(&self) -> Vec<usize> {
        match &self.architecture {
            Some(w) => w.clone(),
            None => reference_dims(self.input_len().unwrap_or(0), self.output_len()),
        }
    }

    /// Three-stage schedule of the lognormal experiments, two-stage for
    /// hierarchical coefficients.
    pub fn default_schedule(class: &CoefficientClass) -> Schedule {
        match class {
            CoefficientClass::Lognormal { .. } => Schedule::three_stage(),
            CoefficientClass::Hierarchical { .. } => Schedule::two_stage(),
        }
    }
}

/// Convenience for building schedules in configs and tests.
pub fn stage(until_epoch: usize, lr: f64) -> LrStage {
    LrStage { until_epoch, lr }
}

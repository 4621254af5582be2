use rand::Rng;

use super::dataset::{generate_ordered, split_counts};
use super::Discretization;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::grid::FineGrid;
use crate::mlp::{train, MlpModel, PairSet, TrainTrace};
use crate::randfield::{derive_seed, stream_rng, FieldKind, FieldRealization};

const PRETRAIN_SALT: u64 = 0x7072_6574;

/// Piecewise constant coefficient with cell values `~ Unif[low, high]`.
pub fn uniform_field(grid: FineGrid, low: f64, high: f64, seed: u64, index: u64) -> Result<FieldRealization> {
    let mut rng = stream_rng(seed, index);
    let values = (0..grid.num_cells()).map(|_| rng.random_range(low..=high)).collect();
    FieldRealization::new(grid, values, FieldKind::Lognormal)
}

#[derive(Clone, Debug)]
pub struct PretrainOutcome {
    pub model: MlpModel,
    pub trace: TrainTrace,
    /// Realizations used for `(train, val, test)`.
    pub split: (usize, usize, usize),
}

/// Trains a fresh network on uniformly elliptic piecewise constant
/// coefficients. The network sees `ln a` on each patch so that its inputs
/// live on the same scale as the Gaussian inputs of the lognormal runs.
pub fn pretrain_uniform(cfg: &ExperimentConfig) -> Result<PretrainOutcome> {
    cfg.validate()?;
    let pc = &cfg.pretrain;
    let (n_train, n_val, n_test) = split_counts(pc.realizations);
    if n_train == 0 || n_val == 0 {
        return Err(Error::InvalidParameter(format!(
            "pretraining needs at least 10 realizations, got {}",
            pc.realizations
        )));
    }
    let disc = Discretization::from_config(cfg)?;
    let seed = derive_seed(cfg.seed, PRETRAIN_SALT);
    let (m, o) = (disc.input_len(), disc.output_len());
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    generate_ordered(
        n_train + n_val,
        |i| {
            let a = uniform_field(disc.field, pc.low, pc.high, seed, i as u64)?;
            let log = FieldRealization::new(disc.field, a.values().iter().map(|v| v.ln()).collect(), FieldKind::Gaussian)?;
            super::dataset::realization_pairs(&disc, &log)
        },
        |_, block| {
            for pair in block.chunks_exact(m + o) {
                inputs.extend_from_slice(&pair[..m]);
                targets.extend_from_slice(&pair[m..]);
            }
            Ok(())
        },
    )?;
    let rows = inputs.len() / m;
    let split_row = n_train * disc.coarse.num_elements();
    let x = ndarray::Array2::from_shape_vec((rows, m), inputs).map_err(|e| Error::Shape(e.to_string()))?;
    let t = ndarray::Array2::from_shape_vec((rows, o), targets).map_err(|e| Error::Shape(e.to_string()))?;
    let train_set = PairSet::new(x.slice(ndarray::s![..split_row, ..]).to_owned(), t.slice(ndarray::s![..split_row, ..]).to_owned())?;
    let val_set = PairSet::new(x.slice(ndarray::s![split_row.., ..]).to_owned(), t.slice(ndarray::s![split_row.., ..]).to_owned())?;
    let mut model = MlpModel::he_uniform(&cfg.widths(), seed)?;
    let trace = train(&mut model, &train_set, &val_set, &pc.training)?;
    Ok(PretrainOutcome {
        model,
        trace,
        split: (n_train, n_val, n_test),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lod::{compute_local_surrogates, Coefficient, Interpolator};
    use crate::mlp::Schedule;

    #[test]
    fn uniform_field_range_and_reproducibility() {
        let grid = FineGrid::from_sizes(0.25, 1.0 / 16.0).unwrap();
        let a = uniform_field(grid, 0.1, 10.0, 3, 7).unwrap();
        assert!(a.values().iter().all(|&v| (0.1..=10.0).contains(&v)));
        assert_eq!(a, uniform_field(grid, 0.1, 10.0, 3, 7).unwrap());
        assert_ne!(a, uniform_field(grid, 0.1, 10.0, 3, 8).unwrap());
    }

    #[test]
    fn log_of_unit_coefficient_gives_constant_targets() {
        // low = high = 1: every input is zero and every target is the
        // unit-coefficient local matrix
        let disc = Discretization::new(0.25, 1.0 / 8.0, 1.0 / 16.0, 1).unwrap();
        let a = uniform_field(disc.field, 1.0, 1.0, 0, 0).unwrap();
        let log = FieldRealization::new(disc.field, vec![0.0; disc.field.num_cells()], FieldKind::Gaussian).unwrap();
        let pairs = super::super::dataset::realization_pairs(&disc, &log).unwrap();
        let interp = Interpolator::new(disc.coarse, disc.fine).unwrap();
        let unit = compute_local_surrogates(&interp, &Coefficient::constant(disc.fine, 1.0).unwrap(), 1).unwrap();
        let (m, o) = (disc.input_len(), disc.output_len());
        for (pair, local) in pairs.chunks_exact(m + o).zip(&unit) {
            assert!(pair[..m].iter().all(|&v| v == 0.0));
            assert_eq!(&pair[m..], local.vec());
        }
        assert!(a.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn short_pretraining_reduces_loss() {
        let mut cfg = ExperimentConfig {
            coarse_h: 0.25,
            eps: 1.0 / 8.0,
            fine_h: 1.0 / 16.0,
            ell: 1,
            ..ExperimentConfig::default()
        };
        cfg.pretrain.realizations = 20;
        cfg.pretrain.training.schedule = Schedule::constant(30, 1e-3);
        cfg.pretrain.training.batch_size = 16;
        let out = pretrain_uniform(&cfg).unwrap();
        assert_eq!(out.split, (16, 2, 2));
        assert_eq!(out.model.widths(), cfg.widths());
        assert!(out.trace.final_train() < out.trace.initial_train);
    }
}

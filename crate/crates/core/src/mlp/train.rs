use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AdamState, Batch, MlpModel, Schedule};
use crate::error::{Error, Result};
use crate::io;

/// A set of (input, target) rows.
#[derive(Clone, Debug, PartialEq)]
pub struct PairSet {
    batch: Batch,
}

impl PairSet {
    /// Unlike [`Batch::new`] this accepts zero rows.
    pub fn new(inputs: Array2<f64>, targets: Array2<f64>) -> Result<Self> {
        if inputs.nrows() == 0 && targets.nrows() == 0 {
            return Ok(Self {
                batch: Batch {
                    inputs,
                    targets,
                    target_norms: ndarray::Array1::zeros(0),
                },
            });
        }
        Ok(Self {
            batch: Batch::new(inputs, targets)?,
        })
    }

    pub fn len(&self) -> usize {
        self.batch.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batch.is_empty()
    }

    pub fn as_batch(&self) -> &Batch {
        &self.batch
    }

    fn gather(&self, rows: &[usize]) -> Batch {
        Batch {
            inputs: self.batch.inputs.select(Axis(0), rows),
            targets: self.batch.targets.select(Axis(0), rows),
            target_norms: self.batch.target_norms.select(Axis(0), rows),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub schedule: Schedule,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            schedule: Schedule::three_stage(),
            batch_size: 100,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub lr: f64,
    /// Mean of the batch losses of the epoch.
    pub train: f64,
    pub val: f64,
}

/// Losses before training (epoch 0) and after every epoch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub initial_train: f64,
    pub initial_val: f64,
    pub epochs: Vec<EpochLoss>,
}

impl TrainTrace {
    pub fn final_train(&self) -> f64 {
        self.epochs.last().map_or(self.initial_train, |e| e.train)
    }

    pub fn final_val(&self) -> f64 {
        self.epochs.last().map_or(self.initial_val, |e| e.val)
    }

    /// CSV with columns `epoch,lr,train_loss,val_loss`; epoch 0 is the
    /// untrained model.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut rows = vec![vec![0.0, 0.0, self.initial_train, self.initial_val]];
        rows.extend(self.epochs.iter().map(|e| vec![e.epoch as f64, e.lr, e.train, e.val]));
        io::write_csv(path, &["epoch", "lr", "train_loss", "val_loss"], &rows)
    }
}

/// Mini-batch Adam over the schedule; the training set is reshuffled every
/// epoch from `seed`.
pub fn train(model: &mut MlpModel, train_set: &PairSet, val_set: &PairSet, cfg: &TrainConfig) -> Result<TrainTrace> {
    cfg.schedule.validate()?;
    if cfg.batch_size == 0 {
        return Err(Error::InvalidParameter("batch size must be positive".into()));
    }
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Dataset("training and validation sets must be nonempty".into()));
    }
    let mut trace = TrainTrace {
        initial_train: model.loss(train_set.as_batch())?,
        initial_val: model.loss(val_set.as_batch())?,
        epochs: Vec::with_capacity(cfg.schedule.epochs()),
    };
    let mut state = AdamState::new(model);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=cfg.schedule.epochs() {
        let lr = cfg.schedule.lr(epoch);
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut count = 0;
        for (k, rows) in order.chunks(cfg.batch_size).enumerate() {
            let batch = train_set.gather(rows);
            let (loss, grads) = model.gradients(&batch)?;
            if !loss.is_finite() {
                return Err(Error::NanLoss { epoch, batch: k });
            }
            state.step(model, &grads, lr)?;
            sum += loss;
            count += 1;
        }
        let val = model.loss(val_set.as_batch())?;
        trace.epochs.push(EpochLoss {
            epoch,
            lr,
            train: sum / count as f64,
            val,
        });
    }
    Ok(trace)
}

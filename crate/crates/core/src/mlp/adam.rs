use serde::{Deserialize, Serialize};

use super::{Gradients, Layer, MlpModel};
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Learning rate `lr` for epochs up to and including `until_epoch`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrStage {
    pub until_epoch: usize,
    pub lr: f64,
}

/// Piecewise-constant step size over 1-based epochs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schedule {
    pub stages: Vec<LrStage>,
}

impl Schedule {
    pub fn new(stages: Vec<LrStage>) -> Result<Self> {
        let s = Self { stages };
        s.validate()?;
        Ok(s)
    }

    /// 1e-3 for epochs 1-30, 1e-4 for 31-40, 9.5e-5 for 41-60.
    pub fn three_stage() -> Self {
        Self {
            stages: vec![
                LrStage { until_epoch: 30, lr: 1e-3 },
                LrStage { until_epoch: 40, lr: 1e-4 },
                LrStage { until_epoch: 60, lr: 9.5e-5 },
            ],
        }
    }

    /// 1e-3 for epochs 1-40, 1e-4 for 41-60.
    pub fn two_stage() -> Self {
        Self {
            stages: vec![
                LrStage { until_epoch: 40, lr: 1e-3 },
                LrStage { until_epoch: 60, lr: 1e-4 },
            ],
        }
    }

    pub fn constant(epochs: usize, lr: f64) -> Self {
        Self {
            stages: vec![LrStage { until_epoch: epochs, lr }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() || self.stages[0].until_epoch == 0 {
            return Err(Error::InvalidParameter("schedule must cover at least one epoch".into()));
        }
        for w in self.stages.windows(2) {
            if w[1].until_epoch <= w[0].until_epoch {
                return Err(Error::InvalidParameter("schedule epochs must increase".into()));
            }
        }
        if let Some(s) = self.stages.iter().find(|s| !(s.lr >= 0.0 && s.lr.is_finite())) {
            return Err(Error::InvalidParameter(format!("invalid learning rate {}", s.lr)));
        }
        Ok(())
    }

    pub fn epochs(&self) -> usize {
        self.stages.last().map_or(0, |s| s.until_epoch)
    }

    /// Step size of 1-based `epoch`.
    pub fn lr(&self, epoch: usize) -> f64 {
        self.stages
            .iter()
            .find(|s| epoch <= s.until_epoch)
            .or(self.stages.last())
            .map_or(0.0, |s| s.lr)
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub(crate) m: Vec<Layer>,
    pub(crate) v: Vec<Layer>,
    pub(crate) t: u64,
}

impl AdamState {
    pub fn new(model: &MlpModel) -> Self {
        let zeros: Vec<Layer> = model
            .layers()
            .iter()
            .map(|l| {
                let (o, i) = l.dims();
                Layer::zeros(o, i)
            })
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Bias-corrected Adam update with step size `lr`.
    pub fn step(&mut self, model: &mut MlpModel, grads: &Gradients, lr: f64) -> Result<()> {
        if grads.layers.len() != model.layers().len()
            || grads.layers.iter().zip(model.layers()).any(|(g, l)| g.dims() != l.dims())
            || self.m.len() != model.layers().len()
        {
            return Err(Error::Shape("gradient layout does not match the model".into()));
        }
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            let mh = *m / c1;
            let vh = *v / c2;
            *p -= lr * mh / (vh.sqrt() + ADAM_EPS);
        };
        for (((layer, g), m), v) in model
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            ndarray::Zip::from(&mut layer.w)
                .and(&g.w)
                .and(&mut m.w)
                .and(&mut v.w)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut layer.b)
                .and(&g.b)
                .and(&mut m.b)
                .and(&mut v.b)
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn scalar_model(w: f64) -> MlpModel {
        MlpModel::from_layers(vec![Layer {
            w: array![[w]],
            b: array![0.0],
        }])
        .unwrap()
    }

    fn scalar_grad(g: f64) -> Gradients {
        Gradients {
            layers: vec![Layer {
                w: array![[g]],
                b: array![0.0],
            }],
        }
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut m = scalar_model(0.0);
        let mut s = AdamState::new(&m);
        s.step(&mut m, &scalar_grad(1.0), 1e-3).unwrap();
        // m_hat = v_hat = 1, so the step is lr / (1 + eps)
        let w = m.layers()[0].w[[0, 0]];
        assert!((w + 1e-3 / (1.0 + ADAM_EPS)).abs() < 1e-18);
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut m = scalar_model(0.25);
        let mut s = AdamState::new(&m);
        for _ in 0..10 {
            s.step(&mut m, &scalar_grad(0.0), 1e-3).unwrap();
        }
        assert_eq!(m.layers()[0].w[[0, 0]], 0.25);
    }

    #[test]
    fn constant_gradient_moves_monotonically() {
        let mut m = scalar_model(0.0);
        let mut s = AdamState::new(&m);
        s.step(&mut m, &scalar_grad(-2.0), 1e-3).unwrap();
        let w1 = m.layers()[0].w[[0, 0]];
        s.step(&mut m, &scalar_grad(-2.0), 1e-3).unwrap();
        let w2 = m.layers()[0].w[[0, 0]];
        assert!(0.0 < w1 && w1 < w2);
    }

    #[test]
    fn schedule_lookup() {
        let s = Schedule::three_stage();
        assert_eq!(s.epochs(), 60);
        assert_eq!(s.lr(1), 1e-3);
        assert_eq!(s.lr(30), 1e-3);
        assert_eq!(s.lr(31), 1e-4);
        assert_eq!(s.lr(41), 9.5e-5);
        assert_eq!(Schedule::two_stage().lr(41), 1e-4);
        assert!(Schedule::new(vec![LrStage { until_epoch: 3, lr: 1.0 }, LrStage { until_epoch: 2, lr: 1.0 }]).is_err());
    }
}

//! Dense feedforward ReLU networks trained with Adam on a relative
//! squared-error loss.

mod adam;
mod checkpoint;
mod train;

pub use adam::{AdamState, LrStage, Schedule, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use train::{train, EpochLoss, PairSet, TrainConfig, TrainTrace};

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

/// One affine layer `x -> W x + b`, `W` of shape `(out, in)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Layer {
    pub fn zeros(out: usize, inp: usize) -> Self {
        Self {
            w: Array2::zeros((out, inp)),
            b: Array1::zeros(out),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.w.dim()
    }
}

/// ReLU on every hidden layer, identity on the last.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    layers: Vec<Layer>,
}

/// Widths `[m, m, m/2, m/2, m/4, m/4, o, o, o]` of the eight-layer network.
pub fn reference_dims(input: usize, output: usize) -> Vec<usize> {
    vec![input, input, input / 2, input / 2, input / 4, input / 4, output, output, output]
}

impl MlpModel {
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[1].w.ncols() != pair[0].w.nrows() {
                return Err(Error::Shape(format!(
                    "layer {} has input width {} but layer {l} outputs {}",
                    l + 1,
                    pair[1].w.ncols(),
                    pair[0].w.nrows()
                )));
            }
        }
        if let Some((l, _)) = layers.iter().enumerate().find(|(_, x)| x.b.len() != x.w.nrows()) {
            return Err(Error::Shape(format!("bias length of layer {l} does not match its output width")));
        }
        Ok(Self { layers })
    }

    /// All weights and biases zero.
    pub fn zeros(widths: &[usize]) -> Result<Self> {
        check_widths(widths)?;
        Self::from_layers(widths.windows(2).map(|w| Layer::zeros(w[1], w[0])).collect())
    }

    /// He-uniform weights `U(-sqrt(6 / in), sqrt(6 / in))`, zero biases.
    pub fn he_uniform(widths: &[usize], seed: u64) -> Result<Self> {
        check_widths(widths)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = widths
            .windows(2)
            .map(|w| {
                let bound = (6.0 / w[0] as f64).sqrt();
                let mut layer = Layer::zeros(w[1], w[0]);
                layer.w.iter_mut().for_each(|v| *v = rng.random_range(-bound..bound));
                layer
            })
            .collect();
        Self::from_layers(layers)
    }

    pub fn reference_architecture(input: usize, output: usize, seed: u64) -> Result<Self> {
        Self::he_uniform(&reference_dims(input, output), seed)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// `(out, in)` per layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(Layer::dims).collect()
    }

    /// Widths `[in, out_1, ..., out_L]`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.layers.iter().map(|l| l.w.nrows()));
        w
    }

    pub fn activations(&self) -> Vec<Activation> {
        let n = self.layers.len();
        (0..n).map(|l| if l + 1 == n { Activation::Identity } else { Activation::Relu }).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").w.nrows()
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Rows of `inputs` are samples.
    pub fn forward(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(inputs.ncols())?;
        let mut a = inputs.to_owned();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            a = affine(&a, layer);
            if l < last {
                a.mapv_inplace(relu);
            }
        }
        Ok(a)
    }

    /// Batch loss `1/(2n) sum |y - t|^2 / |t|^2`.
    pub fn loss(&self, batch: &Batch) -> Result<f64> {
        let y = self.forward(batch.inputs.view())?;
        Ok(batch_loss(&y, batch))
    }

    /// Loss and its exact gradient with respect to every weight and bias.
    pub fn gradients(&self, batch: &Batch) -> Result<(f64, Gradients)> {
        self.check_input(batch.inputs.ncols())?;
        if batch.targets.ncols() != self.output_dim() {
            return Err(Error::Shape(format!(
                "targets have width {}, network outputs {}",
                batch.targets.ncols(),
                self.output_dim()
            )));
        }
        let last = self.layers.len() - 1;
        // pre-activations z_l and activations a_l (a_0 = input)
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        acts.push(batch.inputs.clone());
        for (l, layer) in self.layers.iter().enumerate() {
            let z = affine(&acts[l], layer);
            let a = if l < last { z.mapv(relu) } else { z.clone() };
            pre.push(z);
            acts.push(a);
        }
        let y = &acts[last + 1];
        let loss = batch_loss(y, batch);
        let n = batch.len() as f64;
        let mut delta = y - &batch.targets;
        for (mut row, t) in delta.axis_iter_mut(Axis(0)).zip(batch.target_norms.iter()) {
            row /= n * t * t;
        }
        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let dw = delta.t().dot(&acts[l]);
            let db = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut next = delta.dot(&self.layers[l].w);
                Zip::from(&mut next).and(&pre[l - 1]).for_each(|d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = next;
            }
            grads.push(Layer { w: dw, b: db });
        }
        grads.reverse();
        Ok((loss, Gradients { layers: grads }))
    }

    fn check_input(&self, width: usize) -> Result<()> {
        if width != self.input_dim() {
            return Err(Error::Shape(format!(
                "inputs have width {width}, network expects {}",
                self.input_dim()
            )));
        }
        Ok(())
    }
}

fn check_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 || widths.contains(&0) {
        return Err(Error::Shape(format!("invalid layer widths {widths:?}")));
    }
    Ok(())
}

#[inline]
fn relu(v: f64) -> f64 {
    // NaN passes through so that training can report it
    if v <= 0.0 {
        0.0
    } else {
        v
    }
}

fn affine(a: &Array2<f64>, layer: &Layer) -> Array2<f64> {
    let mut z = a.dot(&layer.w.t());
    z += &layer.b;
    z
}

fn batch_loss(y: &Array2<f64>, batch: &Batch) -> f64 {
    let n = batch.len() as f64;
    let mut total = 0.0;
    for ((yr, tr), tn) in y.outer_iter().zip(batch.targets.outer_iter()).zip(batch.target_norms.iter()) {
        let e: f64 = yr.iter().zip(tr.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        total += e / (tn * tn);
    }
    total / (2.0 * n)
}

/// Gradients with the same layout as the model.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

/// Input rows, target rows and the target norms used by the loss.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    inputs: Array2<f64>,
    targets: Array2<f64>,
    target_norms: Array1<f64>,
}

impl Batch {
    pub fn new(inputs: Array2<f64>, targets: Array2<f64>) -> Result<Self> {
        if inputs.nrows() != targets.nrows() || inputs.nrows() == 0 {
            return Err(Error::Shape(format!(
                "batch has {} input rows and {} target rows",
                inputs.nrows(),
                targets.nrows()
            )));
        }
        let target_norms: Array1<f64> = targets.outer_iter().map(|r| r.dot(&r).sqrt()).collect();
        if let Some(k) = target_norms.iter().position(|v| !(*v > 0.0)) {
            return Err(Error::ZeroTargetNorm(k));
        }
        Ok(Self {
            inputs,
            targets,
            target_norms,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inputs(&self) -> ArrayView2<'_, f64> {
        self.inputs.view()
    }

    pub fn targets(&self) -> ArrayView2<'_, f64> {
        self.targets.view()
    }

    pub fn target_norms(&self) -> &Array1<f64> {
        &self.target_norms
    }

    /// Rows `range` as a new batch.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            inputs: self.inputs.slice(s![range.clone(), ..]).to_owned(),
            targets: self.targets.slice(s![range.clone(), ..]).to_owned(),
            target_norms: self.target_norms.slice(s![range]).to_owned(),
        }
    }
}

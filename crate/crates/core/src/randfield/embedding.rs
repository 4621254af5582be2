//! Circulant embedding sampler for stationary Gaussian fields on the
//! cell-midpoint lattice of a [`FineGrid`].

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{matern_cov, stream_rng, FieldKind, FieldRealization, MaternParams};
use crate::error::{Error, Result};
use crate::grid::FineGrid;

/// Negative embedding eigenvalues below `-TOL_EMBED * max` trigger padding.
const TOL_EMBED: f64 = 1e-10;
/// Largest padding factor per axis on top of the minimal embedding.
const MAX_PADDING: usize = 4;

/// Embedding setup for one covariance and grid; immutable and shareable.
pub struct GaussianSampler {
    params: MaternParams,
    grid: FineGrid,
    /// Torus size per axis.
    m: usize,
    /// `sqrt(max(lambda, 0) / m^2)` in row-major order.
    scale: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for GaussianSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GaussianSampler")
            .field("params", &self.params)
            .field("grid", &self.grid)
            .field("m", &self.m)
            .finish()
    }
}

impl GaussianSampler {
    pub fn new(params: MaternParams, grid: FineGrid) -> Result<Self> {
        params.validate()?;
        let n = grid.cells_per_axis();
        let h = grid.mesh_size();
        let mut planner = FftPlanner::new();
        let mut worst = (0.0, 0.0, 0);
        let mut factor = 1;
        while factor <= MAX_PADDING {
            let m = 2 * n * factor;
            let fft = planner.plan_fft_forward(m);
            // first row of the block-circulant matrix, symmetric extension
            let mut buf = vec![Complex64::new(0.0, 0.0); m * m];
            let lag = |k: usize| k.min(m - k) as f64 * h;
            for j in 0..m {
                let dy = lag(j);
                for i in 0..m {
                    let dx = lag(i);
                    buf[i + m * j].re = matern_cov(&params, (dx * dx + dy * dy).sqrt())?;
                }
            }
            fft2(&mut buf, m, fft.as_ref());
            let max = buf.iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max);
            let min = buf.iter().map(|c| c.re).fold(f64::INFINITY, f64::min);
            if min >= -TOL_EMBED * max {
                let mm = (m * m) as f64;
                let scale = buf.iter().map(|c| (c.re.max(0.0) / mm).sqrt()).collect();
                return Ok(Self {
                    params,
                    grid,
                    m,
                    scale,
                    fft,
                });
            }
            worst = (min, max, m);
            factor *= 2;
        }
        Err(Error::EmbeddingFailed {
            min_eigenvalue: worst.0,
            max_eigenvalue: worst.1,
            size: worst.2,
        })
    }

    pub fn params(&self) -> MaternParams {
        self.params
    }

    pub fn grid(&self) -> FineGrid {
        self.grid
    }

    /// Torus size per axis of the accepted embedding.
    pub fn embedding_size(&self) -> usize {
        self.m
    }

    /// Realization `index` of `seed`: realizations `2k` and `2k + 1` are the
    /// real and imaginary parts of the FFT drawn from stream `k`.
    pub fn sample(&self, seed: u64, index: u64) -> Result<FieldRealization> {
        let (re, im) = self.sample_pair(seed, index / 2)?;
        Ok(if index % 2 == 0 { re } else { im })
    }

    /// Both realizations of stream `pair`.
    pub fn sample_pair(&self, seed: u64, pair: u64) -> Result<(FieldRealization, FieldRealization)> {
        let mut rng = stream_rng(seed, pair);
        self.sample_with(&mut rng)
    }

    pub(crate) fn sample_with(&self, rng: &mut ChaCha8Rng) -> Result<(FieldRealization, FieldRealization)> {
        let m = self.m;
        let mut buf: Vec<Complex64> = self
            .scale
            .iter()
            .map(|&s| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(s * re, s * im)
            })
            .collect();
        fft2(&mut buf, m, self.fft.as_ref());
        let n = self.grid.cells_per_axis();
        let mut re = Vec::with_capacity(n * n);
        let mut im = Vec::with_capacity(n * n);
        for j in 0..n {
            for c in &buf[m * j..m * j + n] {
                re.push(c.re);
                im.push(c.im);
            }
        }
        Ok((
            FieldRealization::new(self.grid, re, FieldKind::Gaussian)?,
            FieldRealization::new(self.grid, im, FieldKind::Gaussian)?,
        ))
    }
}

/// In-place unnormalized 2D FFT of an `m x m` row-major array.
fn fft2(buf: &mut [Complex64], m: usize, fft: &dyn Fft<f64>) {
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    fft.process_with_scratch(buf, &mut scratch);
    let mut col = vec![Complex64::new(0.0, 0.0); m];
    for i in 0..m {
        for (j, c) in col.iter_mut().enumerate() {
            *c = buf[i + m * j];
        }
        fft.process_with_scratch(&mut col, &mut scratch);
        for (j, c) in col.iter().enumerate() {
            buf[i + m * j] = *c;
        }
    }
}

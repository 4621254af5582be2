//! Whittle-Matérn Gaussian random fields and lognormal coefficients.

mod bessel;
mod embedding;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::FineGrid;
use crate::io;

pub use bessel::{bessel_k0, bessel_k1, bessel_k_quadrature};
pub use embedding::GaussianSampler;

/// Covariance hyperparameters: variance, smoothness and correlation length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaternParams {
    pub sigma2: f64,
    pub nu: f64,
    pub kappa: f64,
}

impl MaternParams {
    pub fn new(sigma2: f64, nu: f64, kappa: f64) -> Result<Self> {
        let p = Self { sigma2, nu, kappa };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("sigma2", self.sigma2), ("nu", self.nu), ("kappa", self.kappa)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be positive")));
            }
        }
        Ok(())
    }
}

/// Whittle-Matérn covariance at distance `r`.
pub fn matern_cov(p: &MaternParams, r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::InvalidParameter(format!("negative distance {r}")));
    }
    if r == 0.0 {
        return Ok(p.sigma2);
    }
    let s = (2.0 * p.nu).sqrt() * r / p.kappa;
    let kernel = if p.nu == 1.0 {
        s * bessel_k1(s)
    } else {
        let norm = 2f64.powf(p.nu - 1.0) * statrs::function::gamma::gamma(p.nu);
        s.powf(p.nu) * bessel_k_quadrature(p.nu, s) / norm
    };
    // far tail underflows to 0 * inf in the generic branch
    Ok(if kernel.is_finite() { p.sigma2 * kernel } else { 0.0 })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Gaussian,
    Lognormal,
}

/// Cellwise field values on a fine grid (evaluated at cell midpoints).
#[derive(Clone, Debug, PartialEq)]
pub struct FieldRealization {
    grid: FineGrid,
    values: Vec<f64>,
    kind: FieldKind,
}

impl FieldRealization {
    pub fn new(grid: FineGrid, values: Vec<f64>, kind: FieldKind) -> Result<Self> {
        if values.len() != grid.num_cells() {
            return Err(Error::Shape(format!(
                "{} values for {} cells",
                values.len(),
                grid.num_cells()
            )));
        }
        if kind == FieldKind::Lognormal {
            if let Some((cell, &value)) = values.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
                return Err(Error::NonPositiveCoefficient { cell, value });
            }
        }
        Ok(Self { grid, values, kind })
    }

    pub fn grid(&self) -> FineGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    /// Writes `<stem>.bin` (little-endian f64) and `<stem>.json`.
    pub fn save(&self, stem: &Path, meta: serde_json::Value) -> Result<()> {
        let manifest = FieldManifest {
            coarse_cells: self.grid.parent().cells_per_axis(),
            ratio: self.grid.ratio(),
            cells_per_axis: self.grid.cells_per_axis(),
            kind: self.kind,
            meta,
        };
        io::write_f64_le(&stem.with_extension("bin"), &self.values)?;
        io::write_json(&stem.with_extension("json"), &manifest)
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let m: FieldManifest = io::read_json(&stem.with_extension("json"))?;
        let grid = FineGrid::new(crate::grid::CoarseGrid::with_cells(m.coarse_cells)?, m.ratio)?;
        let values = io::read_f64_le(&stem.with_extension("bin"))?;
        Self::new(grid, values, m.kind)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct FieldManifest {
    coarse_cells: usize,
    ratio: usize,
    cells_per_axis: usize,
    kind: FieldKind,
    #[serde(default)]
    meta: serde_json::Value,
}

/// Componentwise exponential.
pub fn to_lognormal(z: &FieldRealization) -> Result<FieldRealization> {
    if z.kind != FieldKind::Gaussian {
        return Err(Error::InvalidParameter("to_lognormal expects a Gaussian field".into()));
    }
    let values = z.values.iter().map(|v| v.exp()).collect();
    FieldRealization::new(z.grid, values, FieldKind::Lognormal)
}

/// `max / min` of a positive field.
pub fn contrast(a: &FieldRealization) -> Result<f64> {
    contrast_of(&a.values)
}

pub fn contrast_of(values: &[f64]) -> Result<f64> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (cell, &v) in values.iter().enumerate() {
        if !(v > 0.0) {
            return Err(Error::NonPositiveCoefficient { cell, value: v });
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok(hi / lo)
}

/// Seeded generator for stream `stream` of a seed. Realization `i` of any
/// dataset draws from its own stream, so results do not depend on batching.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes a sub-seed (e.g. a group index) into a base seed.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hierarchical field: `kappa ~ Unif[kappa_low, kappa_high]`, zero mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchicalParams {
    pub sigma2: f64,
    pub nu: f64,
    pub kappa_low: f64,
    pub kappa_high: f64,
}

impl HierarchicalParams {
    pub fn new(sigma2: f64, nu: f64, kappa_low: f64, kappa_high: f64) -> Result<Self> {
        let hp = Self {
            sigma2,
            nu,
            kappa_low,
            kappa_high,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        MaternParams::new(self.sigma2, self.nu, self.kappa_low)?;
        if !(self.kappa_high >= self.kappa_low) {
            return Err(Error::InvalidParameter(format!(
                "kappa range [{}, {}] is empty",
                self.kappa_low, self.kappa_high
            )));
        }
        Ok(())
    }

    pub fn with_kappa(&self, kappa: f64) -> MaternParams {
        MaternParams {
            sigma2: self.sigma2,
            nu: self.nu,
            kappa,
        }
    }

    /// The correlation length drawn for stream `index` of `seed`.
    pub fn draw_kappa(&self, seed: u64, index: u64) -> f64 {
        let mut rng = stream_rng(seed, index);
        self.kappa_from(&mut rng)
    }

    fn kappa_from(&self, rng: &mut ChaCha8Rng) -> f64 {
        let u: f64 = rng.random();
        self.kappa_low + u * (self.kappa_high - self.kappa_low)
    }
}

/// One centered Gaussian realization (the first of stream 0 of `seed`).
pub fn sample_gaussian(p: &MaternParams, grid: FineGrid, seed: u64) -> Result<FieldRealization> {
    GaussianSampler::new(*p, grid)?.sample(seed, 0)
}

/// Draws `kappa`, then a lognormal field with that correlation length. Both
/// draws come from stream `index` of `seed`.
pub fn sample_hierarchical(
    hp: &HierarchicalParams,
    grid: FineGrid,
    seed: u64,
    index: u64,
) -> Result<(f64, FieldRealization)> {
    let (kappa, z) = sample_hierarchical_gaussian(hp, grid, seed, index)?;
    Ok((kappa, to_lognormal(&z)?))
}

/// As [`sample_hierarchical`] but returns the underlying Gaussian field.
pub fn sample_hierarchical_gaussian(
    hp: &HierarchicalParams,
    grid: FineGrid,
    seed: u64,
    index: u64,
) -> Result<(f64, FieldRealization)> {
    let mut rng = stream_rng(seed, index);
    let kappa = hp.kappa_from(&mut rng);
    let sampler = GaussianSampler::new(hp.with_kappa(kappa), grid)?;
    let (z, _) = sampler.sample_with(&mut rng)?;
    Ok((kappa, z))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covariance_at_zero_is_variance() {
        let p = MaternParams::new(1.7, 1.0, 0.1).unwrap();
        assert_eq!(matern_cov(&p, 0.0).unwrap(), 1.7);
        assert!(matern_cov(&p, -1e-3).is_err());
        // continuity
        assert!((matern_cov(&p, 1e-9).unwrap() - 1.7).abs() < 1e-12);
    }

    #[test]
    fn covariance_reference_value() {
        let k = 1.0 / 64.0;
        let p = MaternParams::new(1.0, 1.0, k).unwrap();
        let s = 2f64.sqrt();
        let want = s * crate::testutil::bessel_k_oracle(1.0, s);
        let got = matern_cov(&p, k).unwrap();
        assert!(((got - want) / want).abs() < 1e-10, "{got} vs {want}");
    }

    #[test]
    fn covariance_strictly_decreasing() {
        for nu in [0.5, 1.0, 2.5] {
            let p = MaternParams::new(2.0, nu, 0.05).unwrap();
            let mut prev = matern_cov(&p, 0.0).unwrap();
            let mut r = 1e-5;
            while r < 0.5 {
                let c = matern_cov(&p, r).unwrap();
                assert!(c < prev && c > 0.0, "nu {nu}, r {r}");
                assert!(c <= p.sigma2);
                prev = c;
                r *= 1.5;
            }
        }
    }

    #[test]
    fn half_integer_closed_form() {
        // nu = 1/2 is the exponential kernel sigma^2 exp(-r / kappa)
        let p = MaternParams::new(1.3, 0.5, 0.2).unwrap();
        for r in [0.01, 0.1, 0.4, 1.0] {
            let want = 1.3 * (-r / 0.2f64).exp();
            assert!((matern_cov(&p, r).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn lognormal_and_contrast() {
        let grid = FineGrid::from_sizes(0.5, 0.25).unwrap();
        let z = FieldRealization::new(grid, vec![0.0; 16], FieldKind::Gaussian).unwrap();
        let a = to_lognormal(&z).unwrap();
        assert!(a.values().iter().all(|&v| v == 1.0));
        assert_eq!(contrast(&a).unwrap(), 1.0);
        assert!(to_lognormal(&a).is_err());

        let vals: Vec<f64> = (0..16).map(|k| (k as f64 - 7.0) * 0.3).collect();
        let z = FieldRealization::new(grid, vals.clone(), FieldKind::Gaussian).unwrap();
        let a = to_lognormal(&z).unwrap();
        for (x, y) in vals.iter().zip(a.values()) {
            assert_eq!(*y, x.exp());
        }
        let spread = 15.0 * 0.3;
        assert!((contrast(&a).unwrap() - f64::exp(spread)).abs() < 1e-9 * f64::exp(spread));
        assert_eq!(contrast_of(&[1.0, 10.0]).unwrap(), 10.0);
        assert!(contrast_of(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn lognormal_rejects_nonpositive() {
        let grid = FineGrid::from_sizes(0.5, 0.5).unwrap();
        assert!(FieldRealization::new(grid, vec![1.0, 1.0, -1.0, 1.0], FieldKind::Lognormal).is_err());
        assert!(FieldRealization::new(grid, vec![1.0; 3], FieldKind::Gaussian).is_err());
    }

    #[test]
    fn field_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let grid = FineGrid::from_sizes(0.25, 1.0 / 16.0).unwrap();
        let p = MaternParams::new(1.0, 1.0, 0.1).unwrap();
        let z = sample_gaussian(&p, grid, 7).unwrap();
        let stem = dir.path().join("z");
        z.save(&stem, serde_json::json!({"seed": 7})).unwrap();
        assert_eq!(FieldRealization::load(&stem).unwrap(), z);
    }
}

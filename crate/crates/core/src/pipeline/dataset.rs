use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{lognormal, Discretization};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::io;
use crate::mlp::PairSet;
use crate::randfield::{derive_seed, FieldRealization, GaussianSampler, MaternParams};

pub const PAIRS_FILE: &str = "pairs.bin";
pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT_VERSION: u32 = 1;

/// One block of realizations sharing Matérn parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupInfo {
    pub params: MaternParams,
    pub seed: u64,
    pub realizations: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    /// Index of the first pair of the group in the pair file.
    pub first_pair: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    /// The resolved configuration the dataset was generated from.
    pub config: ExperimentConfig,
    pub groups: Vec<GroupInfo>,
    /// Patches (coarse elements) per realization.
    pub elements: usize,
    pub input_len: usize,
    pub output_len: usize,
    /// Doubles per pair: `input_len + output_len`.
    pub pair_len: usize,
    pub num_pairs: usize,
    pub file: String,
}

impl DatasetManifest {
    pub fn total_split(&self) -> (usize, usize, usize) {
        self.groups
            .iter()
            .fold((0, 0, 0), |(a, b, c), g| (a + g.train, b + g.val, c + g.test))
    }
}

/// Realization counts `(train, val, test)` of the 80:10:10 rule: validation
/// and test get `floor(n / 10)` each, training the rest.
pub fn split_counts(n: usize) -> (usize, usize, usize) {
    let tenth = n / 10;
    (n - 2 * tenth, tenth, tenth)
}

/// Input and target rows of every patch of one realization.
pub(crate) fn realization_pairs(disc: &Discretization, z: &FieldRealization) -> Result<Vec<f64>> {
    let a = lognormal(z)?;
    let locals = disc.local_surrogates(&a)?;
    let inputs = disc.patch_inputs(z)?;
    let mut out = Vec::with_capacity(locals.len() * (disc.input_len() + disc.output_len()));
    for (row, local) in inputs.outer_iter().zip(&locals) {
        out.extend(row.iter());
        out.extend_from_slice(local.vec());
    }
    Ok(out)
}

/// Computes pair blocks for `0..count` in parallel chunks and hands them to
/// `sink` in realization order.
pub(crate) fn generate_ordered<F, S>(count: usize, make: F, mut sink: S) -> Result<()>
where
    F: Fn(usize) -> Result<Vec<f64>> + Sync,
    S: FnMut(usize, Vec<f64>) -> Result<()>,
{
    let chunk = 2 * rayon::current_num_threads().max(1);
    let mut start = 0;
    while start < count {
        let end = (start + chunk).min(count);
        let blocks: Vec<Result<Vec<f64>>> = (start..end)
            .into_par_iter()
            .map(|i| make(i).map_err(|e| Error::Realization {
                index: i,
                source: Box::new(e),
            }))
            .collect();
        for (i, b) in (start..end).zip(blocks) {
            sink(i, b?)?;
        }
        start = end;
    }
    Ok(())
}

/// Samples the realizations of every group, computes patch inputs `R_T Z`
/// and targets `vec(S_{exp Z, T})`, and writes `pairs.bin` plus
/// `manifest.json` into `dir`.
pub fn generate_dataset(cfg: &ExperimentConfig, dir: &Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    if cfg.realizations == 0 {
        return Err(Error::InvalidParameter("realizations must be positive".into()));
    }
    let disc = Discretization::from_config(cfg)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::File {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let elements = disc.coarse.num_elements();
    let pairs_path = dir.join(PAIRS_FILE);
    let file = File::create(&pairs_path).map_err(|e| Error::File {
        path: pairs_path.clone(),
        source: e,
    })?;
    let mut w = BufWriter::new(file);
    let mut groups = Vec::new();
    let mut first_pair = 0;
    for (g, params) in cfg.coefficient.groups().into_iter().enumerate() {
        let seed = derive_seed(cfg.seed, g as u64);
        let sampler = GaussianSampler::new(params, disc.field)?;
        generate_ordered(
            cfg.realizations,
            |i| {
                let z = sampler.sample(seed, i as u64)?;
                realization_pairs(&disc, &z)
            },
            |_, block| io::write_f64s(&mut w, &block),
        )?;
        let (train, val, test) = split_counts(cfg.realizations);
        groups.push(GroupInfo {
            params,
            seed,
            realizations: cfg.realizations,
            train,
            val,
            test,
            first_pair,
        });
        first_pair += cfg.realizations * elements;
    }
    w.flush()?;
    let manifest = DatasetManifest {
        version: FORMAT_VERSION,
        config: cfg.clone(),
        groups,
        elements,
        input_len: disc.input_len(),
        output_len: disc.output_len(),
        pair_len: disc.input_len() + disc.output_len(),
        num_pairs: first_pair,
        file: PAIRS_FILE.into(),
    };
    io::write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// A dataset split into pair sets. Hierarchical groups are pooled.
#[derive(Clone, Debug)]
pub struct LoadedDataset {
    pub manifest: DatasetManifest,
    pub dir: PathBuf,
    pub train: PairSet,
    pub val: PairSet,
    pub test: PairSet,
}

pub fn load_dataset(dir: &Path) -> Result<LoadedDataset> {
    let manifest: DatasetManifest = io::read_json(&dir.join(MANIFEST_FILE))?;
    if manifest.version != FORMAT_VERSION {
        return Err(Error::Dataset(format!("unsupported dataset version {}", manifest.version)));
    }
    if manifest.pair_len != manifest.input_len + manifest.output_len {
        return Err(Error::Dataset("pair length does not match input and output lengths".into()));
    }
    let path = dir.join(&manifest.file);
    let values = io::read_f64_le(&path)?;
    if values.len() != manifest.num_pairs * manifest.pair_len {
        return Err(Error::Dataset(format!(
            "{} holds {} doubles, manifest expects {} pairs of {}",
            path.display(),
            values.len(),
            manifest.num_pairs,
            manifest.pair_len
        )));
    }
    let mut rows: [Vec<usize>; 3] = Default::default();
    for g in &manifest.groups {
        if g.train + g.val + g.test != g.realizations {
            return Err(Error::Dataset("split counts do not add up".into()));
        }
        for r in 0..g.realizations {
            let split = if r < g.train {
                0
            } else if r < g.train + g.val {
                1
            } else {
                2
            };
            let first = g.first_pair + r * manifest.elements;
            rows[split].extend(first..first + manifest.elements);
        }
    }
    let take = |idx: &[usize]| -> Result<PairSet> {
        let (m, o, p) = (manifest.input_len, manifest.output_len, manifest.pair_len);
        let mut x = Array2::zeros((idx.len(), m));
        let mut t = Array2::zeros((idx.len(), o));
        for (k, &i) in idx.iter().enumerate() {
            let pair = &values[i * p..(i + 1) * p];
            x.row_mut(k).assign(&ndarray::ArrayView1::from(&pair[..m]));
            t.row_mut(k).assign(&ndarray::ArrayView1::from(&pair[m..]));
        }
        PairSet::new(x, t).map_err(|e| match e {
            Error::ZeroTargetNorm(row) => Error::Dataset(format!("pair {} has a zero target", idx[row])),
            e => e,
        })
    };
    Ok(LoadedDataset {
        train: take(&rows[0])?,
        val: take(&rows[1])?,
        test: take(&rows[2])?,
        manifest,
        dir: dir.to_path_buf(),
    })
}

//! Binary checkpoints: an 8-byte magic, the little-endian `u64` length of a
//! JSON header, the header, then every array as little-endian `f64`s in
//! header order.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Activation, AdamState, Layer, MlpModel};
use crate::error::{Error, Result};
use crate::io::{decode_f64s, write_f64s};

const MAGIC: &[u8; 8] = b"SLODMLP\0";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    layer_dims: Vec<(usize, usize)>,
    activations: Vec<Activation>,
    arrays: Vec<ArrayEntry>,
    adam_steps: Option<u64>,
    meta: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArrayEntry {
    name: String,
    len: usize,
}

/// A model, optionally with optimizer state, and free-form metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: MlpModel,
    pub adam: Option<AdamState>,
    pub meta: serde_json::Value,
}

impl Checkpoint {
    /// Fails unless the stored widths equal `widths`.
    pub fn expect_widths(&self, widths: &[usize]) -> Result<()> {
        let have = self.model.widths();
        if have != widths {
            return Err(Error::Checkpoint(format!(
                "layer widths {have:?} do not match the expected {widths:?}"
            )));
        }
        Ok(())
    }
}

fn arrays<'a>(prefix: &str, layers: &'a [Layer]) -> Vec<(String, &'a [f64])> {
    let mut out = Vec::with_capacity(2 * layers.len());
    for (l, layer) in layers.iter().enumerate() {
        out.push((format!("{prefix}W{}", l + 1), layer.w.as_slice().expect("standard layout")));
        out.push((format!("{prefix}b{}", l + 1), layer.b.as_slice().expect("standard layout")));
    }
    out
}

pub fn save_checkpoint(path: &Path, model: &MlpModel, adam: Option<&AdamState>, meta: serde_json::Value) -> Result<()> {
    let mut blocks = arrays("", model.layers());
    if let Some(s) = adam {
        blocks.extend(arrays("adam_m.", &s.m));
        blocks.extend(arrays("adam_v.", &s.v));
    }
    let header = Header {
        version: VERSION,
        layer_dims: model.layer_dims(),
        activations: model.activations(),
        arrays: blocks
            .iter()
            .map(|(name, data)| ArrayEntry {
                name: name.clone(),
                len: data.len(),
            })
            .collect(),
        adam_steps: adam.map(|s| s.t),
        meta,
    };
    let json = serde_json::to_vec(&header)?;
    let file_err = |source| Error::File {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(file_err)?);
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for (_, data) in &blocks {
        write_f64s(&mut w, data)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|source| Error::File {
            path: path.to_path_buf(),
            source,
        })?;
    let bad = |msg: &str| Error::Checkpoint(format!("{}: {msg}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a network checkpoint"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body)?;
    if header.version != VERSION {
        return Err(bad(&format!("unsupported version {}", header.version)));
    }
    let mut values = decode_f64s(&bytes[16 + hlen..])?.into_iter();
    let expected: usize = header.arrays.iter().map(|a| a.len).sum();
    if values.len() != expected {
        return Err(bad(&format!("{} values stored, header lists {expected}", values.len())));
    }
    let mut take = |name: &str, len: usize, entry: Option<&ArrayEntry>| -> Result<Vec<f64>> {
        match entry {
            Some(e) if e.name == name && e.len == len => Ok(values.by_ref().take(len).collect()),
            _ => Err(bad(&format!("missing or misplaced array {name}"))),
        }
    };
    let mut entries = header.arrays.iter();
    let mut read_layers = |prefix: &str| -> Result<Vec<Layer>> {
        header
            .layer_dims
            .iter()
            .enumerate()
            .map(|(l, &(o, i))| {
                let w = take(&format!("{prefix}W{}", l + 1), o * i, entries.next())?;
                let b = take(&format!("{prefix}b{}", l + 1), o, entries.next())?;
                Ok(Layer {
                    w: Array2::from_shape_vec((o, i), w).map_err(|e| bad(&e.to_string()))?,
                    b: Array1::from(b),
                })
            })
            .collect()
    };
    let model = MlpModel::from_layers(read_layers("")?)?;
    if model.activations() != header.activations {
        return Err(bad("activation tags do not match the ReLU/identity layout"));
    }
    let adam = match header.adam_steps {
        Some(t) => {
            let m = read_layers("adam_m.")?;
            let v = read_layers("adam_v.")?;
            Some(AdamState { m, v, t })
        }
        None => None,
    };
    Ok(Checkpoint {
        model,
        adam,
        meta: header.meta,
    })
}

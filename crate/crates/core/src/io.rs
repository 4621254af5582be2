//! Little-endian array files and JSON manifests.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::File {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_f64_le(path: &Path, values: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(file_err(path))?);
    write_f64s(&mut w, values)?;
    w.flush().map_err(file_err(path))?;
    Ok(())
}

pub fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_f64_le(path: &Path) -> Result<Vec<f64>> {
    let mut bytes = Vec::new();
    File::open(path)
        .map_err(file_err(path))?
        .read_to_end(&mut bytes)
        .map_err(file_err(path))?;
    decode_f64s(&bytes)
}

pub fn decode_f64s(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::Shape(format!("{} bytes is not a whole number of f64", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(file_err(path))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(file_err(path))?;
    w.flush().map_err(file_err(path))?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let r = BufReader::new(File::open(path).map_err(file_err(path))?);
    Ok(serde_json::from_reader(r)?)
}

/// Writes rows of a CSV file with a header. Values use Rust's shortest
/// round-trip float formatting.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(file_err(path))?);
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        let line: Vec<String> = row
            .iter()
            .map(|v| if v.is_nan() { String::new() } else { format!("{v:e}") })
            .collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

//! Feature files: magic `SEGF`, `u32` version 1, `u32` F, `u64` T, then
//! T×F little-endian `f32` values, one row per frame.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SEGF";
pub const VERSION: u32 = 1;

/// Writes a (F, T) feature matrix.
pub fn write_features_to<W: Write>(mut w: W, features: &Array2<f32>) -> Result<()> {
    let (f, t) = features.dim();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(f as u32).to_le_bytes())?;
    w.write_all(&(t as u64).to_le_bytes())?;
    for frame in features.columns() {
        for &v in frame {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a feature file back into a (F, T) matrix.
pub fn read_features_from<R: Read>(mut r: R) -> Result<Array2<f32>> {
    let mut header = [0u8; 20];
    r.read_exact(&mut header)
        .map_err(|_| Error::Format("truncated feature file header".into()))?;
    if &header[..4] != MAGIC {
        return Err(Error::Format("not a SEGF feature file".into()));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Format(format!("unsupported feature file version {version}")));
    }
    let f = u32::from_le_bytes(header[8..12].try_into().expect("4 bytes")) as usize;
    let t = u64::from_le_bytes(header[12..20].try_into().expect("8 bytes")) as usize;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let expected = f.checked_mul(t).and_then(|n| n.checked_mul(4));
    if expected != Some(payload.len()) {
        return Err(Error::Format(format!(
            "header says {t} frames × {f} dims but payload has {} bytes",
            payload.len()
        )));
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Array2::from_shape_vec((t, f), values)
        .expect("checked length")
        .reversed_axes()
        .as_standard_layout()
        .into_owned())
}

pub fn write_features(path: &Path, features: &Array2<f32>) -> Result<()> {
    write_features_to(BufWriter::new(File::create(path)?), features)
}

pub fn read_features(path: &Path) -> Result<Array2<f32>> {
    read_features_from(BufReader::new(File::open(path)?))
}

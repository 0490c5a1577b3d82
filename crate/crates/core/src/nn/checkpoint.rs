//! Binary model file.
//!
//! Layout (little endian): magic `SEGM1`, `u32` header length, JSON header,
//! `u32` tensor count, then per tensor `u32` name length, UTF-8 name,
//! `u32` rank, `u64` dims and `f32` values in row-major order.
//! Feature normalization is stored as tensors `norm.mean` and `norm.std`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use super::config::TcnConfig;
use super::tcn::Tcn;
use crate::error::{Error, Result};
use crate::features::{ExtractOptions, FeatureExtractor, FeatureRecipe, FeatureStats};
use crate::labeling::Task;

pub const MAGIC: &[u8; 5] = b"SEGM1";

/// A trained labeler with everything needed to run it on new audio.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationModel {
    pub task: Task,
    pub recipe: FeatureRecipe,
    /// IPD microphone pairs (0-based original numbering).
    pub ipd_pairs: Vec<(usize, usize)>,
    pub stats: FeatureStats,
    pub net: Tcn<f32>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    task: Task,
    recipe: FeatureRecipe,
    ipd_pairs: Vec<(usize, usize)>,
    model: TcnConfig,
}

impl SegmentationModel {
    pub fn extractor(&self, options: ExtractOptions) -> FeatureExtractor {
        FeatureExtractor::new(
            self.recipe.clone(),
            ExtractOptions {
                ipd_pairs: self.ipd_pairs.clone(),
                ..options
            },
        )
    }

    /// Standardizes raw features with the training statistics.
    pub fn normalize(&self, features: &Array2<f32>) -> Result<Array2<f32>> {
        let mut out = features.clone();
        self.stats.apply(&mut out)?;
        Ok(out)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_vec(&Header {
            task: self.task,
            recipe: self.recipe.clone(),
            ipd_pairs: self.ipd_pairs.clone(),
            model: self.net.config().clone(),
        })?;
        w.write_all(MAGIC)?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(&header)?;
        let mean = ArrayD::from_shape_vec(IxDyn(&[self.stats.dim()]), self.stats.mean.clone()).expect("1-D");
        let std = ArrayD::from_shape_vec(IxDyn(&[self.stats.dim()]), self.stats.std.clone()).expect("1-D");
        let mut tensors: Vec<(String, ndarray::ArrayViewD<'_, f32>)> =
            vec![("norm.mean".into(), mean.view()), ("norm.std".into(), std.view())];
        tensors.extend(self.net.tensors());
        w.write_all(&(tensors.len() as u32).to_le_bytes())?;
        for (name, t) in tensors {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.ndim() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for &v in t.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a segmentation model file".into()));
        }
        let header_len = read_u32(&mut r)? as usize;
        let mut header = vec![0u8; header_len];
        r.read_exact(&mut header)?;
        let header: Header = serde_json::from_slice(&header)?;
        let mut net = Tcn::<f32>::zeros(&header.model)?;
        let count = read_u32(&mut r)? as usize;
        let mut loaded = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
            let rank = read_u32(&mut r)? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                dims.push(u64::from_le_bytes(b) as usize);
            }
            let len: usize = dims.iter().product();
            let mut bytes = vec![0u8; len * 4];
            r.read_exact(&mut bytes)?;
            let values = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let t = ArrayD::from_shape_vec(IxDyn(&dims), values).map_err(|e| Error::Format(e.to_string()))?;
            loaded.push((name, t));
        }
        let mut take = |want: &str| -> Result<ArrayD<f32>> {
            let pos = loaded
                .iter()
                .position(|(n, _)| n == want)
                .ok_or_else(|| Error::Format(format!("missing tensor {want}")))?;
            Ok(loaded.swap_remove(pos).1)
        };
        let stats = FeatureStats {
            mean: take("norm.mean")?.into_raw_vec_and_offset().0,
            std: take("norm.std")?.into_raw_vec_and_offset().0,
        };
        if stats.dim() != header.model.input_dim || stats.std.len() != stats.dim() {
            return Err(Error::Format(
                "normalization size does not match the model input".into(),
            ));
        }
        let names: Vec<String> = net.tensors().into_iter().map(|(n, _)| n).collect();
        for (name, mut dst) in names.iter().zip(net.tensors_mut()) {
            let src = take(name)?;
            if src.shape() != dst.shape() {
                return Err(Error::Format(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    src.shape(),
                    dst.shape()
                )));
            }
            dst.assign(&src);
        }
        if let Some((name, _)) = loaded.first() {
            return Err(Error::Format(format!("unexpected tensor {name}")));
        }
        Ok(Self {
            task: header.task,
            recipe: header.recipe,
            ipd_pairs: header.ipd_pairs,
            stats,
            net,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

//! Feature datasets on disk: `manifest.json` describing shape, labels,
//! split, clip range, filter tolerance and STFT settings, next to
//! `features.bin`, a little-endian tensor of `u8` pixels (post-quantization)
//! or `f32` values (pre-quantization), items back to back in row-major order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClipRange, FeatureImage, FeatureKind, StftConfig};
use crate::error::{Error, Result};
use crate::grid::Grid;

pub const MANIFEST: &str = "manifest.json";
pub const BLOB: &str = "features.bin";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    U8,
    F32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemLabel {
    pub claimed: String,
    pub truth: String,
    pub capture_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub kind: FeatureKind,
    pub encoding: Encoding,
    /// `[items, rows, cols]`.
    pub shape: [usize; 3],
    pub depth: Option<u32>,
    pub split: String,
    pub clip: Option<ClipRange>,
    pub theta: f64,
    pub stft: StftConfig,
    pub labels: Vec<ItemLabel>,
}

fn write_dataset(dir: &Path, manifest: &FeatureManifest, blob: &[u8]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let m = dir.join(MANIFEST);
    fs::write(&m, serde_json::to_vec_pretty(manifest)?).map_err(|e| Error::io(&m, e))?;
    let b = dir.join(BLOB);
    fs::write(&b, blob).map_err(|e| Error::io(&b, e))
}

/// Write quantized images. `manifest.shape` and `encoding` are filled in.
pub fn write_images(dir: &Path, mut manifest: FeatureManifest, images: &[FeatureImage]) -> Result<()> {
    let size = images.first().map_or(0, |i| i.size);
    if images.iter().any(|i| i.size != size) {
        return Err(Error::Input("images differ in size".into()));
    }
    if manifest.labels.len() != images.len() {
        return Err(Error::Input("label count differs from image count".into()));
    }
    manifest.shape = [images.len(), size, size];
    manifest.encoding = Encoding::U8;
    manifest.depth = images.first().map(|i| i.depth);
    let blob: Vec<u8> = images.iter().flat_map(|i| i.pixels.iter().copied()).collect();
    write_dataset(dir, &manifest, &blob)
}

/// Write pre-quantization matrices as `f32`.
pub fn write_matrices(dir: &Path, mut manifest: FeatureManifest, matrices: &[Grid<f64>]) -> Result<()> {
    let shape = matrices.first().map_or((0, 0), |m| m.shape());
    if matrices.iter().any(|m| m.shape() != shape) {
        return Err(Error::Input("matrices differ in shape".into()));
    }
    if manifest.labels.len() != matrices.len() {
        return Err(Error::Input("label count differs from matrix count".into()));
    }
    manifest.shape = [matrices.len(), shape.0, shape.1];
    manifest.encoding = Encoding::F32;
    manifest.depth = None;
    let blob: Vec<u8> = matrices
        .iter()
        .flat_map(|m| m.as_slice().iter().flat_map(|&v| (v as f32).to_le_bytes()))
        .collect();
    write_dataset(dir, &manifest, &blob)
}

pub fn read_manifest(dir: &Path) -> Result<FeatureManifest> {
    let m = dir.join(MANIFEST);
    let bytes = fs::read(&m).map_err(|e| Error::io(&m, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Format(format!("{}: {e}", m.display())))
}

fn read_blob(dir: &Path, manifest: &FeatureManifest, width: usize) -> Result<Vec<u8>> {
    let b = dir.join(BLOB);
    let blob = fs::read(&b).map_err(|e| Error::io(&b, e))?;
    let [n, r, c] = manifest.shape;
    if blob.len() != n * r * c * width {
        return Err(Error::Format(format!(
            "{}: {} bytes, manifest shape {:?} needs {}",
            b.display(),
            blob.len(),
            manifest.shape,
            n * r * c * width
        )));
    }
    if manifest.labels.len() != n {
        return Err(Error::Format("manifest label count differs from shape".into()));
    }
    Ok(blob)
}

pub fn read_images(dir: &Path) -> Result<(FeatureManifest, Vec<FeatureImage>)> {
    let manifest = read_manifest(dir)?;
    if manifest.encoding != Encoding::U8 || manifest.shape[1] != manifest.shape[2] {
        return Err(Error::Format("dataset does not hold square u8 images".into()));
    }
    let blob = read_blob(dir, &manifest, 1)?;
    let depth = manifest
        .depth
        .ok_or_else(|| Error::Format("u8 dataset without depth".into()))?;
    let size = manifest.shape[1];
    let images = blob
        .chunks_exact(size * size)
        .map(|px| FeatureImage {
            size,
            depth,
            pixels: px.to_vec(),
            source: manifest.kind,
        })
        .collect::<Vec<_>>();
    let max = ((1u32 << depth) - 1) as u8;
    if images.iter().any(|i| i.pixels.iter().any(|&p| p > max)) {
        return Err(Error::Format(format!("pixel exceeds {depth}-bit range")));
    }
    Ok((manifest, images))
}

pub fn read_matrices(dir: &Path) -> Result<(FeatureManifest, Vec<Grid<f64>>)> {
    let manifest = read_manifest(dir)?;
    if manifest.encoding != Encoding::F32 {
        return Err(Error::Format("dataset does not hold f32 matrices".into()));
    }
    let blob = read_blob(dir, &manifest, 4)?;
    let [_, r, c] = manifest.shape;
    let matrices = blob
        .chunks_exact(r * c * 4)
        .map(|chunk| {
            let data = chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect();
            Grid::from_vec(r, c, data)
        })
        .collect();
    Ok((manifest, matrices))
}

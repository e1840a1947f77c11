//! On-disk capture datasets.
//!
//! A dataset directory holds `manifest.jsonl`, one JSON record per capture,
//! plus two payload files per capture, `<capture_id>.high.iq` and
//! `<capture_id>.low.iq`. Payloads are raw little-endian `f32` samples with
//! I and Q interleaved (`I0 Q0 I1 Q1 ...`).

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{BasebandSignal, CapturePair, ChannelMeta, Environment, PowerLevel};
use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureRecord {
    pub capture_id: String,
    pub device_id: String,
    pub claimed_id: String,
    pub env: Option<Environment>,
    pub seed: u64,
    pub high_dbm: f64,
    pub low_dbm: f64,
    pub samples: usize,
    pub sample_rate: f64,
    pub split: Option<String>,
}

impl CaptureRecord {
    pub fn high_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.high.iq", self.capture_id))
    }

    pub fn low_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.low.iq", self.capture_id))
    }
}

pub fn encode_iq(samples: &[Complex64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(samples.len() * 8);
    for z in samples {
        out.extend_from_slice(&(z.re as f32).to_le_bytes());
        out.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    out
}

pub fn decode_iq(bytes: &[u8]) -> Result<Vec<Complex64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::Format(format!(
            "iq payload of {} bytes is not a whole number of samples",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            Complex64::new(re as f64, im as f64)
        })
        .collect())
}

/// Appends captures to a dataset directory.
pub struct DatasetWriter {
    dir: PathBuf,
    manifest: BufWriter<File>,
}

impl DatasetWriter {
    pub fn create(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = dir.join(MANIFEST);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(DatasetWriter {
            dir,
            manifest: BufWriter::new(file),
        })
    }

    pub fn write(
        &mut self,
        capture_id: &str,
        pair: &CapturePair,
        split: Option<&str>,
    ) -> Result<CaptureRecord> {
        let record = CaptureRecord {
            capture_id: capture_id.to_string(),
            device_id: pair.device_id.clone(),
            claimed_id: pair.claimed_id.clone(),
            env: pair.channel_meta.environment,
            seed: pair.channel_meta.seed,
            high_dbm: PowerLevel::HIGH.tx_power_dbm,
            low_dbm: PowerLevel::LOW.tx_power_dbm,
            samples: pair.high.len(),
            sample_rate: pair.high.sample_rate,
            split: split.map(str::to_string),
        };
        for (path, sig) in [
            (record.high_path(&self.dir), &pair.high),
            (record.low_path(&self.dir), &pair.low),
        ] {
            fs::write(&path, encode_iq(&sig.samples)).map_err(|e| Error::io(&path, e))?;
        }
        let line = serde_json::to_string(&record)?;
        writeln!(self.manifest, "{line}").map_err(|e| Error::io(&self.dir, e))?;
        Ok(record)
    }

    pub fn finish(mut self) -> Result<()> {
        self.manifest
            .flush()
            .map_err(|e| Error::io(&self.dir, e))
    }
}

pub fn read_manifest(dir: &Path) -> Result<Vec<CaptureRecord>> {
    let path = dir.join(MANIFEST);
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| {
            Error::Format(format!("{}:{}: {e}", path.display(), i + 1))
        })?);
    }
    Ok(out)
}

fn read_payload(path: &Path, expected: usize) -> Result<Vec<Complex64>> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let samples = decode_iq(&bytes)?;
    if samples.len() != expected {
        return Err(Error::Format(format!(
            "{}: expected {expected} samples, found {}",
            path.display(),
            samples.len()
        )));
    }
    Ok(samples)
}

pub fn load_capture(dir: &Path, record: &CaptureRecord) -> Result<CapturePair> {
    let high = read_payload(&record.high_path(dir), record.samples)?;
    let low = read_payload(&record.low_path(dir), record.samples)?;
    Ok(CapturePair {
        high: BasebandSignal::new(high, record.sample_rate)?,
        low: BasebandSignal::new(low, record.sample_rate)?,
        device_id: record.device_id.clone(),
        claimed_id: record.claimed_id.clone(),
        channel_meta: ChannelMeta {
            environment: record.env,
            seed: record.seed,
        },
    })
}

/// Fail if any capture seed appears in more than one split.
pub fn check_split_hygiene(records: &[CaptureRecord]) -> Result<()> {
    use std::collections::HashMap;
    let mut seen: HashMap<u64, &Option<String>> = HashMap::new();
    for r in records {
        if let Some(prev) = seen.insert(r.seed, &r.split) {
            if prev != &r.split {
                return Err(Error::Input(format!(
                    "capture seed {} appears in splits {:?} and {:?}",
                    r.seed, prev, r.split
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iq_codec_is_interleaved_little_endian() {
        let bytes = encode_iq(&[Complex64::new(1.0, -2.0)]);
        assert_eq!(&bytes[0..4], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[4..8], &(-2.0f32).to_le_bytes());
        assert_eq!(decode_iq(&bytes).unwrap(), vec![Complex64::new(1.0, -2.0)]);
        assert!(decode_iq(&bytes[..7]).is_err());
    }
}

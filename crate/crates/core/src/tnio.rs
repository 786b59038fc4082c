//! Binary serialization for MPS/MPO: a JSON manifest describing shapes plus
//! a packed little-endian float64 payload with interleaved (re, im) values.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mpo::Mpo;
use crate::mps::Mps;
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainManifest {
    /// "mps" or "mpo".
    pub kind: String,
    pub n_sites: usize,
    pub shapes: Vec<Vec<usize>>,
    pub bond_dims: Vec<usize>,
    pub endianness: String,
    pub payload: String,
    pub values: usize,
}

fn payload_path(manifest_path: &Path, manifest: &TrainManifest) -> PathBuf {
    manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&manifest.payload)
}

fn write_train(
    manifest_path: &Path,
    kind: &str,
    tensors: &[DenseTensor],
    bond_dims: Vec<usize>,
) -> Result<()> {
    let payload_name = {
        let stem = manifest_path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("train");
        format!("{stem}.bin")
    };
    let mut values = 0usize;
    let mut bytes: Vec<u8> = Vec::new();
    for t in tensors {
        for z in t.data() {
            bytes.extend_from_slice(&z.re.to_le_bytes());
            bytes.extend_from_slice(&z.im.to_le_bytes());
            values += 1;
        }
    }
    let manifest = TrainManifest {
        kind: kind.to_string(),
        n_sites: tensors.len(),
        shapes: tensors.iter().map(|t| t.shape().to_vec()).collect(),
        bond_dims,
        endianness: "little".to_string(),
        payload: payload_name,
        values,
    };
    fs::write(payload_path(manifest_path, &manifest), &bytes)?;
    fs::write(manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn read_train(manifest_path: &Path, kind: &str) -> Result<Vec<DenseTensor>> {
    let manifest: TrainManifest =
        serde_json::from_str(&fs::read_to_string(manifest_path)?)?;
    if manifest.kind != kind {
        return Err(Error::Serde(format!(
            "manifest kind {} where {kind} was expected",
            manifest.kind
        )));
    }
    if manifest.endianness != "little" {
        return Err(Error::Serde("unsupported endianness tag".into()));
    }
    let bytes = fs::read(payload_path(manifest_path, &manifest))?;
    if bytes.len() != manifest.values * 16 {
        return Err(Error::Serde(format!(
            "payload holds {} bytes, manifest expects {}",
            bytes.len(),
            manifest.values * 16
        )));
    }
    let mut vals = Vec::with_capacity(manifest.values);
    for chunk in bytes.chunks_exact(16) {
        let re = f64::from_le_bytes(chunk[0..8].try_into().expect("8 bytes"));
        let im = f64::from_le_bytes(chunk[8..16].try_into().expect("8 bytes"));
        vals.push(Complex64::new(re, im));
    }
    let mut tensors = Vec::with_capacity(manifest.n_sites);
    let mut offset = 0usize;
    for shape in &manifest.shapes {
        let len: usize = shape.iter().product();
        if offset + len > vals.len() {
            return Err(Error::Serde("payload shorter than shapes imply".into()));
        }
        tensors.push(DenseTensor::from_data(shape, vals[offset..offset + len].to_vec())?);
        offset += len;
    }
    if offset != vals.len() {
        return Err(Error::Serde("payload longer than shapes imply".into()));
    }
    Ok(tensors)
}

pub fn save_mps(path: impl AsRef<Path>, s: &Mps) -> Result<()> {
    write_train(path.as_ref(), "mps", s.tensors(), s.bond_dims())
}

pub fn load_mps(path: impl AsRef<Path>) -> Result<Mps> {
    Mps::from_site_tensors(read_train(path.as_ref(), "mps")?)
}

pub fn save_mpo(path: impl AsRef<Path>, m: &Mpo) -> Result<()> {
    write_train(path.as_ref(), "mpo", m.tensors(), m.bond_dims())
}

pub fn load_mpo(path: impl AsRef<Path>) -> Result<Mpo> {
    Mpo::from_site_tensors(read_train(path.as_ref(), "mpo")?)
}

//! Dense matrix export: a flat file of little-endian `f64` values in
//! row-major order plus a JSON sidecar describing shape and axes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mps::{self, MpsMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub unit: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub rows: usize,
    pub cols: usize,
    pub order: String,
    pub dtype: String,
    pub row_axis: Option<Axis>,
    pub col_axis: Option<Axis>,
    /// Free-form provenance (parameters, source file, window count, ...).
    pub meta: serde_json::Value,
}

impl Sidecar {
    pub fn new(rows: usize, cols: usize, meta: serde_json::Value) -> Self {
        Self {
            rows,
            cols,
            order: "row-major".into(),
            dtype: "f64-le".into(),
            row_axis: None,
            col_axis: None,
            meta,
        }
    }

    /// Shape and axes of the 41 × 77 modulation grid.
    pub fn mps(meta: serde_json::Value) -> Self {
        Self {
            row_axis: Some(Axis {
                name: "temporal_modulation".into(),
                unit: "Hz".into(),
                values: mps::temporal_axis(),
            }),
            col_axis: Some(Axis {
                name: "spectral_modulation".into(),
                unit: "cyc/kHz".into(),
                values: mps::spectral_axis(),
            }),
            ..Self::new(mps::TEMPORAL_BINS, mps::SPECTRAL_BINS, meta)
        }
    }
}

fn sidecar_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

/// Writes `data` to `path` and the sidecar next to it (`.json` extension).
pub fn write_matrix(path: impl AsRef<Path>, data: &[f64], sidecar: &Sidecar) -> Result<()> {
    let path = path.as_ref();
    if data.len() != sidecar.rows * sidecar.cols {
        return Err(Error::DimensionMismatch {
            expected: sidecar.rows * sidecar.cols,
            found: data.len(),
        });
    }
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
    std::fs::write(path, bytes)?;
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(sidecar)?)?;
    Ok(())
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<(Vec<f64>, Sidecar)> {
    let path = path.as_ref();
    let sidecar: Sidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
    let bytes = std::fs::read(path)?;
    if bytes.len() != 8 * sidecar.rows * sidecar.cols {
        return Err(Error::data(format!(
            "{}: {} bytes, sidecar declares {} × {}",
            path.display(),
            bytes.len(),
            sidecar.rows,
            sidecar.cols
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((data, sidecar))
}

pub fn write_mps(path: impl AsRef<Path>, m: &MpsMatrix, meta: serde_json::Value) -> Result<()> {
    let mut meta = meta;
    if let serde_json::Value::Object(map) = &mut meta {
        map.insert("n_windows".into(), m.n_windows.into());
    }
    write_matrix(path, &mps::mps_feature_vector(m), &Sidecar::mps(meta))
}

pub fn read_mps(path: impl AsRef<Path>) -> Result<MpsMatrix> {
    let (data, side) = read_matrix(path)?;
    let mut m = mps::from_feature_vector(&data)?;
    m.n_windows = side.meta.get("n_windows").and_then(|v| v.as_u64()).unwrap_or(0) as usize;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let data = vec![0.1, -2.5, f64::MIN_POSITIVE, 1e300, 0.0, 7.0];
        let side = Sidecar::new(2, 3, serde_json::json!({"source": "test"}));
        write_matrix(&path, &data, &side).unwrap();
        let (back, side_back) = read_matrix(&path).unwrap();
        assert_eq!(back, data);
        assert_eq!(side_back, side);
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 48);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let side = Sidecar::new(2, 2, serde_json::Value::Null);
        assert!(write_matrix(dir.path().join("m.bin"), &[1.0], &side).is_err());
    }
}

//! Model files: versioned JSON with explicit field names.
//!
//! Schema (version 1):
//! ```json
//! {
//!   "version": 1,
//!   "abr_id": "bba",
//!   "t_b": 3,
//!   "t_w": 3,
//!   "degree": 5,
//!   "ladder_kbps": [300.0, ...],
//!   "scaling": [{"offset": ..., "half_range": ...}, ...],
//!   "coefficients": [ ... ]
//! }
//! ```
//! `scaling` has one entry per input in the order buffer history (oldest
//! first), bandwidth history (oldest first), previous bitrate; `coefficients`
//! follow the model's fixed monomial enumeration.

use std::fmt;
use std::fs;
use std::path::Path;

use cane_core::abr::BitrateLadder;
use cane_core::model::PolyModel;
use serde::{Deserialize, Serialize};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug)]
pub enum ModelFileError {
    Io(std::io::Error),
    Parse(serde_json::Error),
    SchemaVersionMismatch { found: u32, expected: u32 },
    Invalid(String),
}

impl fmt::Display for ModelFileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelFileError::Io(e) => write!(f, "io error: {e}"),
            ModelFileError::Parse(e) => write!(f, "model file parse error: {e}"),
            ModelFileError::SchemaVersionMismatch { found, expected } => {
                write!(f, "model schema version {found}, expected {expected}")
            }
            ModelFileError::Invalid(what) => write!(f, "invalid model file: {what}"),
        }
    }
}

impl std::error::Error for ModelFileError {}

impl From<std::io::Error> for ModelFileError {
    fn from(e: std::io::Error) -> Self {
        ModelFileError::Io(e)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ScalingEntry {
    offset: f64,
    half_range: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    abr_id: String,
    t_b: usize,
    t_w: usize,
    degree: usize,
    ladder_kbps: Vec<f64>,
    scaling: Vec<ScalingEntry>,
    coefficients: Vec<f64>,
}

pub fn save_model(model: &PolyModel, path: &Path) -> Result<(), ModelFileError> {
    let file = ModelFile {
        version: MODEL_SCHEMA_VERSION,
        abr_id: model.abr_id.clone(),
        t_b: model.t_b,
        t_w: model.t_w,
        degree: model.degree,
        ladder_kbps: model.ladder.levels_kbps.clone(),
        scaling: model
            .scaling
            .iter()
            .map(|&(offset, half_range)| ScalingEntry { offset, half_range })
            .collect(),
        coefficients: model.coefficients.clone(),
    };
    let json = serde_json::to_string_pretty(&file).map_err(ModelFileError::Parse)?;
    fs::write(path, json)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<PolyModel, ModelFileError> {
    let text = fs::read_to_string(path)?;
    let file: ModelFile = serde_json::from_str(&text).map_err(ModelFileError::Parse)?;
    if file.version != MODEL_SCHEMA_VERSION {
        return Err(ModelFileError::SchemaVersionMismatch {
            found: file.version,
            expected: MODEL_SCHEMA_VERSION,
        });
    }
    let ladder = BitrateLadder::new(file.ladder_kbps)
        .map_err(|e| ModelFileError::Invalid(e.to_string()))?;
    PolyModel::new(
        file.abr_id,
        file.t_b,
        file.t_w,
        file.degree,
        ladder,
        file.scaling.iter().map(|s| (s.offset, s.half_range)).collect(),
        file.coefficients,
    )
    .map_err(|e| ModelFileError::Invalid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use cane_core::model::{fit_poly_model, AbrDataset, DatasetRow, Split};
    use cane_core::rng::Rng;

    fn fitted_model() -> PolyModel {
        let mut rng = Rng::new(11);
        let rows: Vec<DatasetRow> = (0..120)
            .map(|_| {
                let b = rng.uniform(0.0, 30.0);
                let w = rng.uniform(100.0, 12000.0);
                let r = rng.uniform(300.0, 4300.0);
                DatasetRow {
                    buffer_history: vec![b, b * 0.9],
                    bandwidth_history: vec![w],
                    prev_bitrate: r,
                    target_bitrate: 0.2 * w + 0.1 * r + 10.0 * b,
                }
            })
            .collect();
        let data = AbrDataset {
            source_abr: "synthetic".into(),
            split: Split::Train,
            t_b: 1,
            t_w: 0,
            rows,
        };
        fit_poly_model(&data, 2, 1e-9, &BitrateLadder::default_six()).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let model = fitted_model();
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded, model);
    }

    #[test]
    fn rejects_wrong_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let model = fitted_model();
        save_model(&model, &path).unwrap();
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"version\": 1", "\"version\": 99");
        std::fs::write(&path, text).unwrap();
        match load_model(&path) {
            Err(ModelFileError::SchemaVersionMismatch { found: 99, expected: 1 }) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn rejects_truncated_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let model = fitted_model();
        save_model(&model, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() / 2]).unwrap();
        match load_model(&path) {
            Err(ModelFileError::Parse(_)) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }
}

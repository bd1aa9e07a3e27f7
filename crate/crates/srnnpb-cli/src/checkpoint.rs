//! Versioned checkpoint persistence.
//!
//! Layout: an 8-byte little-endian header length, a JSON header carrying the
//! format version, model config, array shapes, normalization metadata, and
//! training provenance, then the raw parameter arrays as little-endian f64
//! in exactly the declared order. Round-trips are bitwise lossless.

use std::fs;
use std::io::{Read as _, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use srnnpb::dataset::Normalization;
use srnnpb::model::{ModelConfig, ModelParams};
use srnnpb::training::LossBreakdown;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("unsupported checkpoint format version {found} (expected {FORMAT_VERSION})")]
    VersionMismatch { found: u32 },

    #[error("checkpoint shape inconsistency: {context}")]
    ShapeInconsistent { context: String },

    #[error("checkpoint truncated: expected {expected} payload bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("checkpoint header is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArraySpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

/// Training provenance stored alongside the parameters. `created_unix` is
/// the one field excluded from byte-identity comparisons between runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub epochs_completed: usize,
    pub final_loss: LossBreakdown,
    pub sequence_names: Vec<String>,
    pub sequence_lengths: Vec<usize>,
    pub dim_names: Vec<String>,
    pub created_unix: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format_version: u32,
    pub model_config: ModelConfig,
    pub n_sequences: usize,
    pub arrays: Vec<ArraySpec>,
    pub normalization: Option<Normalization>,
    pub provenance: Provenance,
}

/// Canonical array declaration order. Matches `ModelParams::to_flat`.
fn expected_arrays(config: &ModelConfig, n_sequences: usize) -> Vec<ArraySpec> {
    let z = config.z_dim();
    let h = config.hidden_dim;
    let d = config.input_dim;
    let mut arrays = Vec::new();
    for gate in ["i", "f", "g", "o"] {
        arrays.push(ArraySpec {
            name: format!("w_{gate}"),
            rows: h,
            cols: z,
        });
        arrays.push(ArraySpec {
            name: format!("u_{gate}"),
            rows: h,
            cols: h,
        });
        arrays.push(ArraySpec {
            name: format!("b_{gate}"),
            rows: 1,
            cols: h,
        });
    }
    arrays.push(ArraySpec {
        name: "w_out".into(),
        rows: d,
        cols: h,
    });
    arrays.push(ArraySpec {
        name: "b_out".into(),
        rows: 1,
        cols: d,
    });
    arrays.push(ArraySpec {
        name: "pb_mu".into(),
        rows: n_sequences,
        cols: config.pb_dim,
    });
    arrays.push(ArraySpec {
        name: "pb_log_sigma".into(),
        rows: n_sequences,
        cols: config.pb_dim,
    });
    arrays
}

pub fn save_checkpoint(
    params: &ModelParams,
    normalization: Option<&Normalization>,
    provenance: &Provenance,
    path: &Path,
) -> Result<(), CheckpointError> {
    let header = Header {
        format_version: FORMAT_VERSION,
        model_config: params.config.clone(),
        n_sequences: params.n_sequences(),
        arrays: expected_arrays(&params.config, params.n_sequences()),
        normalization: normalization.cloned(),
        provenance: provenance.clone(),
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let flat = params.to_flat();

    let mut out = Vec::with_capacity(8 + header_bytes.len() + flat.len() * 8);
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    for v in &flat {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, Header), CheckpointError> {
    let mut f = fs::File::open(path)?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes)?;

    if bytes.len() < 8 {
        return Err(CheckpointError::Truncated {
            expected: 8,
            found: bytes.len(),
        });
    }
    let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    if bytes.len() < 8 + header_len {
        return Err(CheckpointError::Truncated {
            expected: 8 + header_len,
            found: bytes.len(),
        });
    }
    let header: Header = serde_json::from_slice(&bytes[8..8 + header_len])?;
    if header.format_version != FORMAT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: header.format_version,
        });
    }
    let expected = expected_arrays(&header.model_config, header.n_sequences);
    if header.arrays != expected {
        return Err(CheckpointError::ShapeInconsistent {
            context: "declared arrays do not match the model configuration".into(),
        });
    }
    let scalar_count: usize = expected.iter().map(|a| a.rows * a.cols).sum();
    let payload = &bytes[8 + header_len..];
    if payload.len() != scalar_count * 8 {
        return Err(CheckpointError::Truncated {
            expected: scalar_count * 8,
            found: payload.len(),
        });
    }
    let flat: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();

    let mut params = ModelParams::zeroed(header.model_config.clone(), header.n_sequences)
        .map_err(|e| CheckpointError::ShapeInconsistent {
            context: e.to_string(),
        })?;
    params
        .set_from_flat(&flat)
        .map_err(|e| CheckpointError::ShapeInconsistent {
            context: e.to_string(),
        })?;
    Ok((params, header))
}

/// Short content hash used to tag analysis outputs with their checkpoint.
pub fn checkpoint_id(path: &Path) -> Result<String, CheckpointError> {
    use sha2::{Digest, Sha256};
    let bytes = fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    let mut id = String::with_capacity(12);
    for b in digest.iter().take(6) {
        id.push_str(&format!("{b:02x}"));
    }
    Ok(id)
}

pub fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

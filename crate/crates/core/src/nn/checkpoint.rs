//! Model checkpoints: `<stem>.weights` holds the parameters as concatenated
//! little-endian `f32` values; `<stem>.json` is the sidecar describing them.
//!
//! Sidecar schema (format version 1):
//!
//! ```text
//! {
//!   "format_version": 1,
//!   "kind": "segmentor" | "generator" | "discriminator" | "autoencoder",
//!   "architecture": { ... model-specific descriptor ... },
//!   "config": { ... training configuration ... },
//!   "epoch": <completed epochs>,
//!   "losses": [ ... per-epoch loss records ... ],
//!   "params": [ { "name": "...", "shape": [n, c, h, w] }, ... ],
//!   "weights_sha256": "<hex digest of the weights file>"
//! }
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::params::{ParamSet, ParamSpec};
use crate::dataio::write_atomic;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format_version: u32,
    pub kind: String,
    pub architecture: serde_json::Value,
    pub config: serde_json::Value,
    pub epoch: usize,
    pub losses: serde_json::Value,
    pub params: Vec<ParamSpec>,
    pub weights_sha256: String,
}

pub fn weights_path(stem: &Path) -> PathBuf {
    stem.with_extension("weights")
}

pub fn sidecar_path(stem: &Path) -> PathBuf {
    stem.with_extension("json")
}

pub fn exists(stem: &Path) -> bool {
    weights_path(stem).exists() && sidecar_path(stem).exists()
}

#[allow(clippy::too_many_arguments)]
pub fn save(
    stem: &Path,
    kind: &str,
    architecture: &impl Serialize,
    config: &impl Serialize,
    epoch: usize,
    losses: &impl Serialize,
    params: &ParamSet<f32>,
) -> Result<()> {
    if let Some(dir) = stem.parent() {
        fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    let bytes = params.to_le_bytes();
    let sidecar = Sidecar {
        format_version: CHECKPOINT_VERSION,
        kind: kind.to_owned(),
        architecture: serde_json::to_value(architecture)?,
        config: serde_json::to_value(config)?,
        epoch,
        losses: serde_json::to_value(losses)?,
        params: params.specs(),
        weights_sha256: hex::encode(Sha256::digest(&bytes)),
    };
    write_atomic(&weights_path(stem), &bytes)?;
    write_atomic(&sidecar_path(stem), &serde_json::to_vec_pretty(&sidecar)?)
}

pub fn load(stem: &Path, expected_kind: &str) -> Result<(Sidecar, ParamSet<f32>)> {
    let sp = sidecar_path(stem);
    let wp = weights_path(stem);
    let sidecar: Sidecar = serde_json::from_slice(&fs::read(&sp).map_err(Error::io(&sp))?)?;
    if sidecar.format_version != CHECKPOINT_VERSION {
        return Err(Error::Corrupt { path: sp, reason: format!("unsupported version {}", sidecar.format_version) });
    }
    if sidecar.kind != expected_kind {
        return Err(Error::ModelMismatch(format!(
            "{} holds a {} checkpoint, expected {expected_kind}",
            sp.display(),
            sidecar.kind
        )));
    }
    let bytes = fs::read(&wp).map_err(Error::io(&wp))?;
    if hex::encode(Sha256::digest(&bytes)) != sidecar.weights_sha256 {
        return Err(Error::Corrupt { path: wp, reason: "weights digest mismatch".into() });
    }
    let params = ParamSet::from_le_bytes(&sidecar.params, &bytes)
        .ok_or_else(|| Error::Corrupt { path: wp, reason: "weights size does not match sidecar".into() })?;
    Ok((sidecar, params))
}

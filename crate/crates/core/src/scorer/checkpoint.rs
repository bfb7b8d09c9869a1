//! Versioned binary checkpoint container.
//!
//! ```text
//! magic     8 bytes   "HRANKCKP"
//! version   u32 LE
//! length    u64 LE    payload byte count
//! payload   length bytes
//! checksum  32 bytes  SHA-256 of payload
//! ```
//!
//! The payload is a `u32 LE` header length, a UTF-8 JSON header (layer
//! widths, catalog hash, seed, training metadata), then every number as a
//! little-endian `f64`: the four scaler bounds, the best validation metric,
//! and each layer's tensors row-major (`w_self, w_left, w_right, bias` per
//! convolution, `weight, bias` per linear layer). Raw bit patterns make the
//! round trip exact.

use super::{param_count, Architecture, ScorerError, ScorerParams};
use crate::plan_ir::FeatureScaler;
use crate::tensor::{DenseMatrix, LinearLayer, TreeConvLayer};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use std::str::FromStr;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"HRANKCKP";
pub const CHECKPOINT_VERSION: u32 = 1;
const PREFIX_LEN: usize = 8 + 4 + 8;
const CHECKSUM_LEN: usize = 32;
// scaler bounds + best validation metric
const SCALAR_FLOATS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainingMode {
    Pairwise,
    Listwise,
    Regression,
}

impl TrainingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainingMode::Pairwise => "pairwise",
            TrainingMode::Listwise => "listwise",
            TrainingMode::Regression => "regression",
        }
    }
}

impl std::fmt::Display for TrainingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrainingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pairwise" => Ok(TrainingMode::Pairwise),
            "listwise" => Ok(TrainingMode::Listwise),
            "regression" => Ok(TrainingMode::Regression),
            other => Err(format!("unknown training mode `{other}` (expected pairwise, listwise or regression)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ScorerParams,
    pub mode: TrainingMode,
    /// Digest of the training configuration that produced these weights.
    pub config_digest: String,
    /// Best validation metric reached (selected-plan total latency).
    pub best_validation: f64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    architecture: Architecture,
    param_count: usize,
    catalog_hash: String,
    seed: u64,
    mode: TrainingMode,
    config_digest: String,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let header = Header {
            architecture: p.architecture(),
            param_count: param_count(p),
            catalog_hash: p.catalog_hash.clone(),
            seed: p.seed,
            mode: self.mode,
            config_digest: self.config_digest.clone(),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut payload = Vec::with_capacity(4 + header.len() + 8 * (SCALAR_FLOATS + param_count(p)));
        payload.extend_from_slice(&(header.len() as u32).to_le_bytes());
        payload.extend_from_slice(&header);
        let s = &p.scaler;
        for v in [s.cost_min, s.cost_max, s.rows_min, s.rows_max, self.best_validation] {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        for t in p.tensors() {
            for v in t {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }

        let mut out = Vec::with_capacity(PREFIX_LEN + payload.len() + CHECKSUM_LEN);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&payload);
        out.extend_from_slice(&Sha256::digest(&payload));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ScorerError> {
        if bytes.len() >= 8 && &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(ScorerError::Malformed("not a checkpoint file".into()));
        }
        if bytes.len() < PREFIX_LEN {
            return Err(ScorerError::CorruptChecksum);
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(ScorerError::FormatVersionMismatch { found: version, expected: CHECKPOINT_VERSION });
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
        let expected_total = (PREFIX_LEN as u64).checked_add(len).and_then(|x| x.checked_add(CHECKSUM_LEN as u64));
        if expected_total != Some(bytes.len() as u64) {
            return Err(ScorerError::CorruptChecksum);
        }
        let payload = &bytes[PREFIX_LEN..PREFIX_LEN + len as usize];
        let checksum = &bytes[PREFIX_LEN + len as usize..];
        if Sha256::digest(payload).as_slice() != checksum {
            return Err(ScorerError::CorruptChecksum);
        }
        decode_payload(payload)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ScorerError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScorerError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn decode_payload(payload: &[u8]) -> Result<Checkpoint, ScorerError> {
    let malformed = |m: &str| ScorerError::Malformed(m.to_string());
    if payload.len() < 4 {
        return Err(malformed("payload too short"));
    }
    let hlen = u32::from_le_bytes(payload[..4].try_into().unwrap()) as usize;
    let header_bytes = payload.get(4..4 + hlen).ok_or_else(|| malformed("header length exceeds payload"))?;
    let header: Header =
        serde_json::from_slice(header_bytes).map_err(|e| ScorerError::Malformed(format!("header: {e}")))?;
    let arch = &header.architecture;
    let expected_params = arch.param_count()?;
    if expected_params != header.param_count {
        return Err(malformed("parameter count disagrees with layer widths"));
    }
    let body = &payload[4 + hlen..];
    if body.len() != 8 * (SCALAR_FLOATS + expected_params) {
        return Err(malformed("tensor data length disagrees with layer widths"));
    }
    let mut floats = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut take = |n: usize| -> Vec<f64> { floats.by_ref().take(n).collect() };

    let s = take(4);
    let scaler = FeatureScaler { cost_min: s[0], cost_max: s[1], rows_min: s[2], rows_max: s[3] };
    let best_validation = take(1)[0];
    let mut convs = Vec::new();
    let mut d = arch.input_dim;
    for &c in &arch.conv_channels {
        convs.push(TreeConvLayer {
            w_self: DenseMatrix::from_vec(c, d, take(c * d)),
            w_left: DenseMatrix::from_vec(c, d, take(c * d)),
            w_right: DenseMatrix::from_vec(c, d, take(c * d)),
            bias: take(c),
        });
        d = c;
    }
    let mut mlp = Vec::new();
    for &o in &arch.mlp_dims {
        mlp.push(LinearLayer { weight: DenseMatrix::from_vec(o, d, take(o * d)), bias: take(o) });
        d = o;
    }
    Ok(Checkpoint {
        params: ScorerParams { convs, mlp, scaler, catalog_hash: header.catalog_hash, seed: header.seed },
        mode: header.mode,
        config_digest: header.config_digest,
        best_validation,
    })
}

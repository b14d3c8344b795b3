//! Versioned policy checkpoints.
//!
//! Layout: 8-byte magic, little-endian `u64` header length, a JSON header,
//! then the raw little-endian `f64` payloads in header order (policy theta,
//! policy log_std, value theta).

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use antifrag::envs::EnvId;
use antifrag::policy::{MlpSpec, PolicyParams};
use antifrag::ppo::{PpoConfig, ValueParams};
use antifrag::{Error, Result};

pub const MAGIC: &[u8; 8] = b"AFRGCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub env: EnvId,
    pub seed: u64,
    pub total_steps: usize,
    /// Mean return of the last training iteration that finished an episode.
    pub final_mean_return: Option<f64>,
    pub ppo: PpoConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub policy: PolicyParams,
    pub value: Option<ValueParams>,
    pub metadata: TrainingMetadata,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    policy: MlpSpec,
    value: Option<MlpSpec>,
    metadata: TrainingMetadata,
    theta_len: usize,
    log_std_len: usize,
    value_len: usize,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let value_theta = self.value.as_ref().map_or(&[][..], |v| v.theta());
        let header = Header {
            format_version: FORMAT_VERSION,
            policy: self.policy.spec().clone(),
            value: self.value.as_ref().map(|v| v.spec().clone()),
            metadata: self.metadata.clone(),
            theta_len: self.policy.theta().len(),
            log_std_len: self.policy.log_std().len(),
            value_len: value_theta.len(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let floats = self.policy.theta().iter().chain(self.policy.log_std()).chain(value_theta);
        let mut out = Vec::with_capacity(16 + json.len() + 8 * (header.theta_len + header.log_std_len + header.value_len));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for v in floats {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(corrupt("missing checkpoint magic"));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let body = &bytes[16..];
        let header_len = usize::try_from(header_len)
            .ok()
            .filter(|&n| n <= body.len())
            .ok_or_else(|| corrupt(format!("header length {header_len} exceeds file size")))?;
        let raw: serde_json::Value = serde_json::from_slice(&body[..header_len])
            .map_err(|e| corrupt(format!("header is not JSON: {e}")))?;
        // Check the version before the schema so future layouts report clearly.
        let version = raw
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| corrupt("header has no format_version"))?;
        if version != u64::from(FORMAT_VERSION) {
            return Err(Error::CheckpointVersion {
                found: u32::try_from(version).unwrap_or(u32::MAX),
                expected: FORMAT_VERSION,
            });
        }
        let header: Header =
            serde_json::from_value(raw).map_err(|e| corrupt(format!("bad header: {e}")))?;

        let payload = &body[header_len..];
        let total = header.theta_len + header.log_std_len + header.value_len;
        if payload.len() != 8 * total {
            return Err(corrupt(format!(
                "payload holds {} bytes, header promises {}",
                payload.len(),
                8 * total
            )));
        }
        let floats: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let (theta, rest) = floats.split_at(header.theta_len);
        let (log_std, value_theta) = rest.split_at(header.log_std_len);
        let policy = PolicyParams::new(header.policy, theta.to_vec(), log_std.to_vec())
            .map_err(|e| corrupt(format!("policy payload: {e}")))?;
        let value = match header.value {
            Some(spec) => Some(
                ValueParams::new(spec, value_theta.to_vec())
                    .map_err(|e| corrupt(format!("value payload: {e}")))?,
            ),
            None if header.value_len == 0 => None,
            None => return Err(corrupt("value payload without a value network")),
        };
        Ok(Self {
            policy,
            value,
            metadata: header.metadata,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Hex SHA-256 of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

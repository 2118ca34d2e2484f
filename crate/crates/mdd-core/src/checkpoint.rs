//! Checkpoint container.
//!
//! Layout, front to back:
//!
//! 1. magic `b"MDDCKPT0"` (8 bytes)
//! 2. format version, u32 little-endian (currently 1)
//! 3. header length in bytes, u64 little-endian
//! 4. JSON header: model config, inventory fingerprint, stage, epoch,
//!    parameter names + shapes (block order), optional optimizer
//!    hyperparameters, rng state
//! 5. raw little-endian f64 blocks: parameters in header order, then, if
//!    the optimizer is present, its first-moment blocks and second-moment
//!    blocks in the same order
//!
//! Save -> load -> save is byte-identical. Loading validates the magic,
//! version, inventory fingerprint, and exact file length; a truncated file
//! is a format error, never a partial load.

use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::inventory::PhoneInventory;
use crate::model::{ModelConfig, ModelParams, PARAM_NAMES};
use crate::trainer::{AdamState, Stage};

pub const MAGIC: &[u8; 8] = b"MDDCKPT0";
pub const VERSION: u32 = 1;

/// Serializable rng state (ChaCha8: seed, stream, 128-bit word position).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed_hex: String,
    pub stream: u64,
    pub word_pos_hi: u64,
    pub word_pos_lo: u64,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        let seed = rng.get_seed();
        let pos = rng.get_word_pos();
        Self {
            seed_hex: seed.iter().map(|b| format!("{b:02x}")).collect(),
            stream: rng.get_stream(),
            word_pos_hi: (pos >> 64) as u64,
            word_pos_lo: pos as u64,
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        if self.seed_hex.len() != 64 {
            return Err(Error::Format("rng seed must be 32 bytes hex".to_string()));
        }
        let mut seed = [0u8; 32];
        for (i, chunk) in seed.iter_mut().enumerate() {
            *chunk = u8::from_str_radix(&self.seed_hex[2 * i..2 * i + 2], 16)
                .map_err(|_| Error::Format("bad hex in rng seed".to_string()))?;
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(((self.word_pos_hi as u128) << 64) | self.word_pos_lo as u128);
        Ok(rng)
    }
}

/// Everything needed to resume or evaluate a training run.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model_config: ModelConfig,
    pub inventory_fingerprint: String,
    pub stage: Stage,
    pub epoch: usize,
    pub params: ModelParams,
    pub optimizer: Option<AdamState>,
    pub rng: RngState,
}

#[derive(Serialize, Deserialize)]
struct BlockInfo {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct AdamHeader {
    step: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model_config: ModelConfig,
    inventory_fingerprint: String,
    stage: Stage,
    epoch: usize,
    params: Vec<BlockInfo>,
    optimizer: Option<AdamHeader>,
    rng: RngState,
}

fn push_block(out: &mut Vec<u8>, tensor: &Tensor) {
    for v in tensor.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serializes a checkpoint to bytes.
pub fn to_bytes(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let header = Header {
        model_config: ckpt.model_config,
        inventory_fingerprint: ckpt.inventory_fingerprint.clone(),
        stage: ckpt.stage,
        epoch: ckpt.epoch,
        params: ckpt
            .params
            .tensors()
            .iter()
            .zip(PARAM_NAMES)
            .map(|(t, name)| BlockInfo {
                name: name.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        optimizer: ckpt.optimizer.as_ref().map(|o| AdamHeader {
            step: o.step,
            beta1: o.beta1,
            beta2: o.beta2,
            eps: o.eps,
        }),
        rng: ckpt.rng.clone(),
    };
    let header_json = serde_json::to_vec(&header)?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_json);
    for t in ckpt.params.tensors() {
        push_block(&mut out, t);
    }
    if let Some(o) = &ckpt.optimizer {
        for t in &o.m {
            push_block(&mut out, t);
        }
        for t in &o.v {
            push_block(&mut out, t);
        }
    }
    Ok(out)
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    std::fs::write(path, to_bytes(ckpt)?)?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Format(format!(
                "truncated checkpoint: wanted {n} bytes at offset {}, file has {}",
                self.pos,
                self.data.len()
            )));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn read_block(&mut self, shape: &[usize]) -> Result<Tensor> {
        let count: usize = shape.iter().product();
        let raw = self.take(count * 8)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor::new(shape.to_vec(), data)
    }
}

/// Parses checkpoint bytes, verifying the fingerprint against `inventory`.
pub fn from_bytes(data: &[u8], inventory: &PhoneInventory) -> Result<Checkpoint> {
    let mut cur = Cursor { data, pos: 0 };
    if cur.take(8)? != MAGIC {
        return Err(Error::Format("not a checkpoint file (bad magic)".to_string()));
    }
    let version = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: VERSION,
        });
    }
    let header_len = u64::from_le_bytes(cur.take(8)?.try_into().unwrap()) as usize;
    let header: Header = serde_json::from_slice(cur.take(header_len)?)
        .map_err(|e| Error::Format(format!("bad checkpoint header: {e}")))?;

    let expected = inventory.fingerprint();
    if header.inventory_fingerprint != expected {
        return Err(Error::FingerprintMismatch {
            expected,
            found: header.inventory_fingerprint,
        });
    }
    if header.params.len() != PARAM_NAMES.len()
        || header
            .params
            .iter()
            .zip(PARAM_NAMES)
            .any(|(b, n)| b.name != n)
    {
        return Err(Error::Format(
            "checkpoint parameter blocks do not match the expected layout".to_string(),
        ));
    }

    let mut tensors = Vec::with_capacity(header.params.len());
    for info in &header.params {
        tensors.push(cur.read_block(&info.shape)?);
    }
    let params = ModelParams::from_tensors(tensors)?;
    let optimizer = match &header.optimizer {
        Some(ah) => {
            let mut m = Vec::with_capacity(header.params.len());
            for info in &header.params {
                m.push(cur.read_block(&info.shape)?);
            }
            let mut v = Vec::with_capacity(header.params.len());
            for info in &header.params {
                v.push(cur.read_block(&info.shape)?);
            }
            Some(AdamState {
                step: ah.step,
                beta1: ah.beta1,
                beta2: ah.beta2,
                eps: ah.eps,
                m,
                v,
            })
        }
        None => None,
    };
    if cur.pos != data.len() {
        return Err(Error::Format(format!(
            "checkpoint has {} trailing bytes",
            data.len() - cur.pos
        )));
    }
    Ok(Checkpoint {
        model_config: header.model_config,
        inventory_fingerprint: header.inventory_fingerprint,
        stage: header.stage,
        epoch: header.epoch,
        params,
        optimizer,
        rng: header.rng,
    })
}

pub fn load_checkpoint(path: &Path, inventory: &PhoneInventory) -> Result<Checkpoint> {
    let data = std::fs::read(path)?;
    from_bytes(&data, inventory)
}

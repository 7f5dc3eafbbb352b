//! Model persistence: a little-endian binary container holding a config
//! echo and a named tensor table at 32-bit float precision.
//!
//! Layout: magic `SAVN`, format version u32, config echo (u32 length +
//! UTF-8), tensor count u32, then per tensor: name (u32 length + UTF-8),
//! rank u32, dims (u32 each), row-major f32 data. Training runs in f64 and
//! quantizes on save; loading widens back, so save -> load -> save is a
//! byte-level fixpoint.

use std::collections::BTreeMap;
use std::path::Path;

use crate::model::{ModelConfig, ModelParams};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"SAVN";
pub const VERSION: u32 = 1;

/// Tensor payloads larger than this are rejected as corrupt before any
/// allocation happens.
const MAX_TENSOR_ELEMS: u64 = 1 << 28;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format error: {0}")]
    Format(String),
}

fn format_err(detail: impl Into<String>) -> CheckpointError {
    CheckpointError::Format(detail.into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CheckpointError> {
        if self.at + n > self.bytes.len() {
            return Err(format_err(format!(
                "truncated while reading {what}: need {n} bytes at offset {}, file has {}",
                self.at,
                self.bytes.len()
            )));
        }
        let slice = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32, CheckpointError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self, what: &str) -> Result<String, CheckpointError> {
        let len = self.u32(what)? as usize;
        if len > 1 << 20 {
            return Err(format_err(format!("{what} length {len} is implausible")));
        }
        let bytes = self.take(len, what)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| format_err(format!("{what} is not valid UTF-8")))
    }
}

fn push_string(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

/// Serialize parameters with a caller-supplied config echo. The echo must
/// parse back into the training config format; the loader relies on its
/// `encoder.blocks` and `basemod.hidden` keys to rebuild the model shape.
pub fn save_checkpoint(
    path: &Path,
    params: &ModelParams,
    config_echo: &str,
) -> Result<(), CheckpointError> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    push_string(&mut out, config_echo);
    let tensors = params.tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, tensor) in &tensors {
        push_string(&mut out, name);
        out.extend_from_slice(&(tensor.rank() as u32).to_le_bytes());
        for &d in tensor.dims() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in tensor.data() {
            let q = v as f32;
            if !q.is_finite() {
                return Err(format_err(format!(
                    "tensor `{name}` value {v} overflows 32-bit float range"
                )));
            }
            out.extend_from_slice(&q.to_le_bytes());
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Parse and validate a checkpoint, rebuilding [`ModelParams`] from the
/// named tensor table. Returns the parameters and the stored config echo.
pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, String), CheckpointError> {
    let bytes = std::fs::read(path)?;
    let mut r = Reader {
        bytes: &bytes,
        at: 0,
    };

    if r.take(4, "magic")? != MAGIC {
        return Err(format_err("bad magic; not a checkpoint file"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(format_err(format!(
            "unsupported format version {version} (expected {VERSION})"
        )));
    }
    let config_echo = r.string("config echo")?;
    let count = r.u32("tensor count")? as usize;
    if count > 4096 {
        return Err(format_err(format!("tensor count {count} is implausible")));
    }

    let mut table: BTreeMap<String, Tensor> = BTreeMap::new();
    for _ in 0..count {
        let name = r.string("tensor name")?;
        let rank = r.u32("tensor rank")? as usize;
        if !(1..=4).contains(&rank) {
            return Err(format_err(format!("tensor `{name}` has rank {rank}")));
        }
        let mut dims = Vec::with_capacity(rank);
        let mut numel: u64 = 1;
        for _ in 0..rank {
            let d = r.u32("tensor dim")? as u64;
            numel = numel
                .checked_mul(d)
                .filter(|&n| n <= MAX_TENSOR_ELEMS)
                .ok_or_else(|| format_err(format!("tensor `{name}` dims overflow")))?;
            dims.push(d as usize);
        }
        let raw = r.take(numel as usize * 4, "tensor data")?;
        let data: Vec<f64> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        let tensor =
            Tensor::new(dims, data).map_err(|e| format_err(format!("tensor `{name}`: {e}")))?;
        if table.insert(name.clone(), tensor).is_some() {
            return Err(format_err(format!("duplicate tensor `{name}`")));
        }
    }
    if r.at != bytes.len() {
        return Err(format_err(format!(
            "{} trailing bytes after tensor table",
            bytes.len() - r.at
        )));
    }

    let config = parse_model_config(&config_echo)?;
    let params = assemble(config, table)?;
    Ok((params, config_echo))
}

/// Pull the two model-shape keys out of the config echo.
fn parse_model_config(echo: &str) -> Result<ModelConfig, CheckpointError> {
    let mut config = ModelConfig::default();
    for line in echo.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            continue;
        };
        match key.trim() {
            "encoder.blocks" => {
                config.encoder = crate::model::EncoderConfig::parse(value.trim())
                    .map_err(|e| format_err(format!("config echo: {e}")))?;
            }
            "basemod.hidden" => {
                config.basemod_hidden = value.trim().parse().map_err(|_| {
                    format_err(format!("config echo: bad basemod.hidden `{value}`"))
                })?;
            }
            _ => {}
        }
    }
    Ok(config)
}

fn assemble(
    config: ModelConfig,
    mut table: BTreeMap<String, Tensor>,
) -> Result<ModelParams, CheckpointError> {
    // build a correctly-shaped skeleton, then overwrite every tensor
    let mut params = crate::model::init_params(&config, 0)
        .map_err(|e| format_err(format!("config echo yields invalid model: {e}")))?;
    for (name, slot) in params.tensors_mut() {
        let stored = table
            .remove(&name)
            .ok_or_else(|| format_err(format!("missing tensor `{name}`")))?;
        if stored.dims() != slot.dims() {
            return Err(format_err(format!(
                "tensor `{name}` has dims {:?}, config implies {:?}",
                stored.dims(),
                slot.dims()
            )));
        }
        *slot = stored;
    }
    if let Some((name, _)) = table.into_iter().next() {
        return Err(format_err(format!("unexpected tensor `{name}`")));
    }
    Ok(params)
}

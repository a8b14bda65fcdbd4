//! Binary checkpoint: `NUDC`, u32 version, u32-length-prefixed config TOML, u32 epoch,
//! f64 best validation PSNR, u8 Adam flag, u64 Adam step, u32 tensor count, tensors as
//! `[u32 name len, name, u32 rank, u32 dims.., f32 LE payload]`, then a CRC-64 of all
//! preceding bytes. All integers little-endian.

use std::fs;
use std::path::Path;

use crc::{Crc, CRC_64_ECMA_182};

use crate::error::{Error, Result};
use crate::harness::config::ModelRunConfig;
use crate::model::{NestedConfig, NestedModel};
use crate::nn::AdamState;
use crate::tensor::Tensor4;

pub const MAGIC: &[u8; 4] = b"NUDC";
pub const VERSION: u32 = 1;
const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_ECMA_182);
const MOMENT_PREFIXES: [&str; 2] = ["adam.m.", "adam.v."];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckpointMeta {
    pub config: ModelRunConfig,
    /// Last completed epoch (1-based; 0 before training).
    pub epoch: u32,
    pub best_val_psnr: f64,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub model: NestedModel<f32>,
    pub adam: Option<AdamState<f32>>,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_tensor(out: &mut Vec<u8>, name: &str, t: &Tensor4<f32>) {
    put_u32(out, name.len() as u32);
    out.extend_from_slice(name.as_bytes());
    put_u32(out, 4);
    for d in t.shape() {
        put_u32(out, d as u32);
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_checkpoint(model: &NestedModel<f32>, adam: Option<&AdamState<f32>>, meta: &CheckpointMeta) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    let cfg = meta.config.to_toml();
    put_u32(&mut out, cfg.len() as u32);
    out.extend_from_slice(cfg.as_bytes());
    put_u32(&mut out, meta.epoch);
    out.extend_from_slice(&meta.best_val_psnr.to_le_bytes());
    out.push(adam.is_some() as u8);
    out.extend_from_slice(&adam.map_or(0, |a| a.t).to_le_bytes());
    let moments = if adam.is_some() { 2 } else { 0 };
    put_u32(&mut out, (model.store.len() * (1 + moments)) as u32);
    for p in model.store.iter() {
        put_tensor(&mut out, &p.id, &p.value);
    }
    if let Some(a) = adam {
        for (prefix, tensors) in MOMENT_PREFIXES.iter().zip([&a.m, &a.v]) {
            for (p, t) in model.store.iter().zip(tensors) {
                put_tensor(&mut out, &format!("{prefix}{}", p.id), t);
            }
        }
    }
    let crc = CRC64.checksum(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Writes via a temporary file and rename, so a crash never leaves a partial checkpoint.
pub fn save_checkpoint(
    model: &NestedModel<f32>,
    adam: Option<&AdamState<f32>>,
    meta: &CheckpointMeta,
    path: &Path,
) -> Result<()> {
    let bytes = encode_checkpoint(model, adam, meta);
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).map_err(|e| Error::io(format!("writing {}", tmp.display()), e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(format!("finalising {}", path.display()), e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Corrupt(format!("record overruns the file at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn tensor(&mut self) -> Result<(String, Tensor4<f32>)> {
        let len = self.u32()? as usize;
        let name = std::str::from_utf8(self.take(len)?)
            .map_err(|_| Error::Corrupt("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = self.u32()?;
        if rank != 4 {
            return Err(Error::Corrupt(format!("tensor {name} has rank {rank}, expected 4")));
        }
        let mut shape = [0usize; 4];
        for d in &mut shape {
            *d = self.u32()? as usize;
        }
        let count = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        let count = count.ok_or_else(|| Error::Corrupt(format!("tensor {name} dims overflow")))?;
        let raw = self.take(count.checked_mul(4).ok_or_else(|| Error::Corrupt("payload overflow".into()))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        Ok((name, Tensor4::from_vec(shape, data)?))
    }
}

/// Decodes and verifies a checkpoint. When `expected` is given the tensors must match a
/// model built from it, otherwise the embedded model configuration is used.
pub fn decode_checkpoint(bytes: &[u8], expected: Option<&NestedConfig>) -> Result<Checkpoint> {
    if bytes.len() < 4 + 4 + 8 {
        return Err(Error::Corrupt(format!("checkpoint truncated to {} bytes", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::format(0, "bad magic, expected NUDC"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Version {
            found: version,
            expected: VERSION,
        });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    if CRC64.checksum(body) != stored {
        return Err(Error::Corrupt("checksum mismatch (truncated or modified file)".into()));
    }
    let mut r = Reader { bytes: body, pos: 8 };
    let cfg_len = r.u32()? as usize;
    let cfg_text =
        std::str::from_utf8(r.take(cfg_len)?).map_err(|_| Error::Corrupt("embedded config is not UTF-8".into()))?;
    let config = ModelRunConfig::from_toml(cfg_text)?;
    let epoch = r.u32()?;
    let best_val_psnr = f64::from_bits(r.u64()?);
    let has_adam = match r.take(1)?[0] {
        0 => false,
        1 => true,
        other => return Err(Error::Corrupt(format!("bad optimizer flag {other}"))),
    };
    let adam_t = r.u64()?;
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        tensors.push(r.tensor()?);
    }
    if r.pos != body.len() {
        return Err(Error::Corrupt(format!("{} unexpected bytes after tensors", body.len() - r.pos)));
    }

    let model_config = expected.copied().unwrap_or(config.model);
    let mut model = NestedModel::<f32>::build(model_config, 0)?;
    let mut adam = has_adam.then(|| AdamState::new(&model.store, config.optimizer));
    if let Some(a) = adam.as_mut() {
        a.t = adam_t;
    }
    let mut found = vec![[false; 3]; model.store.len()];
    for (name, t) in tensors {
        let (slot, base) = match MOMENT_PREFIXES.iter().position(|p| name.starts_with(p)) {
            Some(k) if has_adam => (k + 1, &name[MOMENT_PREFIXES[k].len()..]),
            _ => (0, name.as_str()),
        };
        let id = model
            .store
            .find(base)
            .ok_or_else(|| Error::Contract(format!("checkpoint parameter {name} does not exist in the model")))?;
        let target = match (slot, adam.as_mut()) {
            (0, _) => &mut model.store.get_mut(id).value,
            (1, Some(a)) => &mut a.m[id.0],
            (_, Some(a)) => &mut a.v[id.0],
            _ => unreachable!("moment slots only exist with optimizer state"),
        };
        if target.shape() != t.shape() {
            return Err(Error::Contract(format!(
                "parameter {name}: checkpoint shape {:?}, model expects {:?}",
                t.shape(),
                target.shape()
            )));
        }
        *target = t;
        found[id.0][slot] = true;
    }
    let needed = if has_adam { 3 } else { 1 };
    for (p, f) in model.store.iter().zip(&found) {
        if let Some(slot) = (0..needed).find(|&s| !f[s]) {
            let prefix = if slot == 0 { "" } else { MOMENT_PREFIXES[slot - 1] };
            return Err(Error::Contract(format!("checkpoint is missing parameter {prefix}{}", p.id)));
        }
    }
    Ok(Checkpoint {
        meta: CheckpointMeta {
            config,
            epoch,
            best_val_psnr,
        },
        model,
        adam,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode_checkpoint(&bytes, None)
}

pub fn load_checkpoint_expecting(path: &Path, expected: &NestedConfig) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode_checkpoint(&bytes, Some(expected))
}

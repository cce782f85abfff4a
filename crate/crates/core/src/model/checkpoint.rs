//! Checkpoint container.
//!
//! ```text
//! magic      4 bytes  "POTR"
//! version    u32      1
//! header_len u32      byte length of the header
//! header     UTF-8    key=value lines: model config, then `meta.*` keys
//! blocks     u32      number of tensor blocks
//! per block: u16 name length, name (UTF-8), u8 rank, rank × u64 dims,
//!            product(dims) × f64 values
//! ```
//!
//! All integers and floats are little-endian. Blocks whose names match a
//! model parameter are loaded into the model; the rest are auxiliary
//! (normalisation statistics, optimizer moments).

use std::collections::BTreeMap;
use std::path::Path;

use super::config::{parse_kv, ModelConfig};
use super::PotrModel;
use crate::binio::{put_f64s, put_u16, put_u32, put_u64, Reader};
use crate::error::{PotrError, Result};
use crate::tensor::{HasParams, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"POTR";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub meta: BTreeMap<String, String>,
    pub blocks: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_model(model: &PotrModel) -> Self {
        let store = model.params();
        let blocks = store
            .ids()
            .map(|id| {
                let mut t = store.get(id).clone();
                t.zero_grad();
                (store.name(id).to_string(), t.with_requires_grad(false))
            })
            .collect();
        Checkpoint {
            config: model.config().clone(),
            meta: BTreeMap::new(),
            blocks,
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    pub fn with_block(mut self, name: &str, tensor: Tensor) -> Self {
        self.blocks.retain(|(n, _)| n != name);
        self.blocks.push((name.to_string(), tensor));
        self
    }

    pub fn block(&self, name: &str) -> Option<&Tensor> {
        self.blocks.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.get(key).map(String::as_str)
    }

    /// Rebuilds the model and copies every parameter block into it.
    pub fn to_model(&self) -> Result<PotrModel> {
        let mut model = PotrModel::new(self.config.clone())?;
        let store = model.params_mut();
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let name = store.name(id).to_string();
            let block = self
                .block(&name)
                .ok_or_else(|| PotrError::contract(format!("checkpoint lacks parameter {name}")))?;
            let target = store.get_mut(id);
            if block.shape() != target.shape() {
                return Err(PotrError::shape("checkpoint", block.shape(), target.shape()));
            }
            target.data_mut().copy_from_slice(block.data());
        }
        Ok(model)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = self.config.to_kv();
        for (k, v) in &self.meta {
            header.push_str(&format!("meta.{k}={v}\n"));
        }
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut out, CHECKPOINT_VERSION);
        put_u32(&mut out, header.len() as u32);
        out.extend_from_slice(header.as_bytes());
        put_u32(&mut out, self.blocks.len() as u32);
        for (name, t) in &self.blocks {
            put_u16(&mut out, name.len() as u16);
            out.extend_from_slice(name.as_bytes());
            out.push(t.shape().len() as u8);
            for &d in t.shape() {
                put_u64(&mut out, d as u64);
            }
            put_f64s(&mut out, t.data());
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader::new(buf);
        if r.bytes(4, "magic")? != CHECKPOINT_MAGIC {
            return r.fail("bad magic, not a checkpoint");
        }
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(PotrError::UnsupportedVersion { found: version, expected: CHECKPOINT_VERSION });
        }
        let header_len = r.u32("header length")? as usize;
        let at = r.offset();
        let header = std::str::from_utf8(r.bytes(header_len, "header")?)
            .map_err(|_| PotrError::Format { offset: at, message: "header is not UTF-8".into() })?;
        let kv = parse_kv(header)?;
        let mut config = ModelConfig::default();
        config.apply_overrides(&kv)?;
        let meta = kv
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("meta.").map(|k| (k.to_string(), v.clone())))
            .collect();
        let count = r.u32("block count")?;
        let mut blocks = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let n = r.u16("block name length")? as usize;
            let at = r.offset();
            let name = std::str::from_utf8(r.bytes(n, "block name")?)
                .map_err(|_| PotrError::Format { offset: at, message: "block name is not UTF-8".into() })?
                .to_string();
            let rank = r.u8("rank")? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64("dimension")? as usize);
            }
            let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            let Some(numel) = numel.filter(|&n| n > 0 && rank > 0) else {
                return r.fail(format!("block {name} has invalid shape {shape:?}"));
            };
            let data = r.f64s(numel, "block values")?;
            blocks.push((name, Tensor::new(&shape, data)?));
        }
        if !r.is_at_end() {
            return r.fail("trailing bytes after last block");
        }
        Ok(Checkpoint { config, meta, blocks })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Checkpoint::from_bytes(&std::fs::read(path)?)
    }
}

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{PotrError, Result};

/// Which pose networks use graph convolutions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Codec {
    Linear,
    GcnEnc,
    GcnDec,
    GcnFull,
}

impl Codec {
    pub fn gcn_encoder(self) -> bool {
        matches!(self, Codec::GcnEnc | Codec::GcnFull)
    }

    pub fn gcn_decoder(self) -> bool {
        matches!(self, Codec::GcnDec | Codec::GcnFull)
    }

    pub fn name(self) -> &'static str {
        match self {
            Codec::Linear => "linear",
            Codec::GcnEnc => "gcn_enc",
            Codec::GcnDec => "gcn_dec",
            Codec::GcnFull => "gcn_full",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Codec::Linear),
            "gcn_enc" => Ok(Codec::GcnEnc),
            "gcn_dec" => Ok(Codec::GcnDec),
            "gcn_full" | "gcn" => Ok(Codec::GcnFull),
            other => Err(PotrError::config(format!("unknown codec {other:?}"))),
        }
    }
}

/// Where the activity classifier reads its input from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActivitySource {
    ClassToken,
    Memory,
}

impl ActivitySource {
    pub fn name(self) -> &'static str {
        match self {
            ActivitySource::ClassToken => "class_token",
            ActivitySource::Memory => "memory",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "class_token" => Ok(ActivitySource::ClassToken),
            "memory" => Ok(ActivitySource::Memory),
            other => Err(PotrError::config(format!("unknown activity source {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub pose_dim: usize,
    /// Body nodes `K`; `pose_dim / nodes` features per node.
    pub nodes: usize,
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub codec: Codec,
    pub gcn_stages: usize,
    pub gcn_node_features: usize,
    pub input_len: usize,
    pub target_len: usize,
    pub num_classes: usize,
    pub activity_source: ActivitySource,
    pub dropout: f64,
    pub gcn_dropout: f64,
    /// One pose decoder shared by every decoder layer, or one per layer.
    pub share_pose_decoder: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            pose_dim: 15,
            nodes: 5,
            embed_dim: 128,
            layers: 4,
            heads: 4,
            ff_dim: 256,
            codec: Codec::Linear,
            gcn_stages: 1,
            gcn_node_features: 512,
            input_len: 50,
            target_len: 25,
            num_classes: 0,
            activity_source: ActivitySource::ClassToken,
            dropout: 0.1,
            gcn_dropout: 0.1,
            share_pose_decoder: true,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn features_per_node(&self) -> usize {
        self.pose_dim / self.nodes.max(1)
    }

    pub fn uses_class_token(&self) -> bool {
        self.num_classes > 0 && self.activity_source == ActivitySource::ClassToken
    }

    /// Encoder memory length for one sequence.
    pub fn memory_len(&self) -> usize {
        self.input_len + usize::from(self.uses_class_token())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(PotrError::config(m));
        if self.pose_dim == 0 || self.embed_dim == 0 || self.layers == 0 {
            return fail("pose_dim, embed_dim and layers must be positive".into());
        }
        if self.heads == 0 || self.embed_dim % self.heads != 0 {
            return fail(format!("embed_dim {} not divisible by heads {}", self.embed_dim, self.heads));
        }
        if self.embed_dim % 2 != 0 {
            return fail(format!("embed_dim {} must be even for positional encodings", self.embed_dim));
        }
        if self.input_len == 0 || self.target_len == 0 {
            return fail("input_len and target_len must be at least 1".into());
        }
        if self.nodes == 0 {
            return fail("nodes must be positive".into());
        }
        if self.codec != Codec::Linear && self.pose_dim % self.nodes != 0 {
            return fail(format!("pose_dim {} not divisible into {} nodes", self.pose_dim, self.nodes));
        }
        if self.codec != Codec::Linear && (self.gcn_node_features == 0 || self.gcn_stages == 0) {
            return fail("gcn_node_features and gcn_stages must be positive".into());
        }
        for (name, p) in [("dropout", self.dropout), ("gcn_dropout", self.gcn_dropout)] {
            if !(0.0..1.0).contains(&p) {
                return fail(format!("{name} must be in [0, 1), got {p}"));
            }
        }
        Ok(())
    }

    /// Serialises as `key=value` lines; [`ModelConfig::from_kv`] reads it back.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("pose_dim", self.pose_dim.to_string()),
            ("nodes", self.nodes.to_string()),
            ("embed_dim", self.embed_dim.to_string()),
            ("layers", self.layers.to_string()),
            ("heads", self.heads.to_string()),
            ("ff_dim", self.ff_dim.to_string()),
            ("codec", self.codec.name().to_string()),
            ("gcn_stages", self.gcn_stages.to_string()),
            ("gcn_node_features", self.gcn_node_features.to_string()),
            ("input_len", self.input_len.to_string()),
            ("target_len", self.target_len.to_string()),
            ("num_classes", self.num_classes.to_string()),
            ("activity_source", self.activity_source.name().to_string()),
            ("dropout", format!("{:?}", self.dropout)),
            ("gcn_dropout", format!("{:?}", self.gcn_dropout)),
            ("share_pose_decoder", self.share_pose_decoder.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        cfg.apply_overrides(&parse_kv(text)?)?;
        Ok(cfg)
    }

    /// Applies recognised keys, leaving unknown ones to other consumers.
    pub fn apply_overrides(&mut self, kv: &BTreeMap<String, String>) -> Result<()> {
        for (k, v) in kv {
            match k.as_str() {
                "pose_dim" => self.pose_dim = parse(k, v)?,
                "nodes" => self.nodes = parse(k, v)?,
                "embed_dim" => self.embed_dim = parse(k, v)?,
                "layers" => self.layers = parse(k, v)?,
                "heads" => self.heads = parse(k, v)?,
                "ff_dim" => self.ff_dim = parse(k, v)?,
                "codec" => self.codec = Codec::parse(v)?,
                "gcn_stages" => self.gcn_stages = parse(k, v)?,
                "gcn_node_features" => self.gcn_node_features = parse(k, v)?,
                "input_len" => self.input_len = parse(k, v)?,
                "target_len" => self.target_len = parse(k, v)?,
                "num_classes" => self.num_classes = parse(k, v)?,
                "activity_source" => self.activity_source = ActivitySource::parse(v)?,
                "dropout" => self.dropout = parse(k, v)?,
                "gcn_dropout" => self.gcn_dropout = parse(k, v)?,
                "share_pose_decoder" => self.share_pose_decoder = parse(k, v)?,
                "seed" => self.seed = parse(k, v)?,
                _ => {}
            }
        }
        Ok(())
    }
}

pub(crate) fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| PotrError::config(format!("invalid value {value:?} for {key}")))
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| PotrError::config(format!("line {}: expected key=value, got {line:?}", i + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

//! Flag and config-file resolution: explicit flag, then `--config` key, then
//! built-in default.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result};
use potr::data::{load_poses, read_csv_poses, Dataset, Representation, Skeleton};
use potr::model::parse_kv;

/// Bad flags or config values; reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Key/value pairs from the `--config` file.
#[derive(Clone, Debug, Default)]
pub struct Settings {
    pub kv: BTreeMap<String, String>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Settings::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let kv = parse_kv(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        Ok(Settings { kv })
    }

    /// `flag` if given, else the config key, else `default`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.kv.get(key) {
            Some(raw) => raw.trim().parse().map_err(|_| usage(format!("invalid value {raw:?} for config key {key}"))),
            None => Ok(default),
        }
    }

    pub fn pick_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        match (flag, self.kv.get(key)) {
            (Some(v), _) => Ok(Some(v)),
            (None, Some(raw)) => raw.trim().parse().map(Some).map_err(|_| usage(format!("invalid value {raw:?} for config key {key}"))),
            (None, None) => Ok(None),
        }
    }
}

pub fn parse_representation(s: &str) -> Result<Representation> {
    Representation::parse(s).map_err(|e| usage(e.to_string()))
}

/// How to read plain-text pose files; POSE files carry this themselves.
pub struct CsvLayout {
    pub labels: Option<PathBuf>,
    pub joints: usize,
    pub representation: Representation,
    pub frame_rate: f64,
}

pub fn load_dataset(path: &Path, csv: &CsvLayout) -> Result<Dataset> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let data = if is_csv {
        let skeleton = Skeleton::new(csv.joints, csv.representation.features_per_node());
        read_csv_poses(path, csv.labels.as_deref(), skeleton, csv.representation, csv.frame_rate)
    } else {
        load_poses(path)
    };
    data.with_context(|| format!("loading {}", path.display()))
}

pub fn require<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    value.as_deref().ok_or_else(|| usage(format!("{flag} is required for this command")))
}

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{PotrError, Result};
use crate::nn::AttentionMap;
use crate::tensor::Tensor;

/// File name for one map: `attn_{kind}_L{layer}_H{head}.csv`, with the
/// stack (`encoder`/`decoder`) spelled into the kind for self-attention.
pub fn attention_file_name(map: &AttentionMap) -> String {
    let kind = match (map.stack, map.kind.label()) {
        (_, "encdec") => "encdec".to_string(),
        (stack, label) => format!("{stack}_{label}"),
    };
    format!("attn_{kind}_L{}_H{}.csv", map.layer, map.head)
}

/// Writes one CSV matrix per map (rows = query steps, columns = key steps)
/// for the first sequence of the batch. Returns the written paths.
pub fn export_attention(maps: &[AttentionMap], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    if maps.is_empty() {
        return Err(PotrError::contract("no attention maps to export"));
    }
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for map in maps.iter().filter(|m| m.sequence == 0) {
        let path = dir.join(attention_file_name(map));
        std::fs::write(&path, matrix_to_csv(&map.weights))?;
        written.push(path);
    }
    Ok(written)
}

pub fn matrix_to_csv(m: &Tensor) -> String {
    let mut s = String::new();
    for r in 0..m.rows() {
        for (j, v) in m.row(r).iter().enumerate() {
            if j > 0 {
                s.push(',');
            }
            // Debug formatting of f64 is the shortest exact round-trip form.
            let _ = write!(s, "{v:?}");
        }
        s.push('\n');
    }
    s
}

pub fn matrix_from_csv(text: &str) -> Result<Tensor> {
    let rows = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|_| PotrError::Validation(format!("bad number {v:?}"))))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Tensor::from_rows(&rows)
}

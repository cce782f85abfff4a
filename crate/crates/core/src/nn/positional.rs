use crate::error::{PotrError, Result};
use crate::tensor::Tensor;

/// Fixed sinusoidal position table, `T_max × D`.
#[derive(Clone, Debug, PartialEq)]
pub struct PositionalEncoding {
    table: Tensor,
}

/// `table[t, 2i] = sin(t / 10000^(2i/D))`, `table[t, 2i+1] = cos(t / 10000^(2i/D))`.
pub fn positional_encoding_table(max_len: usize, dim: usize) -> Result<PositionalEncoding> {
    if dim == 0 || dim % 2 != 0 {
        return Err(PotrError::config(format!("positional encoding needs an even dimension, got {dim}")));
    }
    if max_len == 0 {
        return Err(PotrError::config("positional encoding needs at least one position"));
    }
    let mut data = vec![0.0; max_len * dim];
    for t in 0..max_len {
        for i in 0..dim / 2 {
            let angle = t as f64 / 10000f64.powf(2.0 * i as f64 / dim as f64);
            data[t * dim + 2 * i] = angle.sin();
            data[t * dim + 2 * i + 1] = angle.cos();
        }
    }
    Ok(PositionalEncoding {
        table: Tensor::matrix(max_len, dim, data)?,
    })
}

impl PositionalEncoding {
    pub fn table(&self) -> &Tensor {
        &self.table
    }

    pub fn max_len(&self) -> usize {
        self.table.rows()
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    /// Rows `0..len` repeated `batch` times, matching a row-stacked batch.
    pub fn tiled(&self, len: usize, batch: usize) -> Result<Tensor> {
        if len > self.max_len() {
            return Err(PotrError::config(format!(
                "sequence length {len} exceeds positional table length {}",
                self.max_len()
            )));
        }
        let d = self.dim();
        let block = &self.table.data()[..len * d];
        Tensor::matrix(len * batch, d, block.repeat(batch))
    }
}

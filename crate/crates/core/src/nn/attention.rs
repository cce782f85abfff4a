use rand::Rng;

use super::{xavier_uniform, Ctx};
use crate::error::{PotrError, Result};
use crate::tensor::{Graph, ParamId, ParamStore, Tensor, Var};

/// Additive value standing in for `-inf` at disallowed key positions.
pub const MASK_SENTINEL: f64 = -1e9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttentionKind {
    SelfAttention,
    EncoderDecoder,
}

impl AttentionKind {
    pub fn label(self) -> &'static str {
        match self {
            AttentionKind::SelfAttention => "self",
            AttentionKind::EncoderDecoder => "encdec",
        }
    }
}

/// Normalised attention weights of one head, `T_q × T_k`, rows summing to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMap {
    pub stack: &'static str,
    pub layer: usize,
    pub head: usize,
    pub sequence: usize,
    pub kind: AttentionKind,
    pub weights: Tensor,
}

/// Projection weights of a multi-head attention block. Column block `h` of
/// each `D × D` input projection holds head `h`.
#[derive(Clone, Copy, Debug)]
pub struct MultiHeadAttention {
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
    pub w_o: ParamId,
    pub dim: usize,
    pub heads: usize,
}

/// `T × T` look-ahead mask: `true` marks a future (disallowed) key.
pub fn causal_mask(len: usize) -> Vec<bool> {
    (0..len * len).map(|i| i % len > i / len).collect()
}

impl MultiHeadAttention {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, heads: usize, rng: &mut impl Rng) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(PotrError::config(format!("embedding dim {dim} not divisible by {heads} heads")));
        }
        let mut mk = |suffix: &str| store.add(format!("{name}.{suffix}"), xavier_uniform(rng, dim, dim), true);
        Ok(MultiHeadAttention {
            w_q: mk("w_q"),
            w_k: mk("w_k"),
            w_v: mk("w_v"),
            w_o: mk("w_o"),
            dim,
            heads,
        })
    }

    pub fn params(&self) -> [ParamId; 4] {
        [self.w_q, self.w_k, self.w_v, self.w_o]
    }

    /// Attention over a batch of equally long sequences stacked row-wise:
    /// `queries` is `(batch·T_q) × D`, `keys`/`values` are `(batch·T_k) × D`.
    ///
    /// `tag` names the block when `ctx.record_attention` is set, so that the
    /// per-head weights are pushed to `ctx.attention`.
    #[allow(clippy::too_many_arguments)]
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        queries: Var,
        keys: Var,
        values: Var,
        batch: usize,
        mask: Option<&[bool]>,
        ctx: &mut Ctx,
        tag: (&'static str, usize, AttentionKind),
    ) -> Result<Var> {
        let (q_rows, d) = (g.value(queries).rows(), g.value(queries).cols());
        let k_rows = g.value(keys).rows();
        if d != self.dim || g.value(keys).cols() != d || g.value(values).cols() != d {
            return Err(PotrError::shape("attention", g.shape(queries), g.shape(keys)));
        }
        if batch == 0 || q_rows % batch != 0 || k_rows % batch != 0 || g.value(values).rows() != k_rows {
            return Err(PotrError::shape("attention", g.shape(queries), g.shape(values)));
        }
        let (tq, tk) = (q_rows / batch, k_rows / batch);
        let mask_var = match mask {
            Some(m) if m.len() != tq * tk => {
                return Err(PotrError::shape("attention mask", &[tq, tk], &[m.len()]));
            }
            Some(m) => {
                let add = m.iter().map(|&blocked| if blocked { MASK_SENTINEL } else { 0.0 }).collect();
                Some(g.constant(Tensor::matrix(tq, tk, add)?))
            }
            None => None,
        };

        let wq = g.param(store, self.w_q);
        let wk = g.param(store, self.w_k);
        let wv = g.param(store, self.w_v);
        let wo = g.param(store, self.w_o);
        let q = g.matmul(queries, wq)?;
        let k = g.matmul(keys, wk)?;
        let v = g.matmul(values, wv)?;

        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut per_seq = Vec::with_capacity(batch);
        for b in 0..batch {
            let qb = g.slice_rows(q, b * tq, tq)?;
            let kb = g.slice_rows(k, b * tk, tk)?;
            let vb = g.slice_rows(v, b * tk, tk)?;
            let mut heads = Vec::with_capacity(self.heads);
            for h in 0..self.heads {
                let qh = if self.heads == 1 { qb } else { g.slice_cols(qb, h * dh, dh)? };
                let kh = if self.heads == 1 { kb } else { g.slice_cols(kb, h * dh, dh)? };
                let vh = if self.heads == 1 { vb } else { g.slice_cols(vb, h * dh, dh)? };
                let scores = g.matmul_t(qh, false, kh, true)?;
                let mut scores = g.scale(scores, scale);
                if let Some(m) = mask_var {
                    scores = g.add(scores, m)?;
                }
                let weights = g.softmax_rows(scores)?;
                if ctx.record_attention {
                    ctx.attention.push(AttentionMap {
                        stack: tag.0,
                        layer: tag.1,
                        head: h,
                        sequence: b,
                        kind: tag.2,
                        weights: g.value(weights).clone(),
                    });
                }
                heads.push(g.matmul(weights, vh)?);
            }
            per_seq.push(if heads.len() == 1 { heads[0] } else { g.concat_cols(&heads)? });
        }
        let merged = if batch == 1 { per_seq[0] } else { g.concat_rows(&per_seq)? };
        g.matmul(merged, wo)
    }
}

/// Single-sequence multi-head attention returning the output and one
/// attention map per head.
pub fn multi_head_attention(
    g: &mut Graph,
    store: &ParamStore,
    params: &MultiHeadAttention,
    queries: Var,
    keys: Var,
    values: Var,
    mask: Option<&[bool]>,
) -> Result<(Var, Vec<AttentionMap>)> {
    let mut ctx = Ctx::eval().recording();
    let out = params.forward(g, store, queries, keys, values, 1, mask, &mut ctx, ("attention", 0, AttentionKind::SelfAttention))?;
    Ok((out, ctx.attention))
}

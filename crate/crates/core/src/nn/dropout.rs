use rand::Rng;

use super::Ctx;
use crate::error::{PotrError, Result};
use crate::tensor::{Graph, Tensor, Var};

/// Inverted dropout: in train mode each entry is zeroed with probability
/// `p` and survivors are scaled by `1/(1−p)`. Identity in eval mode.
pub fn dropout(g: &mut Graph, x: Var, p: f64, ctx: &mut Ctx) -> Result<Var> {
    if !(0.0..1.0).contains(&p) {
        return Err(PotrError::config(format!("dropout rate must be in [0, 1), got {p}")));
    }
    if !ctx.is_train() || p == 0.0 {
        return Ok(x);
    }
    let keep = 1.0 / (1.0 - p);
    let shape = g.shape(x).to_vec();
    let n = g.value(x).numel();
    let rng = ctx.rng();
    let mask = (0..n).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect();
    let mask = g.constant(Tensor::new(&shape, mask)?);
    g.mul(x, mask)
}

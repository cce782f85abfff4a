use crate::error::{PotrError, Result};
use crate::tensor::{Graph, Var};

/// Mean absolute error over all `T' · N` entries of one layer's prediction.
pub fn layerwise_l1_loss(g: &mut Graph, pred: Var, target: Var) -> Result<Var> {
    if g.shape(pred) != g.shape(target) {
        return Err(crate::PotrError::Shape {
            op: "layerwise_l1_loss",
            lhs: g.shape(pred).to_vec(),
            rhs: g.shape(target).to_vec(),
        });
    }
    let diff = g.sub(pred, target)?;
    let abs = g.abs(diff);
    Ok(g.mean(abs))
}

/// Average of the layerwise losses over all decoder layers.
pub fn motion_loss(g: &mut Graph, layers: &[Var], target: Var) -> Result<Var> {
    if layers.is_empty() {
        return Err(PotrError::contract("motion loss needs at least one layer"));
    }
    let mut total = layerwise_l1_loss(g, layers[0], target)?;
    for &l in &layers[1..] {
        let term = layerwise_l1_loss(g, l, target)?;
        total = g.add(total, term)?;
    }
    Ok(g.scale(total, 1.0 / layers.len() as f64))
}

/// Mean `−log softmax(logits)[label]` over the rows of `logits`.
pub fn cross_entropy_loss(g: &mut Graph, logits: Var, labels: &[usize]) -> Result<Var> {
    g.cross_entropy(logits, labels)
}

/// `motion + λ · activity`; the activity term is dropped when absent or λ = 0.
pub fn total_loss(g: &mut Graph, motion: Var, activity: Option<Var>, lambda: f64) -> Result<Var> {
    match activity {
        Some(a) if lambda != 0.0 => {
            let weighted = g.scale(a, lambda);
            g.add(motion, weighted)
        }
        _ => Ok(motion),
    }
}

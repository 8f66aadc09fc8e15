use super::{count_contributing, supcon_graph, LossConfig};
use crate::encoder::{view_masks, BatchGrads, EncoderModel};
use crate::error::{Error, Result};
use crate::numerics::SeededRng;

/// Supervised contrastive loss of `n_views` dropout views of `rows`, pushed
/// back through the encoder.
///
/// View `v` of document `i` sits at row `v * rows.len() + i` and inherits
/// `labels[i]`; its masks come from `rng.derive(v).derive(i)`, the same
/// streams [`crate::encoder::augment_views`] uses. Returns `None` for a
/// degenerate batch.
pub fn encoder_supcon_grad(
    model: &EncoderModel,
    rows: &[&[u32]],
    labels: &[usize],
    n_views: usize,
    rng: &SeededRng,
    cfg: &LossConfig,
) -> Result<Option<BatchGrads>> {
    if n_views < 2 {
        return Err(Error::param(format!(
            "n_views must be at least 2, got {n_views}"
        )));
    }
    if rows.len() != labels.len() {
        return Err(Error::dim(format!(
            "{} rows with {} labels",
            rows.len(),
            labels.len()
        )));
    }
    let view_labels: Vec<usize> = (0..n_views).flat_map(|_| labels.iter().copied()).collect();
    if count_contributing(&view_labels, cfg.denominator) == 0 {
        return Ok(None);
    }
    let view_rows: Vec<&[u32]> = (0..n_views).flat_map(|_| rows.iter().copied()).collect();
    let masks = view_masks(model, rows, n_views, rng)?;
    let grads = model.batch_value_and_grad(&view_rows, &masks, |g, e| {
        let loss = supcon_graph(g, e, &view_labels, cfg)?
            .ok_or_else(|| Error::Contract("contributing anchors vanished".into()))?;
        Ok((loss, Vec::new()))
    })?;
    Ok(Some(grads))
}

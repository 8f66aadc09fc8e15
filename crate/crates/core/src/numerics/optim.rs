use super::{ParamGrads, ParamSet};
use crate::error::{Error, Result};

/// Plain SGD: `p <- p - lr * g` on every non-frozen entry.
///
/// With `clip = Some(c)` the whole gradient is rescaled by `c / ||g||` when its
/// global L2 norm exceeds `c`. Frozen entries are left untouched but still
/// count toward the norm.
pub fn sgd_step(
    params: &mut ParamSet,
    grads: &ParamGrads,
    lr: f32,
    clip: Option<f32>,
) -> Result<()> {
    if lr.is_nan() || lr <= 0.0 {
        return Err(Error::param(format!(
            "learning rate must be positive, got {lr}"
        )));
    }
    if grads.len() != params.len() {
        return Err(Error::dim(format!(
            "{} gradients for {} parameters",
            grads.len(),
            params.len()
        )));
    }
    let mut factor = 1.0f32;
    if let Some(c) = clip {
        if c.is_nan() || c <= 0.0 {
            return Err(Error::param(format!("clip norm must be positive, got {c}")));
        }
        let norm = grads.global_norm();
        if norm > f64::from(c) {
            factor = (f64::from(c) / norm) as f32;
        }
    }
    let step = lr * factor;
    let updates: Vec<(usize, _)> = params
        .iter()
        .enumerate()
        .filter(|(_, (_, p))| !p.frozen)
        .map(|(i, (_, p))| {
            let g = grads.get(i);
            p.tensor.zip_map(g, |w, d| w - step * d).map(|t| (i, t))
        })
        .collect::<Result<_>>()?;
    for (i, t) in updates {
        params.set_tensor(i, t);
    }
    Ok(())
}

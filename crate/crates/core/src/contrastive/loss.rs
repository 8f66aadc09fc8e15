//! Supervised contrastive loss over cosine similarities.
//!
//! For anchor `i` with positives `p(i)` the per-anchor term is
//!
//! ```text
//! -1/|p(i)| * sum_{p in p(i)} log( exp(cos(x_i, x_p)/t) / sum_{b in D(i)} exp(cos(x_i, x_b)/t) )
//! ```
//!
//! where the denominator set `D(i)` is either the negatives `B(i)` only
//! ([`DenominatorMode::PaperLiteral`]) or every index except `i`
//! ([`DenominatorMode::SupConStandard`]). The batch loss is the mean over
//! contributing anchors.

use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DenominatorMode {
    /// Denominator over negatives only. The loss can go negative.
    PaperLiteral,
    /// Denominator over all non-anchor samples. The loss is non-negative.
    SupConStandard,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub temperature: f32,
    pub denominator: DenominatorMode,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            temperature: 0.1,
            denominator: DenominatorMode::SupConStandard,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::param(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// `a·b / (|a| |b|)`. Zero-norm inputs are an error.
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f32> {
    if a.len() != b.len() {
        return Err(Error::dim(format!(
            "cosine: vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::param("cosine: zero-norm vector"));
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0) as f32)
}

/// Anchors with their positive and negative index sets.
#[derive(Clone, Debug, PartialEq)]
pub struct ContrastiveBatch {
    pub embeddings: Tensor,
    pub labels: Vec<usize>,
    pub positives: Vec<Vec<usize>>,
    pub negatives: Vec<Vec<usize>>,
}

/// Derives `p(i)` (same label, `j != i`) and `B(i)` (different label) for
/// every anchor.
pub fn build_batch(embeddings: Tensor, labels: Vec<usize>) -> Result<ContrastiveBatch> {
    let (n, _) = embeddings.expect_matrix("build_batch")?;
    if n != labels.len() {
        return Err(Error::dim(format!(
            "{n} embeddings with {} labels",
            labels.len()
        )));
    }
    if n < 2 {
        return Err(Error::param(
            "a contrastive batch needs at least two samples",
        ));
    }
    let (positives, negatives) = anchor_sets(&labels);
    Ok(ContrastiveBatch {
        embeddings,
        labels,
        positives,
        negatives,
    })
}

fn anchor_sets(labels: &[usize]) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let n = labels.len();
    let mut pos = vec![Vec::new(); n];
    let mut neg = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if j == i {
                continue;
            }
            if labels[j] == labels[i] {
                pos[i].push(j);
            } else {
                neg[i].push(j);
            }
        }
    }
    (pos, neg)
}

impl ContrastiveBatch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Whether anchor `i` contributes a term under `mode`.
    pub fn contributes(&self, i: usize, mode: DenominatorMode) -> bool {
        contributes(&self.positives[i], &self.negatives[i], mode)
    }

    pub fn n_contributing(&self, mode: DenominatorMode) -> usize {
        (0..self.len())
            .filter(|&i| self.contributes(i, mode))
            .count()
    }
}

fn contributes(pos: &[usize], neg: &[usize], mode: DenominatorMode) -> bool {
    !pos.is_empty() && (mode == DenominatorMode::SupConStandard || !neg.is_empty())
}

/// Result of [`supcon_loss`].
#[derive(Clone, Debug, PartialEq)]
pub struct SupConOutput {
    pub loss: f32,
    /// Gradient with respect to the batch embeddings.
    pub grad: Tensor,
    pub contributing: usize,
    /// No anchor had a usable positive; `loss` is 0 and `grad` is zero.
    pub degenerate: bool,
}

/// Number of anchors that contribute under `mode` for these labels.
pub fn count_contributing(labels: &[usize], mode: DenominatorMode) -> usize {
    let (pos, neg) = anchor_sets(labels);
    (0..labels.len())
        .filter(|&i| contributes(&pos[i], &neg[i], mode))
        .count()
}

/// Records the loss on `g` over the `[n x d]` embeddings node `e`.
///
/// Returns `None` when no anchor contributes.
pub fn supcon_graph(
    g: &mut Graph<'_>,
    e: Var,
    labels: &[usize],
    cfg: &LossConfig,
) -> Result<Option<Var>> {
    cfg.validate()?;
    let n = labels.len();
    let (rows, _) = g.value(e).expect_matrix("supcon")?;
    if rows != n {
        return Err(Error::dim(format!("{rows} embeddings with {n} labels")));
    }
    let (pos, neg) = anchor_sets(labels);
    let active: Vec<bool> = (0..n)
        .map(|i| contributes(&pos[i], &neg[i], cfg.denominator))
        .collect();
    let n_active = active.iter().filter(|&&a| a).count();
    if n_active == 0 {
        return Ok(None);
    }

    let inv_t = 1.0 / cfg.temperature;
    let sims = g.cosine_matrix(e)?;
    let logits = g.scale(sims, inv_t);
    let lv = g.value(logits).clone();

    // Denominator selector and a per-row constant shift (the row max over the
    // selected entries) for a stable log-sum-exp.
    let mut den_mask = vec![0.0f32; n * n];
    let mut shift = vec![0.0f32; n];
    let mut pos_w = vec![0.0f32; n * n];
    for i in 0..n {
        let den: Vec<usize> = if !active[i] {
            vec![i]
        } else {
            match cfg.denominator {
                DenominatorMode::PaperLiteral => neg[i].clone(),
                DenominatorMode::SupConStandard => (0..n).filter(|&j| j != i).collect(),
            }
        };
        shift[i] = den
            .iter()
            .map(|&j| lv.data()[i * n + j])
            .fold(f32::NEG_INFINITY, f32::max);
        for j in den {
            den_mask[i * n + j] = 1.0;
        }
        if active[i] {
            let w = 1.0 / pos[i].len() as f32;
            for &j in &pos[i] {
                pos_w[i * n + j] = w;
            }
        }
    }
    let mut shift_mat = Vec::with_capacity(n * n);
    for &s in &shift {
        shift_mat.extend(std::iter::repeat_n(-s, n));
    }
    let shift_mat = g.constant(Tensor::new(vec![n, n], shift_mat)?);
    let shifted = g.add(logits, shift_mat)?;
    let ex = g.exp(shifted);
    let masked = g.mul_const(ex, Tensor::new(vec![n, n], den_mask)?)?;
    let den = g.sum_rows(masked);
    let log_den = g.log(den)?;
    let shift_back = g.constant(Tensor::vector(shift)?);
    let log_den = g.add(log_den, shift_back)?;

    let weighted = g.mul_const(logits, Tensor::new(vec![n, n], pos_w)?)?;
    let num = g.sum_rows(weighted);
    let neg_num = g.scale(num, -1.0);
    let terms = g.add(log_den, neg_num)?;

    let reduce: Vec<f32> = active
        .iter()
        .map(|&a| if a { 1.0 / n_active as f32 } else { 0.0 })
        .collect();
    let per = g.mul_const(terms, Tensor::vector(reduce)?)?;
    Ok(Some(g.sum_all(per)))
}

/// Loss and embedding gradient for a batch.
///
/// A batch with no contributing anchor is reported as degenerate (loss 0,
/// zero gradient) rather than failing, so a training loop can skip it.
pub fn supcon_loss(batch: &ContrastiveBatch, cfg: &LossConfig) -> Result<SupConOutput> {
    let mut g = Graph::new();
    let e = g.input(batch.embeddings.clone());
    match supcon_graph(&mut g, e, &batch.labels, cfg)? {
        None => {
            log::warn!(
                "contrastive batch of {} has no anchor with a positive; loss defined as 0",
                batch.len()
            );
            Ok(SupConOutput {
                loss: 0.0,
                grad: Tensor::zeros(batch.embeddings.shape()),
                contributing: 0,
                degenerate: true,
            })
        }
        Some(out) => {
            let grads = g.backward(out)?;
            Ok(SupConOutput {
                loss: g.value(out).item()?,
                grad: grads.get_or_zeros(e, &batch.embeddings),
                contributing: batch.n_contributing(cfg.denominator),
                degenerate: false,
            })
        }
    }
}

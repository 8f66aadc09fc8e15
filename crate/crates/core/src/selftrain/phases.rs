//! The training phases one loop iteration is built from.

use crate::contrastive::{encoder_supcon_grad, ClassBalancedSampler};
use crate::corpus::{tokenize, Document, LabelSet, Vocabulary};
use crate::encoder::{classify, ClassifierHead, EncodeMode, EncoderModel, SeqMasks};
use crate::error::{Error, Result};
use crate::metrics::{confusion, ConfusionMatrix};
use crate::numerics::{sgd_step, value_and_grad, Graph, ParamGrads, SeededRng, Tensor, Var};

use super::LoopConfig;

/// Everything the loop needs besides its mutable state: label names, the
/// vocabulary, and the tokenized validation split.
#[derive(Clone, Debug)]
pub struct TaskData {
    pub labels: LabelSet,
    pub vocab: Vocabulary,
    pub max_len: usize,
    pub val_rows: Vec<Vec<u32>>,
    pub val_labels: Vec<usize>,
}

impl TaskData {
    pub fn new(
        labels: LabelSet,
        vocab: Vocabulary,
        max_len: usize,
        val: &[Document],
    ) -> Result<Self> {
        if val.is_empty() {
            return Err(Error::data("validation split is empty"));
        }
        let mut data = Self {
            labels,
            vocab,
            max_len,
            val_rows: Vec::new(),
            val_labels: Vec::new(),
        };
        data.val_rows = data.rows(val)?;
        data.val_labels = data.label_indices(val)?;
        Ok(data)
    }

    /// Unpadded token ids of each document, truncated to `max_len`.
    pub fn rows(&self, docs: &[Document]) -> Result<Vec<Vec<u32>>> {
        if docs.is_empty() {
            return Ok(Vec::new());
        }
        let batch = tokenize(docs, &self.vocab, self.max_len, &self.labels)?;
        Ok((0..batch.len())
            .map(|i| batch.real_ids(i).to_vec())
            .collect())
    }

    pub fn label_indices(&self, docs: &[Document]) -> Result<Vec<usize>> {
        docs.iter()
            .map(|d| match d.label() {
                Some(l) => self.labels.require(l),
                None => Err(Error::data(format!("document {:?} has no label", d.id))),
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhaseStats {
    pub steps: usize,
    /// Batches with no contributing anchor, skipped without a step.
    pub skipped: usize,
    pub mean_loss: f64,
}

fn as_slices(rows: &[Vec<u32>]) -> Vec<&[u32]> {
    rows.iter().map(Vec::as_slice).collect()
}

fn steps_per_epoch(sweep: usize, cfg: &LoopConfig) -> usize {
    sweep.max(cfg.min_batches_per_epoch)
}

/// Supervised contrastive training of the encoder over dropout views.
pub fn contrastive_phase(
    encoder: &mut EncoderModel,
    rows: &[Vec<u32>],
    labels: &[usize],
    cfg: &LoopConfig,
    rng: &SeededRng,
) -> Result<PhaseStats> {
    if rows.len() != labels.len() {
        return Err(Error::dim(format!(
            "{} rows with {} labels",
            rows.len(),
            labels.len()
        )));
    }
    let mut sampler = ClassBalancedSampler::new(
        labels,
        cfg.contrastive_batch,
        cfg.classes_per_batch,
        rng.derive(0),
    )?;
    let per_epoch = steps_per_epoch(sampler.batches_per_epoch(), cfg);
    let mask_rng = rng.derive(1);
    let mut stats = PhaseStats::default();
    let mut loss_sum = 0.0;
    for s in 0..cfg.contrastive_epochs * per_epoch {
        let batch = sampler.next_batch();
        let b_rows: Vec<&[u32]> = batch.iter().map(|&i| rows[i].as_slice()).collect();
        let b_labels: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
        match encoder_supcon_grad(
            encoder,
            &b_rows,
            &b_labels,
            cfg.n_views,
            &mask_rng.derive(s as u64),
            &cfg.loss,
        )? {
            Some(g) => {
                sgd_step(encoder.params_mut(), &g.encoder, cfg.lr, cfg.clip)?;
                loss_sum += f64::from(g.loss);
                stats.steps += 1;
            }
            None => {
                log::warn!("contrastive step {s}: no contributing anchors, skipped");
                stats.skipped += 1;
            }
        }
    }
    if stats.steps > 0 {
        stats.mean_loss = loss_sum / stats.steps as f64;
    }
    Ok(stats)
}

/// Softmax cross-entropy of `logits` against `labels`, averaged with
/// per-class `weights` (plain mean when `None`).
pub fn cross_entropy(
    g: &mut Graph<'_>,
    logits: Var,
    labels: &[usize],
    weights: Option<&[f32]>,
) -> Result<Var> {
    let (n, c) = g.value(logits).expect_matrix("cross_entropy")?;
    if labels.len() != n {
        return Err(Error::dim(format!(
            "{n} logit rows with {} labels",
            labels.len()
        )));
    }
    if let Some(w) = weights {
        if w.len() != c {
            return Err(Error::dim(format!(
                "{} class weights for {c} classes",
                w.len()
            )));
        }
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::param(format!(
            "label {l} out of range for {c} classes"
        )));
    }
    let w_of = |l: usize| weights.map_or(1.0, |w| f64::from(w[l]));
    let total: f64 = labels.iter().map(|&l| w_of(l)).sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::param("cross-entropy weights sum to zero"));
    }
    let mut target = vec![0.0f32; n * c];
    for (i, &l) in labels.iter().enumerate() {
        target[i * c + l] = (-w_of(l) / total) as f32;
    }
    let ls = g.log_softmax(logits);
    let picked = g.mul_const(ls, Tensor::new(vec![n, c], target)?)?;
    Ok(g.sum_all(picked))
}

/// Inverse-frequency class weights `n / (present * n_k)`, so every class
/// present in `labels` carries the same total weight. Absent classes get 0.
pub fn balanced_weights(labels: &[usize], n_classes: usize) -> Vec<f32> {
    let mut counts = vec![0usize; n_classes];
    for &l in labels {
        if l < n_classes {
            counts[l] += 1;
        }
    }
    let present = counts.iter().filter(|&&k| k > 0).count().max(1);
    counts
        .iter()
        .map(|&k| {
            if k == 0 {
                0.0
            } else {
                (labels.len() as f64 / (present * k) as f64) as f32
            }
        })
        .collect()
}

fn loss_weights(labels: &[usize], n_classes: usize, cfg: &LoopConfig) -> Option<Vec<f32>> {
    cfg.balanced_head
        .then(|| balanced_weights(labels, n_classes))
}

/// Trains only the head on fixed deterministic embeddings of a frozen
/// encoder.
pub fn head_phase(
    encoder: &EncoderModel,
    head: &mut ClassifierHead,
    rows: &[Vec<u32>],
    labels: &[usize],
    cfg: &LoopConfig,
    rng: &SeededRng,
) -> Result<PhaseStats> {
    let emb = encoder.encode_rows(&as_slices(rows), &EncodeMode::Deterministic)?;
    let d = emb.cols();
    let weights = loss_weights(labels, head.n_classes(), cfg);
    let mut stats = PhaseStats::default();
    let mut loss_sum = 0.0;
    let mut order: Vec<usize> = (0..rows.len()).collect();
    for epoch in 0..cfg.head_epochs {
        rng.derive(epoch as u64).shuffle(&mut order);
        for chunk in order.chunks(cfg.head_batch) {
            let mut data = Vec::with_capacity(chunk.len() * d);
            for &i in chunk {
                data.extend_from_slice(emb.row(i));
            }
            let x = Tensor::new(vec![chunk.len(), d], data)?;
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let (loss, grads) = value_and_grad(head.params(), |g, vars| {
                let e = g.constant(x);
                let z = ClassifierHead::logits_graph(g, vars, e)?;
                cross_entropy(g, z, &y, weights.as_deref())
            })?;
            sgd_step(head.params_mut(), &grads, cfg.head_lr, cfg.clip)?;
            loss_sum += f64::from(loss);
            stats.steps += 1;
        }
    }
    if stats.steps > 0 {
        stats.mean_loss = loss_sum / stats.steps as f64;
    }
    Ok(stats)
}

/// Cross-entropy training of encoder and head together, with dropout active,
/// for `head_epochs` sweeps over the labeled set.
pub fn end_to_end_phase(
    encoder: &mut EncoderModel,
    head: &mut ClassifierHead,
    rows: &[Vec<u32>],
    labels: &[usize],
    cfg: &LoopConfig,
    rng: &SeededRng,
) -> Result<PhaseStats> {
    if rows.is_empty() || rows.len() != labels.len() {
        return Err(Error::dim(format!(
            "{} rows with {} labels",
            rows.len(),
            labels.len()
        )));
    }
    let weights = loss_weights(labels, head.n_classes(), cfg);
    let mut stats = PhaseStats::default();
    let mut loss_sum = 0.0;
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mask_rng = rng.derive(1);
    let mut s = 0u64;
    for epoch in 0..cfg.head_epochs {
        rng.derive(0).derive(epoch as u64).shuffle(&mut order);
        for chunk in order.chunks(cfg.head_batch) {
            let step_rng = mask_rng.derive(s);
            s += 1;
            let b_rows: Vec<&[u32]> = chunk.iter().map(|&i| rows[i].as_slice()).collect();
            let masks = b_rows
                .iter()
                .enumerate()
                .map(|(i, ids)| {
                    encoder
                        .sample_masks(ids.len(), &mut step_rng.derive(i as u64))
                        .map(Some)
                })
                .collect::<Result<Vec<Option<SeqMasks>>>>()?;
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let (w, b) = (
                head.params().tensor("weight")?.clone(),
                head.params().tensor("bias")?.clone(),
            );
            let g = encoder.batch_value_and_grad(&b_rows, &masks, |g, e| {
                let vars = [g.input(w), g.input(b)];
                let z = ClassifierHead::logits_graph(g, &vars, e)?;
                Ok((cross_entropy(g, z, &y, weights.as_deref())?, vars.to_vec()))
            })?;
            sgd_step(encoder.params_mut(), &g.encoder, cfg.lr, cfg.clip)?;
            sgd_step(
                head.params_mut(),
                &ParamGrads::new(g.extra),
                cfg.head_lr,
                cfg.clip,
            )?;
            loss_sum += f64::from(g.loss);
            stats.steps += 1;
        }
    }
    if stats.steps > 0 {
        stats.mean_loss = loss_sum / stats.steps as f64;
    }
    Ok(stats)
}

/// Predicted class and max-softmax confidence for each row.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Predictions {
    pub predicted: Vec<usize>,
    pub confidence: Vec<f32>,
}

pub fn predict(
    encoder: &EncoderModel,
    head: &ClassifierHead,
    rows: &[Vec<u32>],
) -> Result<Predictions> {
    if rows.is_empty() {
        return Ok(Predictions::default());
    }
    let emb = encoder.encode_rows(&as_slices(rows), &EncodeMode::Deterministic)?;
    let probs = classify(head, &emb)?.softmax(1)?;
    let mut out = Predictions::default();
    for r in 0..probs.rows() {
        let row = probs.row(r);
        let mut best = 0;
        for (k, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = k;
            }
        }
        out.predicted.push(best);
        out.confidence.push(row[best]);
    }
    Ok(out)
}

pub fn evaluate(
    encoder: &EncoderModel,
    head: &ClassifierHead,
    rows: &[Vec<u32>],
    labels: &[usize],
) -> Result<ConfusionMatrix> {
    let p = predict(encoder, head, rows)?;
    confusion(labels, &p.predicted, head.n_classes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_of_uniform_logits_is_log_c() {
        let mut g = Graph::new();
        let z = g.constant(Tensor::zeros(&[3, 4]));
        let l = cross_entropy(&mut g, z, &[0, 1, 3], None).unwrap();
        assert!((g.value(l).item().unwrap() - 4f32.ln()).abs() < 1e-6);
        assert!(cross_entropy(&mut g, z, &[0, 1], None).is_err());
        assert!(cross_entropy(&mut g, z, &[0, 1, 4], None).is_err());
    }

    #[test]
    fn head_phase_fits_separable_embeddings() {
        use crate::encoder::EncoderConfig;
        let cfg = EncoderConfig {
            d_model: 8,
            n_heads: 2,
            n_layers: 1,
            d_ff: 16,
            max_len: 8,
            vocab_size: 10,
            ..EncoderConfig::default()
        };
        let enc = EncoderModel::init(cfg, 1).unwrap();
        let rows: Vec<Vec<u32>> = (0..20).map(|i| vec![2 + (i % 2) as u32; 3]).collect();
        let labels: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let mut head = ClassifierHead::init(8, 2, 1).unwrap();
        let lc = LoopConfig {
            head_epochs: 30,
            head_lr: 0.5,
            ..LoopConfig::default()
        };
        let stats =
            head_phase(&enc, &mut head, &rows, &labels, &lc, &SeededRng::new(0, 0)).unwrap();
        assert!(stats.steps > 0);
        let cm = evaluate(&enc, &head, &rows, &labels).unwrap();
        assert_eq!(cm.trace(), 20);
    }
}

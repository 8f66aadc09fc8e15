//! The synthetic corpus is learnable, and a small self-training run keeps
//! its bookkeeping straight.

use std::collections::{HashMap, HashSet};

use crlplus_core::corpus::{
    synth_corpus, words, Document, LabelSet, Provenance, SynthConfig, Vocabulary,
};
use crlplus_core::encoder::EncoderConfig;
use crlplus_core::selftrain::{run_method, LoopConfig, LoopState, Method, StopReason, TaskData};

/// Multinomial naive Bayes with add-one smoothing, as an independent check
/// that the class signal in the generated text is real.
fn naive_bayes_accuracy(train: &[Document], test: &[Document], labels: &LabelSet) -> f64 {
    let c = labels.len();
    let mut counts: Vec<HashMap<String, f64>> = vec![HashMap::new(); c];
    let mut totals = vec![0.0f64; c];
    let mut docs = vec![0.0f64; c];
    let mut vocab = HashSet::new();
    for d in train {
        let k = labels.require(d.label().unwrap()).unwrap();
        docs[k] += 1.0;
        for w in words(&d.text) {
            *counts[k].entry(w.clone()).or_default() += 1.0;
            totals[k] += 1.0;
            vocab.insert(w);
        }
    }
    let v = vocab.len() as f64;
    let n = train.len() as f64;
    let correct = test
        .iter()
        .filter(|d| {
            let ws = words(&d.text);
            let best = (0..c)
                .filter(|&k| docs[k] > 0.0)
                .map(|k| {
                    let prior = (docs[k] / n).ln();
                    let like: f64 = ws
                        .iter()
                        .filter(|w| vocab.contains(*w))
                        .map(|w| {
                            ((counts[k].get(w).copied().unwrap_or(0.0) + 1.0) / (totals[k] + v))
                                .ln()
                        })
                        .sum();
                    (k, prior + like)
                })
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap()
                .0;
            labels.name(best) == d.label().unwrap()
        })
        .count();
    correct as f64 / test.len() as f64
}

#[test]
fn naive_bayes_learns_the_synthetic_corpus() {
    let corpus = synth_corpus(&SynthConfig {
        n_total: 500,
        labeled_fraction: 1.0,
        ..SynthConfig::default()
    })
    .unwrap();
    assert_eq!(
        corpus.documents.iter().filter(|d| d.is_labeled()).count(),
        500
    );
    let acc = naive_bayes_accuracy(&corpus.documents, &corpus.heldout, &corpus.label_set);
    assert!(acc >= 0.9, "naive Bayes accuracy {acc:.3}");
}

fn small_run(method: Method, seed: u64) -> (LoopState, StopReason, Vec<usize>) {
    let corpus = synth_corpus(&SynthConfig {
        n_total: 300,
        labeled_fraction: 0.15,
        n_heldout: 120,
        seed,
        ..SynthConfig::default()
    })
    .unwrap();
    let (gold, pool): (Vec<Document>, Vec<Document>) = corpus
        .documents
        .iter()
        .cloned()
        .partition(Document::is_labeled);
    let vocab = Vocabulary::from_docs(&corpus.documents, 2);
    let enc = EncoderConfig {
        d_model: 16,
        n_heads: 2,
        n_layers: 1,
        d_ff: 32,
        max_len: 48,
        vocab_size: vocab.len(),
        ..EncoderConfig::default()
    };
    let cfg = LoopConfig {
        confidence_threshold: 0.55,
        max_iterations: 3,
        contrastive_epochs: 2,
        head_epochs: 30,
        head_lr: 0.5,
        min_batches_per_epoch: 10,
        seed,
        timing: false,
        ..LoopConfig::default()
    };
    let data = TaskData::new(
        corpus.label_set.clone(),
        vocab,
        enc.max_len,
        &corpus.heldout,
    )
    .unwrap();
    let mut state = LoopState::new(gold, pool, &enc, corpus.label_set.len(), seed).unwrap();
    let mut sizes = vec![state.labeled.len()];
    let threshold = cfg.confidence_threshold;
    let stop = run_method(method, &mut state, &data, &cfg, &mut |ev| {
        ev.state.check_invariants()?;
        assert!(ev.promoted.iter().all(|p| p.confidence >= threshold));
        assert_eq!(ev.report.promoted_count, ev.promoted.len());
        assert_eq!(ev.report.labeled_count, ev.state.labeled.len());
        assert_eq!(
            ev.pool_ids.len(),
            ev.state.unlabeled.len() + ev.promoted.len()
        );
        sizes.push(ev.state.labeled.len());
        Ok(())
    })
    .unwrap();
    (state, stop, sizes)
}

#[test]
fn loop_grows_the_labeled_set_and_keeps_it_disjoint() {
    let (state, stop, sizes) = small_run(Method::CrlPlus, 3);
    assert!(state.iteration >= 1 && state.iteration <= 3);
    assert!(
        !state.promotions.is_empty(),
        "nothing promoted, {stop:?}, {:?}",
        state.history
    );
    assert_eq!(state.history.len(), state.iteration);
    assert!(sizes.windows(2).all(|w| w[1] >= w[0]), "{sizes:?}");
    assert_eq!(state.labeled.len() + state.unlabeled.len(), 300);
    if stop == StopReason::NoPromotions {
        assert_eq!(state.history.last().unwrap().promoted_count, 0);
    }
    let labeled: HashSet<&str> = state.labeled.iter().map(|d| d.id.as_str()).collect();
    assert!(state
        .unlabeled
        .iter()
        .all(|d| !labeled.contains(d.id.as_str())));
    for p in &state.promotions {
        let d = state.labeled.iter().find(|d| d.id == p.id).unwrap();
        assert_eq!(d.label(), Some(p.label.as_str()));
        assert!(matches!(d.provenance(), Provenance::Pseudo { .. }));
    }
    // promotions within an iteration come most confident first
    for w in state.promotions.windows(2) {
        if w[0].iteration == w[1].iteration {
            assert!(w[0].confidence >= w[1].confidence);
        }
    }
}

#[test]
fn runs_are_deterministic() {
    let (a, _, _) = small_run(Method::CrlPlus, 5);
    let (b, _, _) = small_run(Method::CrlPlus, 5);
    assert_eq!(a.history, b.history);
    assert_eq!(a.promotions, b.promotions);
    assert_eq!(
        a.checkpoint().to_bytes().unwrap(),
        b.checkpoint().to_bytes().unwrap()
    );
}

#[test]
fn baseline_without_pseudo_labels_promotes_nothing() {
    let (state, stop, _) = small_run(Method::Crl, 3);
    assert_eq!(state.iteration, 1);
    assert!(state.promotions.is_empty());
    assert_eq!(stop, StopReason::NoPromotions);
}

#[test]
fn end_to_end_variant_follows_the_same_rules() {
    let (state, _, sizes) = small_run(Method::ActiveLearning, 3);
    assert!(sizes.windows(2).all(|w| w[1] >= w[0]));
    state.check_invariants().unwrap();
}

use std::fmt;
use std::time::Instant;

use crate::encoder::{freeze_encoder, EncoderModel};
use crate::error::{Error, Result};
use crate::metrics::overall;
use crate::numerics::SeededRng;

use super::phases::{
    contrastive_phase, end_to_end_phase, evaluate, head_phase, predict, Predictions, TaskData,
};
use super::state::init_models;
use super::{IterationReport, LoopConfig, LoopState, MetricName, Promotion};

const LOOP_STREAM: u64 = 0x100b;

/// The three pipelines compared in the benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    /// Contrastive pre-training, frozen-encoder head and the self-training loop.
    CrlPlus,
    /// Contrastive pre-training and head, one pass, no pseudo-labels.
    Crl,
    /// The same loop with end-to-end cross-entropy in place of the
    /// contrastive phase and frozen head.
    ActiveLearning,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::CrlPlus, Method::Crl, Method::ActiveLearning];

    pub fn name(self) -> &'static str {
        match self {
            Method::CrlPlus => "CRL+",
            Method::Crl => "CRL",
            Method::ActiveLearning => "Active Learning",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Trainer {
    Contrastive,
    EndToEnd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    MaxIterations,
    NoPromotions,
    TargetReached,
}

/// What an observer sees after each iteration.
#[derive(Debug)]
pub struct IterationEvent<'a> {
    pub state: &'a LoopState,
    /// Ids of the pool as scored this iteration, before promotion.
    pub pool_ids: &'a [String],
    pub pool: &'a Predictions,
    pub promoted: &'a [Promotion],
    pub report: &'a IterationReport,
}

pub type Observer<'o> = dyn FnMut(&IterationEvent<'_>) -> Result<()> + 'o;

/// Fails unless at least two classes have two or more labeled documents.
pub fn check_trainable(state: &LoopState) -> Result<()> {
    let counts = state.class_counts();
    let ok = counts.values().filter(|&&c| c >= 2).count();
    if ok >= 2 {
        return Ok(());
    }
    let thin: Vec<String> = counts
        .iter()
        .filter(|(_, &c)| c < 2)
        .map(|(l, c)| format!("{l:?} ({c})"))
        .collect();
    Err(Error::Degenerate(format!(
        "need at least two classes with two or more labeled documents; {} qualify{}",
        ok,
        if thin.is_empty() {
            String::new()
        } else {
            format!(", too small: {}", thin.join(", "))
        }
    )))
}

fn iteration_inner(
    state: &mut LoopState,
    data: &TaskData,
    cfg: &LoopConfig,
    trainer: Trainer,
    observer: &mut Observer<'_>,
) -> Result<usize> {
    check_trainable(state)?;
    let started = Instant::now();
    let t = state.iteration + 1;
    let rng = SeededRng::new(cfg.seed, LOOP_STREAM).derive(t as u64);

    if !cfg.warm_start && t > 1 {
        let (e, h) = init_models(state.encoder.config(), data.labels.len(), cfg.seed)?;
        state.encoder = e;
        state.head = h;
    }
    let rows = data.rows(&state.labeled)?;
    let labels = data.label_indices(&state.labeled)?;
    match trainer {
        Trainer::Contrastive => {
            let mut encoder =
                EncoderModel::from_params(state.encoder.config().clone(), state.encoder.params())?;
            let stats = contrastive_phase(&mut encoder, &rows, &labels, cfg, &rng.derive(0))?;
            log::info!(
                "iteration {t}: contrastive phase {} steps, mean loss {:.4}",
                stats.steps,
                stats.mean_loss
            );
            state.encoder = freeze_encoder(encoder);
            let stats = head_phase(
                &state.encoder,
                &mut state.head,
                &rows,
                &labels,
                cfg,
                &rng.derive(1),
            )?;
            log::info!("iteration {t}: head phase mean loss {:.4}", stats.mean_loss);
        }
        Trainer::EndToEnd => {
            let stats = end_to_end_phase(
                &mut state.encoder,
                &mut state.head,
                &rows,
                &labels,
                cfg,
                &rng.derive(2),
            )?;
            log::info!(
                "iteration {t}: end-to-end phase mean loss {:.4}",
                stats.mean_loss
            );
        }
    }

    let pool_rows = data.rows(&state.unlabeled)?;
    let pool = predict(&state.encoder, &state.head, &pool_rows)?;
    let mut picked: Vec<usize> = (0..pool.confidence.len())
        .filter(|&i| pool.confidence[i] >= cfg.confidence_threshold)
        .collect();
    picked.sort_by(|&a, &b| {
        pool.confidence[b]
            .total_cmp(&pool.confidence[a])
            .then_with(|| state.unlabeled[a].id.cmp(&state.unlabeled[b].id))
    });
    if let Some(cap) = cfg.max_promotions {
        picked.truncate(cap);
    }
    let pool_ids: Vec<String> = state.unlabeled.iter().map(|d| d.id.clone()).collect();
    let promoted: Vec<Promotion> = picked
        .iter()
        .map(|&i| Promotion {
            iteration: t,
            id: pool_ids[i].clone(),
            label: data.labels.name(pool.predicted[i]).to_owned(),
            confidence: pool.confidence[i],
        })
        .collect();
    let mut take = vec![false; state.unlabeled.len()];
    for &i in &picked {
        take[i] = true;
    }
    let mut docs: Vec<Option<_>> = std::mem::take(&mut state.unlabeled)
        .into_iter()
        .map(Some)
        .collect();
    for (&i, p) in picked.iter().zip(&promoted) {
        let doc = docs[i].take().expect("picked once");
        state.labeled.push(doc.promote(p.label.clone(), t));
    }
    state.unlabeled = docs.into_iter().flatten().collect();
    state.promotions.extend(promoted.iter().cloned());

    let cm = evaluate(
        &state.encoder,
        &state.head,
        &data.val_rows,
        &data.val_labels,
    )?;
    let o = overall(&cm);
    let mean_conf = (!promoted.is_empty()).then(|| {
        promoted
            .iter()
            .map(|p| f64::from(p.confidence))
            .sum::<f64>()
            / promoted.len() as f64
    });
    let report = IterationReport {
        iteration: t,
        labeled_count: state.labeled.len(),
        promoted_count: promoted.len(),
        mean_promotion_confidence: mean_conf,
        val_accuracy: o.accuracy,
        val_precision_weighted: o.precision,
        val_recall_weighted: o.recall,
        val_f1_weighted: o.f_measure,
        wall_seconds: if cfg.timing {
            started.elapsed().as_secs_f64()
        } else {
            0.0
        },
    };
    state.iteration = t;
    state.history.push(report.clone());
    state.check_invariants()?;
    observer(&IterationEvent {
        state,
        pool_ids: &pool_ids,
        pool: &pool,
        promoted: &promoted,
        report: &report,
    })?;
    Ok(promoted.len())
}

/// One iteration of the contrastive self-training loop. Returns the number
/// of promoted documents.
pub fn run_iteration(state: &mut LoopState, data: &TaskData, cfg: &LoopConfig) -> Result<usize> {
    cfg.validate()?;
    iteration_inner(state, data, cfg, Trainer::Contrastive, &mut |_| Ok(()))
}

fn target_reached(cfg: &LoopConfig, r: &IterationReport) -> bool {
    cfg.target_metric.is_some_and(|tm| {
        let v = match tm.name {
            MetricName::Accuracy => r.val_accuracy,
            MetricName::Precision => r.val_precision_weighted,
            MetricName::Recall => r.val_recall_weighted,
            MetricName::F1 => r.val_f1_weighted,
        };
        v >= tm.value
    })
}

fn loop_with(
    state: &mut LoopState,
    data: &TaskData,
    cfg: &LoopConfig,
    trainer: Trainer,
    observer: &mut Observer<'_>,
) -> Result<StopReason> {
    cfg.validate()?;
    for _ in 0..cfg.max_iterations {
        let t = state.iteration + 1;
        let promoted = iteration_inner(state, data, cfg, trainer, observer)
            .map_err(|e| e.context(format!("iteration {t}")))?;
        let report = state.history.last().expect("iteration recorded");
        if target_reached(cfg, report) {
            return Ok(StopReason::TargetReached);
        }
        if promoted == 0 {
            return Ok(StopReason::NoPromotions);
        }
    }
    Ok(StopReason::MaxIterations)
}

/// Iterates until `max_iterations`, an iteration with no promotions, or the
/// target metric, whichever comes first.
pub fn run_loop(
    state: &mut LoopState,
    data: &TaskData,
    cfg: &LoopConfig,
    observer: &mut Observer<'_>,
) -> Result<StopReason> {
    loop_with(state, data, cfg, Trainer::Contrastive, observer)
}

/// The contrastive pipeline without pseudo-labelling: one iteration at an
/// unreachable threshold.
pub fn train_crl_only(
    state: &mut LoopState,
    data: &TaskData,
    cfg: &LoopConfig,
    observer: &mut Observer<'_>,
) -> Result<StopReason> {
    let once = LoopConfig {
        max_iterations: 1,
        confidence_threshold: 1.01,
        ..cfg.clone()
    };
    loop_with(state, data, &once, Trainer::Contrastive, observer)
}

/// The loop with end-to-end cross-entropy training instead of the
/// contrastive phase and frozen head.
pub fn train_al_only(
    state: &mut LoopState,
    data: &TaskData,
    cfg: &LoopConfig,
    observer: &mut Observer<'_>,
) -> Result<StopReason> {
    loop_with(state, data, cfg, Trainer::EndToEnd, observer)
}

pub fn run_method(
    method: Method,
    state: &mut LoopState,
    data: &TaskData,
    cfg: &LoopConfig,
    observer: &mut Observer<'_>,
) -> Result<StopReason> {
    match method {
        Method::CrlPlus => run_loop(state, data, cfg, observer),
        Method::Crl => train_crl_only(state, data, cfg, observer),
        Method::ActiveLearning => train_al_only(state, data, cfg, observer),
    }
}

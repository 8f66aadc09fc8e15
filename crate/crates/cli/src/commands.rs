//! The individual commands. Each takes a resolved, validated [`RunConfig`]
//! and writes its outputs under `out_dir`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crlplus_core::corpus::{
    load_jsonl, split, synth_corpus, tokenize, write_jsonl, Dataset, DatasetPaths, Document,
    LabelSet, Vocabulary,
};
use crlplus_core::encoder::{freeze_encoder, Checkpoint, ClassifierHead, EncoderModel};
use crlplus_core::metrics::MetricReport;
use crlplus_core::numerics::SeededRng;
use crlplus_core::selftrain::{
    check_trainable, contrastive_phase, evaluate, head_phase, predict, run_method, IterationEvent,
    LoopState, PhaseStats, StopReason, TaskData,
};

use crate::{create_dir, write_file, CliError, Result, RunConfig};

const PRETRAIN_STREAM: u64 = 0x9e7a;
const TRAIN_STREAM: u64 = 0x7a17;

pub const MODEL_FILE: &str = "model.crlp";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const CONFIG_ECHO: &str = "resolved.cfg";
pub const REPORT_FILE: &str = "report.jsonl";
pub const PROMOTIONS_FILE: &str = "promotions.jsonl";

/// Callback run after every loop iteration.
pub type Hook<'h> = dyn FnMut(&IterationEvent<'_>) -> crlplus_core::Result<()> + 'h;

fn data_dir(cfg: &RunConfig) -> Result<DatasetPaths> {
    cfg.data
        .as_ref()
        .map(DatasetPaths::new)
        .ok_or_else(|| CliError::Config("no dataset directory; set data or pass --data".into()))
}

fn labels_path(cfg: &RunConfig) -> Result<PathBuf> {
    if let Some(p) = &cfg.labels {
        return Ok(p.clone());
    }
    data_dir(cfg)
        .map(|d| d.labels())
        .map_err(|_| CliError::Config("no label file; set labels or data".into()))
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    Ok(Dataset::load(&data_dir(cfg)?, cfg.labels.as_deref())?)
}

fn echo_config(cfg: &RunConfig) -> Result<()> {
    write_file(&cfg.out_dir.join(CONFIG_ECHO), cfg.to_text())
}

fn write_model(dir: &Path, ckpt: &Checkpoint, vocab: &Vocabulary) -> Result<()> {
    ckpt.write(&dir.join(MODEL_FILE))?;
    vocab.write(&dir.join(VOCAB_FILE))?;
    Ok(())
}

/// Loads a checkpoint and its vocabulary and checks both against `labels`.
fn load_model(
    cfg: &RunConfig,
    labels: &LabelSet,
) -> Result<(EncoderModel, ClassifierHead, Vocabulary)> {
    let path = cfg.checkpoint.as_ref().ok_or_else(|| {
        CliError::Config("no checkpoint; set checkpoint or pass --checkpoint".into())
    })?;
    let (encoder, head) = Checkpoint::read(path)?.to_model(cfg.n_heads, cfg.dropout)?;
    let vocab_path = match &cfg.vocab {
        Some(v) => v.clone(),
        None => path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(VOCAB_FILE),
    };
    let vocab = Vocabulary::load(&vocab_path)?;
    if vocab.len() != encoder.config().vocab_size {
        return Err(crlplus_core::Error::Data(format!(
            "{} has {} entries but the checkpoint embeds {}",
            vocab_path.display(),
            vocab.len(),
            encoder.config().vocab_size
        ))
        .into());
    }
    if head.n_classes() != labels.len() {
        return Err(crlplus_core::Error::Data(format!(
            "checkpoint head has {} classes but the label file lists {}",
            head.n_classes(),
            labels.len()
        ))
        .into());
    }
    Ok((encoder, head, vocab))
}

fn token_rows(
    docs: &[Document],
    vocab: &Vocabulary,
    max_len: usize,
    labels: &LabelSet,
) -> Result<Vec<Vec<u32>>> {
    if docs.is_empty() {
        return Ok(Vec::new());
    }
    let batch = tokenize(docs, vocab, max_len, labels)?;
    Ok((0..batch.len())
        .map(|i| batch.real_ids(i).to_vec())
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthDataset {
    pub dataset: Dataset,
    /// True labels of the unlabeled training documents.
    pub sealed: Vec<Document>,
    pub warnings: Vec<String>,
}

/// The synthetic corpus as a dataset: the pool is the training split and the
/// held-out documents are divided between validation and test.
pub fn synth_dataset(cfg: &RunConfig) -> Result<SynthDataset> {
    let corpus = synth_corpus(&cfg.synth_config())?;
    let parts = split(&corpus.heldout, cfg.split_ratios(), cfg.seed)?;
    if !parts.train.is_empty() {
        // classes too small for both splits fall back to train; keep them in
        // test so no held-out document leaks into training
        log::warn!(
            "{} held-out documents could not be split and went to test",
            parts.train.len()
        );
    }
    let mut test = parts.test;
    test.extend(parts.train);
    Ok(SynthDataset {
        dataset: Dataset {
            labels: corpus.label_set,
            train: corpus.documents,
            val: parts.val,
            test,
        },
        sealed: corpus.sealed_truth,
        warnings: parts.warnings,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthSummary {
    pub gold: usize,
    pub unlabeled: usize,
    pub val: usize,
    pub test: usize,
}

pub fn synth(cfg: &RunConfig, force: bool) -> Result<SynthSummary> {
    if cfg.out_dir.exists() && !force {
        return Err(CliError::Config(format!(
            "{} already exists; pass --force to overwrite",
            cfg.out_dir.display()
        )));
    }
    let s = synth_dataset(cfg)?;
    for w in &s.warnings {
        log::warn!("{w}");
    }
    create_dir(&cfg.out_dir)?;
    let paths = DatasetPaths::new(&cfg.out_dir);
    s.dataset.write(&paths)?;
    write_jsonl(&paths.train_truth(), &s.sealed)?;
    echo_config(cfg)?;
    Ok(SynthSummary {
        gold: s.dataset.gold_train().len(),
        unlabeled: s.sealed.len(),
        val: s.dataset.val.len(),
        test: s.dataset.test.len(),
    })
}

/// Contrastive phase only, on the gold training documents. Writes the
/// encoder with a freshly initialized head.
pub fn pretrain(cfg: &RunConfig) -> Result<PhaseStats> {
    let ds = load_dataset(cfg)?;
    let vocab = Vocabulary::from_docs(&ds.train, cfg.min_freq);
    let ecfg = cfg.encoder_config(vocab.len());
    let lcfg = cfg.loop_config();
    let state = LoopState::new(
        ds.gold_train(),
        Vec::new(),
        &ecfg,
        ds.labels.len(),
        cfg.seed,
    )?;
    check_trainable(&state)?;
    let data = TaskData::new(ds.labels.clone(), vocab, cfg.max_len, &ds.val)?;
    let rows = data.rows(&state.labeled)?;
    let labels = data.label_indices(&state.labeled)?;
    let LoopState {
        mut encoder, head, ..
    } = state;
    let stats = contrastive_phase(
        &mut encoder,
        &rows,
        &labels,
        &lcfg,
        &SeededRng::new(cfg.seed, PRETRAIN_STREAM),
    )?;
    let encoder = freeze_encoder(encoder);
    create_dir(&cfg.out_dir)?;
    write_model(
        &cfg.out_dir,
        &Checkpoint::from_model(&encoder, &head),
        &data.vocab,
    )?;
    echo_config(cfg)?;
    Ok(stats)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainSummary {
    pub stats: PhaseStats,
    pub val_accuracy: f64,
}

/// Head phase only, on top of a checkpoint's frozen encoder.
pub fn train(cfg: &RunConfig) -> Result<TrainSummary> {
    let ds = load_dataset(cfg)?;
    let (encoder, mut head, vocab) = load_model(cfg, &ds.labels)?;
    let encoder = freeze_encoder(encoder);
    let max_len = encoder.config().max_len;
    let data = TaskData::new(ds.labels.clone(), vocab, max_len, &ds.val)?;
    let gold = ds.gold_train();
    let rows = data.rows(&gold)?;
    let labels = data.label_indices(&gold)?;
    let stats = head_phase(
        &encoder,
        &mut head,
        &rows,
        &labels,
        &cfg.loop_config(),
        &SeededRng::new(cfg.seed, TRAIN_STREAM),
    )?;
    let cm = evaluate(&encoder, &head, &data.val_rows, &data.val_labels)?;
    create_dir(&cfg.out_dir)?;
    write_model(
        &cfg.out_dir,
        &Checkpoint::from_model(&encoder, &head),
        &data.vocab,
    )?;
    echo_config(cfg)?;
    Ok(TrainSummary {
        stats,
        val_accuracy: crlplus_core::metrics::overall(&cm).accuracy,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoopSummary {
    pub stop: StopReason,
    pub iterations: usize,
    pub labeled: usize,
    pub unlabeled: usize,
    pub val_accuracy: f64,
    /// Hex SHA-256 of the final checkpoint.
    pub checkpoint_hash: String,
}

/// The full loop for `cfg.method`. Writes `iter_<n>.crlp` after every
/// iteration, then the final model, the report and the promotion log.
pub fn run_loop(cfg: &RunConfig, hook: &mut Hook<'_>) -> Result<LoopSummary> {
    let ds = load_dataset(cfg)?;
    let vocab = Vocabulary::from_docs(&ds.train, cfg.min_freq);
    let ecfg = cfg.encoder_config(vocab.len());
    let lcfg = cfg.loop_config();
    let mut state = LoopState::new(
        ds.gold_train(),
        ds.unlabeled_train(),
        &ecfg,
        ds.labels.len(),
        cfg.seed,
    )?;
    let data = TaskData::new(ds.labels.clone(), vocab, cfg.max_len, &ds.val)?;
    create_dir(&cfg.out_dir)?;
    echo_config(cfg)?;

    let out = cfg.out_dir.clone();
    let mut observer = |ev: &IterationEvent<'_>| {
        let r = ev.report;
        log::info!(
            "iteration {}: promoted {}, labeled {}, val accuracy {:.4}",
            r.iteration,
            r.promoted_count,
            r.labeled_count,
            r.val_accuracy
        );
        ev.state
            .checkpoint()
            .write(&out.join(format!("iter_{}.crlp", r.iteration)))?;
        hook(ev)
    };
    let stop = run_method(cfg.method.0, &mut state, &data, &lcfg, &mut observer)?;

    let ckpt = state.checkpoint();
    write_model(&cfg.out_dir, &ckpt, &data.vocab)?;
    let mut report = String::new();
    for r in &state.history {
        let _ = writeln!(report, "{}", to_json_line(r));
    }
    write_file(&cfg.out_dir.join(REPORT_FILE), report)?;
    let mut promotions = String::new();
    for p in &state.promotions {
        let _ = writeln!(promotions, "{}", to_json_line(p));
    }
    write_file(&cfg.out_dir.join(PROMOTIONS_FILE), promotions)?;

    Ok(LoopSummary {
        stop,
        iterations: state.iteration,
        labeled: state.labeled.len(),
        unlabeled: state.unlabeled.len(),
        val_accuracy: state.history.last().map_or(0.0, |r| r.val_accuracy),
        checkpoint_hash: ckpt.hash()?,
    })
}

fn to_json_line(v: &impl Serialize) -> String {
    serde_json::to_string(v).expect("plain structs serialize")
}

fn input_path(cfg: &RunConfig) -> Result<PathBuf> {
    if let Some(p) = &cfg.input {
        return Ok(p.clone());
    }
    data_dir(cfg)
        .map(|d| d.test())
        .map_err(|_| CliError::Config("no input file; set input or data".into()))
}

/// Scores a labeled JSONL file and writes `report.txt` and `report.json`.
pub fn eval(cfg: &RunConfig) -> Result<MetricReport> {
    let labels = LabelSet::load(&labels_path(cfg)?)?;
    let (encoder, head, vocab) = load_model(cfg, &labels)?;
    let input = input_path(cfg)?;
    let docs = load_jsonl(&input, Some(&labels))?;
    if let Some(d) = docs.iter().find(|d| !d.is_labeled()) {
        return Err(crlplus_core::Error::Data(format!(
            "{}: document {:?} has no gold label",
            input.display(),
            d.id
        ))
        .into());
    }
    let data = TaskData::new(labels, vocab, encoder.config().max_len, &docs)?;
    let cm = evaluate(&encoder, &head, &data.val_rows, &data.val_labels)?;
    let report = MetricReport::new(&cm, data.labels.names())?;
    create_dir(&cfg.out_dir)?;
    write_file(&cfg.out_dir.join("report.txt"), report.to_text())?;
    write_file(&cfg.out_dir.join("report.json"), report.to_json() + "\n")?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Prediction {
    pub id: String,
    pub label: String,
    pub confidence: f32,
}

/// Labels every document of a JSONL file; gold labels, if any, are ignored.
/// Writes `predictions.jsonl`.
pub fn predict_file(cfg: &RunConfig) -> Result<Vec<Prediction>> {
    let labels = LabelSet::load(&labels_path(cfg)?)?;
    let (encoder, head, vocab) = load_model(cfg, &labels)?;
    let docs: Vec<Document> = load_jsonl(&input_path(cfg)?, Some(&labels))?
        .iter()
        .map(Document::without_label)
        .collect();
    let rows = token_rows(&docs, &vocab, encoder.config().max_len, &labels)?;
    let p = predict(&encoder, &head, &rows)?;
    let out: Vec<Prediction> = docs
        .iter()
        .enumerate()
        .map(|(i, d)| Prediction {
            id: d.id.clone(),
            label: labels.name(p.predicted[i]).to_owned(),
            confidence: p.confidence[i],
        })
        .collect();
    let mut text = String::new();
    for p in &out {
        let _ = writeln!(text, "{}", to_json_line(p));
    }
    create_dir(&cfg.out_dir)?;
    write_file(&cfg.out_dir.join("predictions.jsonl"), text)?;
    Ok(out)
}

//! Flat `key = value` run configuration.
//!
//! Resolution order is defaults, then the config file, then `--set` pairs and
//! named flags. [`RunConfig::to_text`] writes every key, so the echoed file
//! reproduces the run on its own.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crlplus_core::contrastive::{DenominatorMode, LossConfig};
use crlplus_core::corpus::{SplitRatios, SynthConfig};
use crlplus_core::encoder::{EncoderConfig, Pooling};
use crlplus_core::selftrain::{LoopConfig, Method, MetricName, TargetMetric};

use crate::CliError;

/// Which pipeline `loop` runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MethodArg(pub Method);

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub seed: u64,
    pub threads: usize,
    pub method: MethodArg,
    pub seeds: usize,

    pub n_total: usize,
    pub labeled_frac: f64,
    pub template_noise: f64,
    pub n_heldout: usize,
    pub val_ratio: f64,
    pub test_ratio: f64,

    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub dropout: f32,
    pub max_len: usize,
    pub min_freq: usize,

    pub temperature: f32,
    pub denominator: DenominatorMode,

    pub threshold: f32,
    pub max_iters: usize,
    pub target: Option<TargetMetric>,
    pub max_promotions: Option<usize>,
    pub warm_start: bool,
    pub contrastive_epochs: usize,
    pub head_epochs: usize,
    pub contrastive_batch: usize,
    pub classes_per_batch: usize,
    pub n_views: usize,
    pub min_batches_per_epoch: usize,
    pub head_batch: usize,
    pub balanced_head: bool,
    pub lr: f32,
    pub head_lr: f32,
    pub clip: Option<f32>,
    pub timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let enc = EncoderConfig::default();
        let lp = LoopConfig::default();
        let syn = SynthConfig::default();
        Self {
            data: None,
            labels: None,
            out_dir: PathBuf::from("out"),
            checkpoint: None,
            input: None,
            vocab: None,
            seed: 7,
            threads: 1,
            method: MethodArg(Method::CrlPlus),
            seeds: 3,

            n_total: syn.n_total,
            labeled_frac: syn.labeled_fraction,
            template_noise: syn.template_noise,
            n_heldout: syn.n_heldout,
            val_ratio: 0.5,
            test_ratio: 0.5,

            d_model: enc.d_model,
            n_heads: enc.n_heads,
            n_layers: enc.n_layers,
            d_ff: enc.d_ff,
            dropout: enc.dropout_p,
            max_len: enc.max_len,
            min_freq: 2,

            temperature: lp.loss.temperature,
            denominator: lp.loss.denominator,

            threshold: lp.confidence_threshold,
            max_iters: lp.max_iterations,
            target: lp.target_metric,
            max_promotions: lp.max_promotions,
            warm_start: lp.warm_start,
            contrastive_epochs: lp.contrastive_epochs,
            head_epochs: lp.head_epochs,
            contrastive_batch: lp.contrastive_batch,
            classes_per_batch: lp.classes_per_batch,
            n_views: lp.n_views,
            min_batches_per_epoch: lp.min_batches_per_epoch,
            head_batch: lp.head_batch,
            balanced_head: lp.balanced_head,
            lr: lp.lr,
            head_lr: lp.head_lr,
            clip: lp.clip,
            // reports stay byte-identical across runs unless asked otherwise
            timing: false,
        }
    }
}

/// A value that can live in the flat config file.
trait Value: Sized {
    fn parse(s: &str) -> Result<Self, String>;
    fn render(&self) -> String;
}

macro_rules! display_value {
    ($($t:ty),*) => {$(
        impl Value for $t {
            fn parse(s: &str) -> Result<Self, String> {
                s.parse().map_err(|e| format!("{e}"))
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}
display_value!(u64, usize, f64, f32, bool);

impl Value for PathBuf {
    fn parse(s: &str) -> Result<Self, String> {
        if s.is_empty() {
            return Err("path must not be empty".into());
        }
        Ok(PathBuf::from(s))
    }
    fn render(&self) -> String {
        self.display().to_string()
    }
}

/// `none` (or an empty value for paths) means unset.
impl<T: Value> Value for Option<T> {
    fn parse(s: &str) -> Result<Self, String> {
        if s.is_empty() || s == "none" {
            Ok(None)
        } else {
            T::parse(s).map(Some)
        }
    }
    fn render(&self) -> String {
        self.as_ref().map_or_else(|| "none".into(), Value::render)
    }
}

impl Value for MethodArg {
    fn parse(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "crl+" | "crlplus" => Ok(Self(Method::CrlPlus)),
            "crl" => Ok(Self(Method::Crl)),
            "al" | "active_learning" => Ok(Self(Method::ActiveLearning)),
            _ => Err(format!("unknown method {s:?} (crl+, crl, al)")),
        }
    }
    fn render(&self) -> String {
        match self.0 {
            Method::CrlPlus => "crl+",
            Method::Crl => "crl",
            Method::ActiveLearning => "al",
        }
        .into()
    }
}

impl Value for DenominatorMode {
    fn parse(s: &str) -> Result<Self, String> {
        match s {
            "supcon_standard" => Ok(Self::SupConStandard),
            "paper_literal" => Ok(Self::PaperLiteral),
            _ => Err(format!(
                "unknown denominator {s:?} (supcon_standard, paper_literal)"
            )),
        }
    }
    fn render(&self) -> String {
        match self {
            Self::SupConStandard => "supcon_standard",
            Self::PaperLiteral => "paper_literal",
        }
        .into()
    }
}

/// Written `metric:value`, e.g. `accuracy:0.9`.
impl Value for TargetMetric {
    fn parse(s: &str) -> Result<Self, String> {
        let (name, value) = s
            .split_once(':')
            .ok_or_else(|| format!("expected metric:value, got {s:?}"))?;
        let name: MetricName = name.trim().parse().map_err(|e| format!("{e}"))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|e| format!("bad target value: {e}"))?;
        Ok(Self { name, value })
    }
    fn render(&self) -> String {
        format!("{}:{}", self.name, self.value)
    }
}

macro_rules! keys {
    ($($key:literal => $field:ident, $doc:literal;)*) => {
        /// Every recognized key with a one-line description.
        pub const KEYS: &[(&str, &str)] = &[$(($key, $doc)),*];

        impl RunConfig {
            /// Sets one key from its text form.
            pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
                let value = value.trim();
                match key.trim() {
                    $($key => {
                        self.$field = Value::parse(value).map_err(|e| {
                            CliError::Config(format!("{key} = {value:?}: {e}"))
                        })?;
                    })*
                    other => {
                        return Err(CliError::Config(format!("unknown config key {other:?}")))
                    }
                }
                Ok(())
            }

            fn render_key(&self, key: &str) -> String {
                match key {
                    $($key => self.$field.render(),)*
                    _ => unreachable!("key list and match agree"),
                }
            }
        }
    };
}

keys! {
    "data" => data, "dataset directory holding train/val/test JSONL and labels.txt";
    "labels" => labels, "label file (default: <data>/labels.txt)";
    "out_dir" => out_dir, "output directory";
    "checkpoint" => checkpoint, "input checkpoint for train, eval and predict";
    "input" => input, "JSONL file for eval and predict (default: <data>/test.jsonl)";
    "vocab" => vocab, "vocabulary file (default: vocab.txt beside the checkpoint)";
    "seed" => seed, "master seed";
    "threads" => threads, "worker threads; 1 is the deterministic default";
    "method" => method, "pipeline run by loop: crl+, crl or al";
    "seeds" => seeds, "number of consecutive seeds compare runs";
    "n_total" => n_total, "synth: pool size, gold plus unlabeled";
    "labeled_frac" => labeled_frac, "synth: gold fraction of the pool";
    "template_noise" => template_noise, "synth: per-slot chance of a cross-class keyword";
    "n_heldout" => n_heldout, "synth: extra gold documents for validation and test";
    "val_ratio" => val_ratio, "share of held-out documents sent to validation";
    "test_ratio" => test_ratio, "share of held-out documents sent to test";
    "d_model" => d_model, "encoder width";
    "n_heads" => n_heads, "attention heads";
    "n_layers" => n_layers, "encoder layers";
    "d_ff" => d_ff, "feed-forward width";
    "dropout" => dropout, "dropout rate, also the view augmentation";
    "max_len" => max_len, "tokens kept per document";
    "min_freq" => min_freq, "minimum training-text count for a vocabulary entry";
    "temperature" => temperature, "contrastive temperature";
    "denominator" => denominator, "supcon_standard or paper_literal";
    "threshold" => threshold, "minimum max-softmax confidence for promotion";
    "max_iters" => max_iters, "iteration limit";
    "target" => target, "early stop on validation, metric:value or none";
    "max_promotions" => max_promotions, "per-iteration promotion cap or none";
    "warm_start" => warm_start, "carry parameters across iterations";
    "contrastive_epochs" => contrastive_epochs, "contrastive epochs per iteration";
    "head_epochs" => head_epochs, "head epochs per iteration";
    "contrastive_batch" => contrastive_batch, "documents per contrastive batch";
    "classes_per_batch" => classes_per_batch, "classes drawn per contrastive batch";
    "n_views" => n_views, "dropout views per document";
    "min_batches_per_epoch" => min_batches_per_epoch, "floor on contrastive batches per epoch";
    "head_batch" => head_batch, "documents per classification batch";
    "balanced_head" => balanced_head, "inverse-frequency class weights in cross-entropy";
    "lr" => lr, "encoder learning rate";
    "head_lr" => head_lr, "head learning rate";
    "clip" => clip, "global gradient-norm clip or none";
    "timing" => timing, "record wall-clock seconds in reports";
}

impl RunConfig {
    /// Applies a config file's `key = value` lines. Blank lines and `#`
    /// comments are skipped; a key given twice is an error.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("{origin}:{}: expected key = value", n + 1))
            })?;
            let k = k.trim();
            if !seen.insert(k.to_owned()) {
                return Err(CliError::Config(format!(
                    "{origin}:{}: {k} given twice",
                    n + 1
                )));
            }
            self.set(k, v)
                .map_err(|e| CliError::Config(format!("{origin}:{}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Applies `key=value` overrides.
    pub fn apply_pairs<S: AsRef<str>>(&mut self, pairs: &[S]) -> Result<(), CliError> {
        for p in pairs {
            let p = p.as_ref();
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects key=value, got {p:?}")))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Every key in declaration order, one per line.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# resolved configuration\n");
        for (key, doc) in KEYS {
            let _ = writeln!(out, "# {doc}");
            let _ = writeln!(out, "{key} = {}", self.render_key(key));
        }
        out
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.threads == 0 {
            return bad("threads must be at least 1".into());
        }
        if self.seeds == 0 {
            return bad("seeds must be at least 1".into());
        }
        if self.min_freq == 0 {
            return bad("min_freq must be at least 1".into());
        }
        let r = self.val_ratio + self.test_ratio;
        if !(self.val_ratio > 0.0 && self.test_ratio > 0.0 && (r - 1.0).abs() < 1e-9) {
            return bad(format!(
                "val_ratio and test_ratio must be positive and sum to 1, got {} and {}",
                self.val_ratio, self.test_ratio
            ));
        }
        self.encoder_config(2).validate().map_err(config_err)?;
        self.loop_config().validate().map_err(config_err)?;
        Ok(())
    }

    pub fn encoder_config(&self, vocab_size: usize) -> EncoderConfig {
        EncoderConfig {
            d_model: self.d_model,
            n_heads: self.n_heads,
            n_layers: self.n_layers,
            d_ff: self.d_ff,
            dropout_p: self.dropout,
            max_len: self.max_len,
            vocab_size,
            pooling: Pooling::Mean,
        }
    }

    pub fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            confidence_threshold: self.threshold,
            max_iterations: self.max_iters,
            target_metric: self.target,
            max_promotions: self.max_promotions,
            warm_start: self.warm_start,
            contrastive_epochs: self.contrastive_epochs,
            head_epochs: self.head_epochs,
            contrastive_batch: self.contrastive_batch,
            classes_per_batch: self.classes_per_batch,
            n_views: self.n_views,
            min_batches_per_epoch: self.min_batches_per_epoch,
            head_batch: self.head_batch,
            balanced_head: self.balanced_head,
            lr: self.lr,
            head_lr: self.head_lr,
            clip: self.clip,
            loss: LossConfig {
                temperature: self.temperature,
                denominator: self.denominator,
            },
            seed: self.seed,
            timing: self.timing,
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            n_total: self.n_total,
            labeled_fraction: self.labeled_frac,
            template_noise: self.template_noise,
            seed: self.seed,
            n_heldout: self.n_heldout,
            ..SynthConfig::default()
        }
    }

    pub fn split_ratios(&self) -> SplitRatios {
        SplitRatios {
            train: 0.0,
            val: self.val_ratio,
            test: self.test_ratio,
        }
    }
}

fn config_err(e: crlplus_core::Error) -> CliError {
    CliError::Config(e.to_string())
}

fn strip_comment(line: &str) -> &str {
    let t = line.trim_start();
    if t.starts_with('#') {
        return "";
    }
    match line.find(" #").or_else(|| line.find("\t#")) {
        Some(i) => &line[..i],
        None => line,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::default();
        c.set("threshold", "0.9").unwrap();
        c.set("target", "f1:0.85").unwrap();
        c.set("max_promotions", "200").unwrap();
        c.set("method", "al").unwrap();
        c.set("data", "some/dir").unwrap();
        let mut back = RunConfig::default();
        back.apply_text(&c.to_text(), "echo").unwrap();
        assert_eq!(back, c);
        assert_eq!(
            RunConfig::default().to_text().lines().count(),
            1 + 2 * KEYS.len()
        );
    }

    #[test]
    fn comments_blank_lines_and_overrides() {
        let mut c = RunConfig::default();
        c.apply_text("# top\n\nseed = 11  # trailing\nlr=0.2\n", "f")
            .unwrap();
        assert_eq!((c.seed, c.lr), (11, 0.2));
        c.apply_pairs(&["seed=12"]).unwrap();
        assert_eq!(c.seed, 12);
    }

    #[test]
    fn errors_are_config_errors() {
        let mut c = RunConfig::default();
        for text in [
            "nope = 1",
            "seed = x",
            "seed",
            "seed = 1\nseed = 2",
            "clip = -",
        ] {
            assert!(
                matches!(c.apply_text(text, "f"), Err(CliError::Config(_))),
                "{text}"
            );
        }
        let bad = RunConfig {
            threshold: 0.3,
            ..RunConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(RunConfig::default().validate().is_ok());
    }

    #[test]
    fn none_values() {
        let mut c = RunConfig::default();
        c.set("clip", "none").unwrap();
        c.set("target", "none").unwrap();
        assert_eq!((c.clip, c.target), (None, None));
        c.set("labels", "").unwrap();
        assert_eq!(c.labels, None);
    }
}

//! Command-line flags and their mapping onto [`RunConfig`] keys.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::{Result, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "crlplus",
    version,
    about = "Contrastive text classification with self-training"
)]
pub struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

/// Flags every command accepts.
#[derive(Debug, Args)]
pub struct Common {
    /// Flat `key = value` config file.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one config key; repeatable. Applied after --config.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long = "out", visible_alias = "out-dir", value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset directory (train/val/test JSONL and labels.txt).
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Defaults to vocab.txt beside the checkpoint.
    #[arg(long, value_name = "FILE")]
    pub vocab: Option<PathBuf>,
    /// JSONL to score; defaults to the dataset's test split.
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LoopArgs {
    #[arg(long)]
    pub threshold: Option<f32>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Early stop, e.g. accuracy:0.9.
    #[arg(long, value_name = "METRIC:VALUE")]
    pub target: Option<String>,
    #[arg(long)]
    pub max_promotions: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic obituary corpus.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Pool size.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        labeled_frac: Option<f64>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        n_heldout: Option<usize>,
        /// Write into an existing directory.
        #[arg(long)]
        force: bool,
    },
    /// Contrastive pre-training on the gold documents.
    Pretrain {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Train the classification head on a frozen checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_name = "FILE")]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        vocab: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Run the self-training loop.
    Loop {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        looping: LoopArgs,
        /// crl+, crl or al.
        #[arg(long)]
        method: Option<String>,
    },
    /// Score a labeled JSONL file with a checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Compare CRL+, CRL and Active Learning over several seeds.
    Compare {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        looping: LoopArgs,
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Write a label and confidence for every document of a JSONL file.
    Predict {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
}

type Overrides = Vec<(&'static str, Option<String>)>;

fn s<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(ToString::to_string)
}

fn p(v: &Option<PathBuf>) -> Option<String> {
    v.as_ref().map(|p| p.display().to_string())
}

impl Common {
    fn overrides(&self) -> Overrides {
        vec![
            ("seed", s(&self.seed)),
            ("threads", s(&self.threads)),
            ("out_dir", p(&self.out_dir)),
        ]
    }
}

impl DataArgs {
    fn overrides(&self) -> Overrides {
        vec![("data", p(&self.data)), ("labels", p(&self.labels))]
    }
}

impl ModelArgs {
    fn overrides(&self) -> Overrides {
        vec![
            ("checkpoint", p(&self.checkpoint)),
            ("vocab", p(&self.vocab)),
            ("input", p(&self.input)),
        ]
    }
}

impl LoopArgs {
    fn overrides(&self) -> Overrides {
        vec![
            ("threshold", s(&self.threshold)),
            ("max_iters", s(&self.max_iters)),
            ("target", self.target.clone()),
            ("max_promotions", s(&self.max_promotions)),
        ]
    }
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Synth { common, .. }
            | Command::Pretrain { common, .. }
            | Command::Train { common, .. }
            | Command::Loop { common, .. }
            | Command::Eval { common, .. }
            | Command::Compare { common, .. }
            | Command::Predict { common, .. } => common,
        }
    }

    fn overrides(&self) -> Overrides {
        let mut o = self.common().overrides();
        match self {
            Command::Synth {
                n,
                labeled_frac,
                noise,
                n_heldout,
                ..
            } => o.extend([
                ("n_total", s(n)),
                ("labeled_frac", s(labeled_frac)),
                ("template_noise", s(noise)),
                ("n_heldout", s(n_heldout)),
            ]),
            Command::Pretrain { data, epochs, .. } => {
                o.extend(data.overrides());
                o.push(("contrastive_epochs", s(epochs)));
            }
            Command::Train {
                data,
                checkpoint,
                vocab,
                epochs,
                ..
            } => {
                o.extend(data.overrides());
                o.extend([
                    ("checkpoint", p(checkpoint)),
                    ("vocab", p(vocab)),
                    ("head_epochs", s(epochs)),
                ]);
            }
            Command::Loop {
                data,
                looping,
                method,
                ..
            } => {
                o.extend(data.overrides());
                o.extend(looping.overrides());
                o.push(("method", method.clone()));
            }
            Command::Eval { data, model, .. } | Command::Predict { data, model, .. } => {
                o.extend(data.overrides());
                o.extend(model.overrides());
            }
            Command::Compare {
                data,
                looping,
                seeds,
                ..
            } => {
                o.extend(data.overrides());
                o.extend(looping.overrides());
                o.push(("seeds", s(seeds)));
            }
        }
        o
    }

    /// Defaults, then the config file, then `--set`, then named flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let common = self.common();
        let mut cfg = RunConfig::default();
        if let Some(path) = &common.config {
            cfg.apply_file(path)?;
        }
        cfg.apply_pairs(&common.set)?;
        for (key, value) in self.overrides() {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

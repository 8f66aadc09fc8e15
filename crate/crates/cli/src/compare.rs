//! CRL+, CRL and Active Learning side by side on shared data and seeds.

use std::fmt::Write as _;

use serde::Serialize;

use crlplus_core::corpus::{Dataset, Vocabulary};
use crlplus_core::metrics::overall;
use crlplus_core::selftrain::{evaluate, run_method, IterationEvent, LoopState, Method, TaskData};

use crate::commands::{load_dataset, synth_dataset};
use crate::{create_dir, write_file, Result, RunConfig};

/// Test-split scores of one method on one seed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodRun {
    pub method: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub iterations: usize,
    pub labeled: usize,
    pub stop: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedRuns {
    pub seed: u64,
    pub methods: Vec<MethodRun>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub method: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub seeds: Vec<u64>,
    /// Median over seeds, in the order CRL+, CRL, Active Learning.
    pub rows: Vec<Row>,
    pub runs: Vec<SeedRuns>,
}

/// Callback with the seed and method of every loop iteration.
pub type CompareHook<'h> =
    dyn FnMut(u64, Method, &IterationEvent<'_>) -> crlplus_core::Result<()> + 'h;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn run_seed(cfg: &RunConfig, ds: &Dataset, hook: &mut CompareHook<'_>) -> Result<SeedRuns> {
    let vocab = Vocabulary::from_docs(&ds.train, cfg.min_freq);
    let ecfg = cfg.encoder_config(vocab.len());
    let lcfg = cfg.loop_config();
    let data = TaskData::new(ds.labels.clone(), vocab, cfg.max_len, &ds.val)?;
    let test_rows = data.rows(&ds.test)?;
    let test_labels = data.label_indices(&ds.test)?;
    let mut methods = Vec::new();
    for method in Method::ALL {
        let mut state = LoopState::new(
            ds.gold_train(),
            ds.unlabeled_train(),
            &ecfg,
            ds.labels.len(),
            cfg.seed,
        )?;
        let stop = run_method(method, &mut state, &data, &lcfg, &mut |ev| {
            hook(cfg.seed, method, ev)
        })?;
        let o = overall(&evaluate(
            &state.encoder,
            &state.head,
            &test_rows,
            &test_labels,
        )?);
        log::info!(
            "seed {}: {method} test accuracy {:.4}",
            cfg.seed,
            o.accuracy
        );
        methods.push(MethodRun {
            method: method.name().to_owned(),
            accuracy: o.accuracy,
            precision: o.precision,
            recall: o.recall,
            f_measure: o.f_measure,
            iterations: state.iteration,
            labeled: state.labeled.len(),
            stop: format!("{stop:?}"),
        });
    }
    Ok(SeedRuns {
        seed: cfg.seed,
        methods,
    })
}

/// Runs all three methods for seeds `seed .. seed + seeds`. Without a dataset
/// directory each seed gets its own default synthetic corpus; with one, only
/// model initialization and sampling change between seeds. Scores are on the
/// test split. Writes `compare.txt` and `compare.json`.
pub fn compare(cfg: &RunConfig, hook: &mut CompareHook<'_>) -> Result<Comparison> {
    let fixed = match &cfg.data {
        Some(_) => Some(load_dataset(cfg)?),
        None => None,
    };
    let mut runs = Vec::with_capacity(cfg.seeds);
    for i in 0..cfg.seeds as u64 {
        let seeded = RunConfig {
            seed: cfg.seed + i,
            ..cfg.clone()
        };
        let ds = match &fixed {
            Some(ds) => ds.clone(),
            None => synth_dataset(&seeded)?.dataset,
        };
        runs.push(run_seed(&seeded, &ds, hook)?);
    }
    let rows = Method::ALL
        .iter()
        .enumerate()
        .map(|(m, method)| {
            let col =
                |f: fn(&MethodRun) -> f64| median(runs.iter().map(|r| f(&r.methods[m])).collect());
            Row {
                method: method.name().to_owned(),
                accuracy: col(|r| r.accuracy),
                precision: col(|r| r.precision),
                recall: col(|r| r.recall),
                f_measure: col(|r| r.f_measure),
            }
        })
        .collect();
    let cmp = Comparison {
        seeds: runs.iter().map(|r| r.seed).collect(),
        rows,
        runs,
    };
    create_dir(&cfg.out_dir)?;
    write_file(&cfg.out_dir.join("compare.txt"), cmp.to_text())?;
    write_file(
        &cfg.out_dir.join("compare.json"),
        serde_json::to_string_pretty(&cmp).expect("plain structs serialize") + "\n",
    )?;
    write_file(
        &cfg.out_dir.join(crate::commands::CONFIG_ECHO),
        cfg.to_text(),
    )?;
    Ok(cmp)
}

impl Comparison {
    pub fn row(&self, method: Method) -> Option<&Row> {
        self.rows.iter().find(|r| r.method == method.name())
    }

    /// The table, with a median note when more than one seed ran.
    pub fn to_text(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.method.len())
            .chain(["Model".len()])
            .max()
            .unwrap_or(0);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>9}  {:>9}  {:>9}  {:>9}",
            "Model", "Accuracy", "Precision", "Recall", "F-measure"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>9.4}",
                r.method, r.accuracy, r.precision, r.recall, r.f_measure
            );
        }
        if self.seeds.len() > 1 {
            let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
            let _ = writeln!(
                out,
                "median over {} seeds ({})",
                self.seeds.len(),
                seeds.join(", ")
            );
        }
        out
    }
}

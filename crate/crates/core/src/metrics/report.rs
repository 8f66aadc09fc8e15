use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::ConfusionMatrix;
use crate::error::{Error, Result};

/// One-vs-all statistics for a single class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    /// Set when nothing was predicted as this class; precision is then 0.
    pub precision_undefined: bool,
    /// Set when the class has no true samples; recall is then 0.
    pub recall_undefined: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverallMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn per_class(cm: &ConfusionMatrix, k: usize) -> Result<ClassMetrics> {
    if k >= cm.n_classes() {
        return Err(Error::param(format!(
            "class {k} out of range for {} classes",
            cm.n_classes()
        )));
    }
    let total = cm.total();
    let tp = cm.get(k, k);
    let fp = cm.predicted(k) - tp;
    let fn_ = cm.support(k) - tp;
    let tn = total - tp - fp - fn_;
    let (accuracy, _) = ratio(tp + tn, total);
    let (precision, precision_undefined) = ratio(tp, tp + fp);
    let (recall, recall_undefined) = ratio(tp, tp + fn_);
    let f_measure = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(ClassMetrics {
        accuracy,
        precision,
        recall,
        f_measure,
        precision_undefined,
        recall_undefined,
    })
}

/// Micro accuracy plus support-weighted precision, recall and F-measure.
pub fn overall(cm: &ConfusionMatrix) -> OverallMetrics {
    let total = cm.total();
    if total == 0 {
        return OverallMetrics {
            accuracy: 0.0,
            precision: 0.0,
            recall: 0.0,
            f_measure: 0.0,
        };
    }
    let (mut p, mut f) = (0.0, 0.0);
    for k in 0..cm.n_classes() {
        let support = cm.support(k);
        if support == 0 {
            continue;
        }
        let m = per_class(cm, k).expect("k in range");
        let w = support as f64;
        p += w * m.precision;
        f += w * m.f_measure;
    }
    let t = total as f64;
    OverallMetrics {
        accuracy: cm.trace() as f64 / t,
        precision: p / t,
        // support_k * tp_k / support_k summed in integers, so the identity
        // with accuracy is exact rather than up to rounding
        recall: cm.trace() as f64 / t,
        f_measure: f / t,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub label: String,
    pub support: u64,
    #[serde(flatten)]
    pub metrics: ClassMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub classes: Vec<ClassRow>,
    pub overall: OverallMetrics,
    pub total: u64,
    pub confusion: Vec<Vec<u64>>,
}

impl MetricReport {
    pub fn new(cm: &ConfusionMatrix, labels: &[String]) -> Result<Self> {
        if labels.len() != cm.n_classes() {
            return Err(Error::dim(format!(
                "{} label names for {} classes",
                labels.len(),
                cm.n_classes()
            )));
        }
        let classes = labels
            .iter()
            .enumerate()
            .map(|(k, name)| {
                Ok(ClassRow {
                    label: name.clone(),
                    support: cm.support(k),
                    metrics: per_class(cm, k)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            classes,
            overall: overall(cm),
            total: cm.total(),
            confusion: cm.rows(),
        })
    }

    /// Plain-text table; values are fractions with four decimals.
    pub fn to_text(&self) -> String {
        let width = self
            .classes
            .iter()
            .map(|c| c.label.chars().count())
            .chain(["Class Label".len(), "Overall".len()])
            .max()
            .unwrap_or(0);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>9}  {:>9}  {:>9}  {:>9}",
            "Class Label", "Accuracy", "Precision", "Recall", "F-measure"
        );
        let row = |out: &mut String, name: &str, a: f64, p: f64, r: f64, f: f64, note: &str| {
            let _ = writeln!(
                out,
                "{name:<width$}  {a:>9.4}  {p:>9.4}  {r:>9.4}  {f:>9.4}{note}"
            );
        };
        for c in &self.classes {
            let m = &c.metrics;
            let note = match (m.precision_undefined, m.recall_undefined) {
                (false, false) => "",
                (true, false) => "  (precision undefined)",
                (false, true) => "  (recall undefined)",
                (true, true) => "  (precision, recall undefined)",
            };
            row(
                &mut out,
                &c.label,
                m.accuracy,
                m.precision,
                m.recall,
                m.f_measure,
                note,
            );
        }
        let o = &self.overall;
        row(
            &mut out,
            "Overall",
            o.accuracy,
            o.precision,
            o.recall,
            o.f_measure,
            "",
        );
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

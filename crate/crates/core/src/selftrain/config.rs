use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::contrastive::LossConfig;
use crate::error::{Error, Result};

/// Validation metric that can end the loop early.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    Accuracy,
    Precision,
    Recall,
    F1,
}

impl FromStr for MetricName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accuracy" => Ok(Self::Accuracy),
            "precision" => Ok(Self::Precision),
            "recall" => Ok(Self::Recall),
            "f1" | "f_measure" => Ok(Self::F1),
            other => Err(Error::param(format!(
                "unknown metric {other:?} (accuracy, precision, recall, f1)"
            ))),
        }
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Accuracy => "accuracy",
            Self::Precision => "precision",
            Self::Recall => "recall",
            Self::F1 => "f1",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetMetric {
    pub name: MetricName,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoopConfig {
    /// Minimum max-softmax probability for promotion. Values above 1 disable
    /// promotion entirely.
    pub confidence_threshold: f32,
    pub max_iterations: usize,
    pub target_metric: Option<TargetMetric>,
    /// Per-iteration cap on promotions; `None` is unbounded.
    pub max_promotions: Option<usize>,
    pub warm_start: bool,
    pub contrastive_epochs: usize,
    pub head_epochs: usize,
    /// Documents per contrastive batch, before view expansion.
    pub contrastive_batch: usize,
    pub classes_per_batch: usize,
    pub n_views: usize,
    /// A contrastive epoch is one sweep, `ceil(labeled / batch)` sampled
    /// batches, but never fewer than this.
    pub min_batches_per_epoch: usize,
    pub head_batch: usize,
    /// Weight the classification loss by inverse class frequency.
    pub balanced_head: bool,
    pub lr: f32,
    pub head_lr: f32,
    pub clip: Option<f32>,
    pub loss: LossConfig,
    pub seed: u64,
    /// Record wall-clock seconds in reports. Off gives byte-stable reports.
    pub timing: bool,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            confidence_threshold: 0.95,
            max_iterations: 10,
            target_metric: None,
            max_promotions: None,
            warm_start: true,
            contrastive_epochs: 5,
            head_epochs: 5,
            contrastive_batch: 16,
            classes_per_batch: 4,
            n_views: 2,
            min_batches_per_epoch: 40,
            head_batch: 8,
            balanced_head: true,
            lr: 0.05,
            head_lr: 0.1,
            clip: Some(5.0),
            loss: LossConfig::default(),
            seed: 7,
            timing: true,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        let t = self.confidence_threshold;
        if !(t.is_finite() && t > 0.5) {
            return Err(Error::param(format!(
                "confidence threshold must exceed 0.5, got {t}"
            )));
        }
        let positive = [
            ("max_iterations", self.max_iterations),
            ("contrastive_batch", self.contrastive_batch),
            ("classes_per_batch", self.classes_per_batch),
            ("head_batch", self.head_batch),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::param(format!("{name} must be at least 1")));
            }
        }
        if self.n_views < 2 {
            return Err(Error::param(format!(
                "n_views must be at least 2, got {}",
                self.n_views
            )));
        }
        for (name, lr) in [("lr", self.lr), ("head_lr", self.head_lr)] {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(Error::param(format!("{name} must be positive, got {lr}")));
            }
        }
        if let Some(c) = self.clip {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::param(format!("clip must be positive, got {c}")));
            }
        }
        if let Some(tm) = self.target_metric {
            if !(0.0..=1.0).contains(&tm.value) {
                return Err(Error::param(format!(
                    "target {} must lie in [0, 1]",
                    tm.name
                )));
            }
        }
        self.loss.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thresholds() {
        let mut c = LoopConfig::default();
        assert!(c.validate().is_ok());
        c.confidence_threshold = 1.01;
        assert!(c.validate().is_ok());
        for bad in [0.0, 0.5, f32::NAN] {
            c.confidence_threshold = bad;
            assert!(matches!(c.validate(), Err(Error::Parameter(_))));
        }
    }

    #[test]
    fn rejects_zero_iterations_and_single_view() {
        let c = LoopConfig {
            max_iterations: 0,
            ..LoopConfig::default()
        };
        assert!(c.validate().is_err());
        let c = LoopConfig {
            n_views: 1,
            ..LoopConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn metric_names_parse() {
        assert_eq!("f1".parse::<MetricName>().unwrap(), MetricName::F1);
        assert_eq!(MetricName::Accuracy.to_string(), "accuracy");
        assert!("auc".parse::<MetricName>().is_err());
    }
}

//! Confusion matrices and one-vs-all classification metrics.

mod confusion;
mod report;

pub use confusion::{confusion, ConfusionMatrix};
pub use report::{overall, per_class, ClassMetrics, ClassRow, MetricReport, OverallMetrics};

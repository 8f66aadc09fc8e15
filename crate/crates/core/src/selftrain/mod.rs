//! The self-training loop: contrastive pre-training, a head on the frozen
//! encoder, and promotion of confident pool documents.

mod config;
mod phases;
mod run;
mod state;

pub use config::{LoopConfig, MetricName, TargetMetric};
pub use phases::{
    contrastive_phase, cross_entropy, end_to_end_phase, evaluate, head_phase, predict, PhaseStats,
    Predictions, TaskData,
};
pub use run::{
    check_trainable, run_iteration, run_loop, run_method, train_al_only, train_crl_only,
    IterationEvent, Method, Observer, StopReason,
};
pub use state::{IterationReport, LoopState, Promotion};

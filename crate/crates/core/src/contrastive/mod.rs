//! Contrastive batches and the supervised contrastive loss.

mod encoder_loss;
mod loss;
mod sampler;

pub use encoder_loss::encoder_supcon_grad;
pub use loss::{
    build_batch, cosine, count_contributing, supcon_graph, supcon_loss, ContrastiveBatch,
    DenominatorMode, LossConfig, SupConOutput,
};
pub use sampler::ClassBalancedSampler;

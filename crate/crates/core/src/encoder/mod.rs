//! Toy transformer encoder, classification head and checkpoint format.

mod checkpoint;
mod config;
mod head;
mod model;

pub use checkpoint::{sha256_hex, Checkpoint, FORMAT_VERSION, MAGIC};
pub use config::{EncoderConfig, Pooling};
pub use head::{classify, ClassifierHead};
pub use model::{
    augment_views, freeze_encoder, view_masks, BatchGrads, EncodeMode, EncoderModel, SeqMasks,
    Views,
};

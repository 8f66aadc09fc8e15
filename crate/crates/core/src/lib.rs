//! Supervised contrastive text encoder with an expert-free self-training loop.
//!
//! The pipeline pre-trains a small transformer encoder with a supervised
//! contrastive loss over dropout views, freezes it, fits a softmax
//! classification head on top, and then repeatedly promotes confidently
//! classified unlabeled documents into the training set.

pub mod contrastive;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod metrics;
pub mod numerics;
pub mod selftrain;

pub use error::{Error, Result};

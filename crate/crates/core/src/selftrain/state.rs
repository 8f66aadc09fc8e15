use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Provenance};
use crate::encoder::{Checkpoint, ClassifierHead, EncoderConfig, EncoderModel};
use crate::error::{Error, Result};

/// Stream tag separating head initialization from encoder initialization.
const HEAD_SEED_TAG: u64 = 0x4ead_5eed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Promotion {
    pub iteration: usize,
    pub id: String,
    pub label: String,
    pub confidence: f32,
}

/// One line of the iteration report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: usize,
    pub labeled_count: usize,
    pub promoted_count: usize,
    pub mean_promotion_confidence: Option<f64>,
    pub val_accuracy: f64,
    pub val_precision_weighted: f64,
    pub val_recall_weighted: f64,
    pub val_f1_weighted: f64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct LoopState {
    /// Gold documents followed by pseudo-labeled ones in promotion order.
    pub labeled: Vec<Document>,
    pub unlabeled: Vec<Document>,
    pub encoder: EncoderModel,
    pub head: ClassifierHead,
    /// Completed iterations.
    pub iteration: usize,
    pub history: Vec<IterationReport>,
    pub promotions: Vec<Promotion>,
}

pub(crate) fn init_models(
    cfg: &EncoderConfig,
    n_classes: usize,
    seed: u64,
) -> Result<(EncoderModel, ClassifierHead)> {
    let encoder = EncoderModel::init(cfg.clone(), seed)?;
    let head = ClassifierHead::init(cfg.d_model, n_classes, seed ^ HEAD_SEED_TAG)?;
    Ok((encoder, head))
}

impl LoopState {
    pub fn new(
        labeled: Vec<Document>,
        unlabeled: Vec<Document>,
        encoder_cfg: &EncoderConfig,
        n_classes: usize,
        seed: u64,
    ) -> Result<Self> {
        if let Some(d) = labeled.iter().find(|d| !d.is_labeled()) {
            return Err(Error::data(format!(
                "labeled set contains unlabeled document {:?}",
                d.id
            )));
        }
        if let Some(d) = unlabeled.iter().find(|d| d.is_labeled()) {
            return Err(Error::data(format!(
                "pool contains labeled document {:?}",
                d.id
            )));
        }
        let (encoder, head) = init_models(encoder_cfg, n_classes, seed)?;
        let state = Self {
            labeled,
            unlabeled,
            encoder,
            head,
            iteration: 0,
            history: Vec::new(),
            promotions: Vec::new(),
        };
        state.check_invariants()?;
        Ok(state)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_model(&self.encoder, &self.head)
    }

    /// Class name to labeled-document count, in name order.
    pub fn class_counts(&self) -> BTreeMap<&str, usize> {
        let mut counts = BTreeMap::new();
        for d in &self.labeled {
            if let Some(l) = d.label() {
                *counts.entry(l).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Checks disjointness, unique ids and that every promotion is still
    /// present with its original label.
    pub fn check_invariants(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.labeled.len() + self.unlabeled.len());
        for d in self.labeled.iter().chain(&self.unlabeled) {
            if !seen.insert(d.id.as_str()) {
                return Err(Error::Contract(format!(
                    "document {:?} appears twice across labeled and unlabeled sets",
                    d.id
                )));
            }
        }
        let pseudo: BTreeMap<&str, (&str, Provenance)> = self
            .labeled
            .iter()
            .filter(|d| matches!(d.provenance(), Provenance::Pseudo { .. }))
            .map(|d| (d.id.as_str(), (d.label().unwrap_or(""), d.provenance())))
            .collect();
        if pseudo.len() != self.promotions.len() {
            return Err(Error::Contract(format!(
                "{} pseudo-labeled documents but {} recorded promotions",
                pseudo.len(),
                self.promotions.len()
            )));
        }
        for p in &self.promotions {
            match pseudo.get(p.id.as_str()) {
                Some((label, Provenance::Pseudo { iteration }))
                    if *label == p.label && *iteration == p.iteration => {}
                _ => {
                    return Err(Error::Contract(format!(
                    "promotion of {:?} in iteration {} is no longer reflected in the labeled set",
                    p.id, p.iteration
                )))
                }
            }
        }
        Ok(())
    }
}

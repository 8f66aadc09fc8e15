use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(n_classes: usize) -> Result<Self> {
        if n_classes == 0 {
            return Err(Error::param("confusion matrix needs at least one class"));
        }
        Ok(Self {
            n_classes,
            counts: vec![0; n_classes * n_classes],
        })
    }

    /// Builds from explicit rows, which must form a square matrix.
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let c = rows.len();
        let mut cm = Self::zeros(c)?;
        for (t, row) in rows.iter().enumerate() {
            if row.len() != c {
                return Err(Error::dim(format!(
                    "row {t} has {} entries, expected {c}",
                    row.len()
                )));
            }
            cm.counts[t * c..(t + 1) * c].copy_from_slice(row);
        }
        Ok(cm)
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.n_classes + pred]
    }

    pub fn add(&mut self, truth: usize, pred: usize) {
        self.counts[truth * self.n_classes + pred] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes).map(|k| self.get(k, k)).sum()
    }

    /// Number of samples whose true class is `k`.
    pub fn support(&self, k: usize) -> u64 {
        (0..self.n_classes).map(|p| self.get(k, p)).sum()
    }

    pub fn predicted(&self, k: usize) -> u64 {
        (0..self.n_classes).map(|t| self.get(t, k)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts
            .chunks(self.n_classes)
            .map(<[u64]>::to_vec)
            .collect()
    }
}

pub fn confusion(truth: &[usize], pred: &[usize], n_classes: usize) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(Error::dim(format!(
            "{} true labels but {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    let mut cm = ConfusionMatrix::zeros(n_classes)?;
    for (i, (&t, &p)) in truth.iter().zip(pred).enumerate() {
        if t >= n_classes || p >= n_classes {
            return Err(Error::param(format!(
                "sample {i}: class index ({t}, {p}) out of range for {n_classes} classes"
            )));
        }
        cm.add(t, p);
    }
    Ok(cm)
}

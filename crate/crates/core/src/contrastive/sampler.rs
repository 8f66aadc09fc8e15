use crate::error::{Error, Result};
use crate::numerics::SeededRng;

/// Draws `ceil(batch / k)` documents from each of `k` randomly chosen
/// classes, so most anchors have in-batch positives even when some classes
/// have only a handful of examples.
#[derive(Clone, Debug)]
pub struct ClassBalancedSampler {
    /// Member indices of each non-empty class, reshuffled when exhausted.
    pools: Vec<Vec<usize>>,
    cursors: Vec<usize>,
    batch_docs: usize,
    classes_per_batch: usize,
    n_docs: usize,
    rng: SeededRng,
}

impl ClassBalancedSampler {
    /// `labels[i]` is the class of document `i`.
    pub fn new(
        labels: &[usize],
        batch_docs: usize,
        classes_per_batch: usize,
        rng: SeededRng,
    ) -> Result<Self> {
        if batch_docs == 0 || classes_per_batch == 0 {
            return Err(Error::param(
                "batch size and classes per batch must be positive",
            ));
        }
        let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut pools = vec![Vec::new(); n_classes];
        for (i, &l) in labels.iter().enumerate() {
            pools[l].push(i);
        }
        pools.retain(|p| !p.is_empty());
        if pools.is_empty() {
            return Err(Error::data("sampler needs at least one labeled document"));
        }
        let mut rng = rng;
        for p in &mut pools {
            rng.shuffle(p);
        }
        Ok(Self {
            cursors: vec![0; pools.len()],
            pools,
            batch_docs,
            classes_per_batch,
            n_docs: labels.len(),
            rng,
        })
    }

    /// Batches needed to visit roughly every document once.
    pub fn batches_per_epoch(&self) -> usize {
        self.n_docs.div_ceil(self.batch_docs)
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        let k = self.classes_per_batch.min(self.pools.len());
        let mut classes: Vec<usize> = (0..self.pools.len()).collect();
        self.rng.shuffle(&mut classes);
        classes.truncate(k);
        classes.sort_unstable();
        let per_class = self.batch_docs.div_ceil(k);
        let mut out = Vec::with_capacity(per_class * k);
        for c in classes {
            let take = per_class.min(self.pools[c].len());
            for _ in 0..take {
                if self.cursors[c] == self.pools[c].len() {
                    self.rng.shuffle(&mut self.pools[c]);
                    self.cursors[c] = 0;
                }
                out.push(self.pools[c][self.cursors[c]]);
                self.cursors[c] += 1;
            }
        }
        out
    }
}

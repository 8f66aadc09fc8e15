use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use super::synth::apportion;
use super::{load_jsonl, write_jsonl, Document, LabelSet};
use crate::error::{Error, Result};
use crate::numerics::SeededRng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::param(format!(
                "split ratios must lie in [0, 1]: {self:?}"
            )));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::param(format!("split ratios sum to {sum}, not 1")));
        }
        Ok(())
    }

    fn active(&self) -> usize {
        [self.train, self.val, self.test]
            .iter()
            .filter(|&&r| r > 0.0)
            .count()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Split {
    pub train: Vec<Document>,
    pub val: Vec<Document>,
    pub test: Vec<Document>,
    pub warnings: Vec<String>,
}

/// Stratified three-way split of the labeled documents. Unlabeled documents
/// always land in `train`. Within each output, input order is preserved.
///
/// A class too small to place at least one document in every non-empty
/// split (fewer documents than splits, or an expected val/test share that
/// rounds to zero) is sent to `train` whole, with a warning.
pub fn split(docs: &[Document], ratios: SplitRatios, seed: u64) -> Result<Split> {
    ratios.validate()?;
    let mut ids = HashSet::with_capacity(docs.len());
    for d in docs {
        if !ids.insert(d.id.as_str()) {
            return Err(Error::data(format!("duplicate id {:?}", d.id)));
        }
    }

    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, d) in docs.iter().enumerate() {
        if let Some(l) = d.label() {
            by_class.entry(l).or_default().push(i);
        }
    }

    let need = ratios.active();
    let mut warnings = Vec::new();
    let mut eligible: Vec<(&str, Vec<usize>)> = Vec::new();
    for (label, members) in by_class {
        let share = |r: f64| r > 0.0 && (members.len() as f64 * r).round() < 1.0;
        if members.len() < need || share(ratios.val) || share(ratios.test) {
            let msg = format!(
                "class {label:?} has only {} labeled documents, too few to split; all kept in train",
                members.len()
            );
            log::warn!("{msg}");
            warnings.push(msg);
        } else {
            eligible.push((label, members));
        }
    }

    let sizes: Vec<f64> = eligible.iter().map(|(_, m)| m.len() as f64).collect();
    let n: usize = eligible.iter().map(|(_, m)| m.len()).sum();
    let n_val = (n as f64 * ratios.val).round() as usize;
    let n_test = (n as f64 * ratios.test).round() as usize;
    let val_k = apportion(n_val, &sizes);
    let test_k = apportion(n_test, &sizes);

    // 0 = train, 1 = val, 2 = test
    let mut dest = vec![0u8; docs.len()];
    let root = SeededRng::new(seed, 0x5e11);
    for (k, (_, members)) in eligible.iter().enumerate() {
        let mut shuffled = members.clone();
        root.derive(k as u64).shuffle(&mut shuffled);
        let keep_train = usize::from(ratios.train > 0.0);
        let test = test_k[k].min(shuffled.len().saturating_sub(keep_train));
        let val = val_k[k].min(shuffled.len().saturating_sub(keep_train + test));
        for &i in &shuffled[..val] {
            dest[i] = 1;
        }
        for &i in &shuffled[val..val + test] {
            dest[i] = 2;
        }
    }

    let mut out = Split {
        warnings,
        ..Split::default()
    };
    for (d, &to) in docs.iter().zip(&dest) {
        match to {
            1 => out.val.push(d.clone()),
            2 => out.test.push(d.clone()),
            _ => out.train.push(d.clone()),
        }
    }
    Ok(out)
}

/// File layout of a prepared dataset directory.
#[derive(Clone, Debug)]
pub struct DatasetPaths {
    pub dir: PathBuf,
}

impl DatasetPaths {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
    pub fn train(&self) -> PathBuf {
        self.dir.join("train.jsonl")
    }
    pub fn val(&self) -> PathBuf {
        self.dir.join("val.jsonl")
    }
    pub fn test(&self) -> PathBuf {
        self.dir.join("test.jsonl")
    }
    pub fn labels(&self) -> PathBuf {
        self.dir.join("labels.txt")
    }
    /// Sealed ground truth for the unlabeled training documents.
    pub fn train_truth(&self) -> PathBuf {
        self.dir.join("train.truth.jsonl")
    }
}

/// Train/val/test documents plus their label set.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub labels: LabelSet,
    pub train: Vec<Document>,
    pub val: Vec<Document>,
    pub test: Vec<Document>,
}

impl Dataset {
    /// Loads the three splits. Never opens the sealed truth file.
    pub fn load(paths: &DatasetPaths, labels_path: Option<&Path>) -> Result<Self> {
        let labels_file = labels_path.map_or_else(|| paths.labels(), Path::to_path_buf);
        let labels = LabelSet::load(&labels_file)?;
        let train = load_jsonl(&paths.train(), Some(&labels))?;
        let val = load_jsonl(&paths.val(), Some(&labels))?;
        let test = load_jsonl(&paths.test(), Some(&labels))?;
        let mut seen = HashSet::new();
        for d in train.iter().chain(&val).chain(&test) {
            if !seen.insert(d.id.as_str()) {
                return Err(Error::data(format!(
                    "id {:?} appears in more than one split",
                    d.id
                )));
            }
        }
        for (name, docs) in [("val", &val), ("test", &test)] {
            if let Some(d) = docs.iter().find(|d| !d.is_labeled()) {
                return Err(Error::data(format!(
                    "{name} document {:?} has no label",
                    d.id
                )));
            }
        }
        Ok(Self {
            labels,
            train,
            val,
            test,
        })
    }

    pub fn write(&self, paths: &DatasetPaths) -> Result<()> {
        self.labels.write(&paths.labels())?;
        write_jsonl(&paths.train(), &self.train)?;
        write_jsonl(&paths.val(), &self.val)?;
        write_jsonl(&paths.test(), &self.test)
    }

    pub fn gold_train(&self) -> Vec<Document> {
        self.train
            .iter()
            .filter(|d| d.is_labeled())
            .cloned()
            .collect()
    }

    pub fn unlabeled_train(&self) -> Vec<Document> {
        self.train
            .iter()
            .filter(|d| !d.is_labeled())
            .cloned()
            .collect()
    }
}

/// Ground truth for documents the training code sees as unlabeled.
///
/// Only evaluation code constructs this; training paths never take it.
#[derive(Clone, Debug, Default)]
pub struct SealedTruth {
    labels: std::collections::HashMap<String, String>,
}

impl SealedTruth {
    pub fn open(path: &Path, labels: &LabelSet) -> Result<Self> {
        let docs = load_jsonl(path, Some(labels))?;
        Ok(Self::from_docs(&docs))
    }

    pub fn from_docs(docs: &[Document]) -> Self {
        Self {
            labels: docs
                .iter()
                .filter_map(|d| d.label().map(|l| (d.id.clone(), l.to_owned())))
                .collect(),
        }
    }

    pub fn label(&self, id: &str) -> Option<&str> {
        self.labels.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(n: usize, label: &str, prefix: &str) -> Vec<Document> {
        (0..n)
            .map(|i| Document::gold(format!("{prefix}{i}"), "text", label))
            .collect()
    }

    #[test]
    fn sizes_follow_ratios() {
        let docs = labeled(100, "A", "a");
        let s = split(&docs, SplitRatios::default(), 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (80, 10, 10));
    }

    #[test]
    fn three_gold_suicides_stay_in_train_with_warning() {
        let mut docs = labeled(40, "Accidents", "a");
        docs.extend(labeled(3, "Suicides", "s"));
        let s = split(&docs, SplitRatios::default(), 9).unwrap();
        let in_train = s
            .train
            .iter()
            .filter(|d| d.label() == Some("Suicides"))
            .count();
        assert_eq!(in_train, 3);
        assert_eq!(s.warnings.len(), 1);
        assert!(s.warnings[0].contains("Suicides"));
        assert_eq!((s.val.len(), s.test.len()), (4, 4));
    }

    #[test]
    fn fewer_docs_than_splits_stay_in_train() {
        let ratios = SplitRatios {
            train: 0.4,
            val: 0.3,
            test: 0.3,
        };
        let mut docs = labeled(2, "Rare", "r");
        docs.extend(labeled(10, "Common", "c"));
        let s = split(&docs, ratios, 1).unwrap();
        assert_eq!(
            s.train.iter().filter(|d| d.label() == Some("Rare")).count(),
            2
        );
        assert_eq!(s.warnings.len(), 1);
    }

    #[test]
    fn unlabeled_goes_to_train_and_ids_disjoint() {
        let mut docs = labeled(20, "A", "a");
        docs.extend((0..10).map(|i| Document::unlabeled(format!("u{i}"), "t")));
        let s = split(&docs, SplitRatios::default(), 5).unwrap();
        assert!(s.val.iter().chain(&s.test).all(Document::is_labeled));
        assert_eq!(s.train.iter().filter(|d| !d.is_labeled()).count(), 10);
        let mut ids: Vec<&str> = s
            .train
            .iter()
            .chain(&s.val)
            .chain(&s.test)
            .map(|d| d.id.as_str())
            .collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 30);
    }

    #[test]
    fn same_seed_same_split() {
        let mut docs = labeled(30, "A", "a");
        docs.extend(labeled(30, "B", "b"));
        let a = split(&docs, SplitRatios::default(), 42).unwrap();
        let b = split(&docs, SplitRatios::default(), 42).unwrap();
        assert_eq!(a, b);
        let c = split(&docs, SplitRatios::default(), 43).unwrap();
        assert_ne!(a.val, c.val);
    }

    #[test]
    fn ratios_must_sum_to_one() {
        let bad = SplitRatios {
            train: 0.8,
            val: 0.1,
            test: 0.2,
        };
        assert!(split(&[], bad, 0).is_err());
    }
}

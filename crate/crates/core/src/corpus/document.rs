use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Where a document's label came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Gold,
    /// Assigned by the model during self-training iteration `iteration`.
    Pseudo {
        iteration: usize,
    },
    Unlabeled,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Document {
    pub id: String,
    pub text: String,
    label: Option<String>,
    provenance: Provenance,
}

impl Document {
    pub fn gold(id: impl Into<String>, text: impl Into<String>, label: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            label: Some(label.into()),
            provenance: Provenance::Gold,
        }
    }

    pub fn unlabeled(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            label: None,
            provenance: Provenance::Unlabeled,
        }
    }

    /// Turns an unlabeled document into a pseudo-labeled one.
    pub fn promote(self, label: impl Into<String>, iteration: usize) -> Self {
        Self {
            label: Some(label.into()),
            provenance: Provenance::Pseudo { iteration },
            ..self
        }
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn is_labeled(&self) -> bool {
        self.label.is_some()
    }

    /// Drops the label, keeping id and text.
    pub fn without_label(&self) -> Self {
        Self::unlabeled(self.id.clone(), self.text.clone())
    }
}

/// Ordered class names; a class's index is its position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSet {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelSet {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::data("label set is empty"));
        }
        let mut index = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if n.trim().is_empty() {
                return Err(Error::data(format!("label {i} is blank")));
            }
            if index.insert(n.clone(), i).is_some() {
                return Err(Error::data(format!("duplicate label {n:?}")));
            }
        }
        Ok(Self { names, index })
    }

    /// The eight cause-of-death classes of the obituary task, in table order.
    pub fn obituary() -> Self {
        Self::new(OBITUARY_CLASSES).expect("static labels are valid")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::data(format!("unknown label {name:?}")))
    }

    /// Reads one class name per line; blank lines are skipped.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(text.lines().map(str::trim_end).filter(|l| !l.is_empty()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = self.names.join("\n");
        out.push('\n');
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

pub const OBITUARY_CLASSES: [&str; 8] = [
    "Neoplasms (Cancers)",
    "Circulatory System",
    "Accidents",
    "Respiratory System",
    "Nervous System",
    "Suicides",
    "Digestive System",
    "COVID-19",
];

/// Labeled-sample counts per class in the original obituary dataset, aligned
/// with [`OBITUARY_CLASSES`].
pub const OBITUARY_COUNTS: [u32; 8] = [33_104, 3_477, 11_942, 3_427, 1_991, 3, 543, 5_007];

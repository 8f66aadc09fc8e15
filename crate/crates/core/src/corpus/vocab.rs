use std::collections::HashMap;
use std::path::Path;

use super::{Document, LabelSet};
use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Lowercases, turns every non-alphanumeric character into a space and
/// splits on whitespace.
pub fn words(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    cleaned.split_whitespace().map(str::to_owned).collect()
}

/// Dense token index. `0` is padding and `1` the unknown token.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    min_freq: usize,
}

impl Vocabulary {
    /// Builds from training text only. Tokens seen at least `min_freq` times
    /// are kept, ordered by descending count and then alphabetically.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, min_freq: usize) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for t in texts {
            for w in words(t) {
                *counts.entry(w).or_default() += 1;
            }
        }
        let mut kept: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(w, c)| *c >= min_freq.max(1) && w != PAD_TOKEN && w != UNK_TOKEN)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let tokens = [PAD_TOKEN.to_owned(), UNK_TOKEN.to_owned()]
            .into_iter()
            .chain(kept.into_iter().map(|(w, _)| w))
            .collect();
        Self::from_tokens(tokens, min_freq).expect("built tokens are unique")
    }

    pub fn from_docs(docs: &[Document], min_freq: usize) -> Self {
        Self::build(docs.iter().map(|d| d.text.as_str()), min_freq)
    }

    fn from_tokens(tokens: Vec<String>, min_freq: usize) -> Result<Self> {
        if tokens.len() < 2 || tokens[0] != PAD_TOKEN || tokens[1] != UNK_TOKEN {
            return Err(Error::data("vocabulary must start with <pad> and <unk>"));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::data(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self {
            tokens,
            index,
            min_freq,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn min_freq(&self) -> usize {
        self.min_freq
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line in index order; the first line records `min_freq`.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = format!("#min_freq={}\n", self.min_freq);
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let min_freq = header
            .strip_prefix("#min_freq=")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::data(format!("{}: missing #min_freq header", path.display())))?;
        Self::from_tokens(lines.map(str::to_owned).collect(), min_freq)
    }
}

/// Right-padded token ids for a batch of documents.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenizedBatch {
    pub max_len: usize,
    /// `[batch x max_len]`, row-major.
    pub ids: Vec<u32>,
    /// `1` for real tokens, `0` for padding; always a run of ones then zeros.
    pub mask: Vec<u8>,
    /// Class index, or `-1` for unlabeled documents.
    pub labels: Vec<i64>,
    pub doc_ids: Vec<String>,
}

impl TokenizedBatch {
    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    /// Number of real tokens in row `i`.
    pub fn row_len(&self, i: usize) -> usize {
        self.mask[i * self.max_len..(i + 1) * self.max_len]
            .iter()
            .take_while(|&&m| m == 1)
            .count()
    }

    /// The real (unpadded) token ids of row `i`.
    pub fn real_ids(&self, i: usize) -> &[u32] {
        let start = i * self.max_len;
        &self.ids[start..start + self.row_len(i)]
    }

    pub fn padded_ids(&self, i: usize) -> &[u32] {
        &self.ids[i * self.max_len..(i + 1) * self.max_len]
    }

    /// Builds a batch directly from id rows. Rows longer than `max_len` are
    /// truncated; empty rows are rejected.
    pub fn from_rows(rows: &[Vec<u32>], max_len: usize) -> Result<Self> {
        if max_len == 0 {
            return Err(Error::param("max_len must be at least 1"));
        }
        let mut ids = Vec::with_capacity(rows.len() * max_len);
        let mut mask = Vec::with_capacity(rows.len() * max_len);
        for (i, r) in rows.iter().enumerate() {
            if r.is_empty() {
                return Err(Error::data(format!("row {i} has no tokens")));
            }
            let n = r.len().min(max_len);
            ids.extend_from_slice(&r[..n]);
            ids.extend(std::iter::repeat_n(PAD, max_len - n));
            mask.extend(std::iter::repeat_n(1u8, n));
            mask.extend(std::iter::repeat_n(0u8, max_len - n));
        }
        Ok(Self {
            max_len,
            ids,
            mask,
            labels: vec![-1; rows.len()],
            doc_ids: (0..rows.len()).map(|i| format!("row{i}")).collect(),
        })
    }
}

/// Tokenizes, maps through `vocab` and truncates or right-pads to `max_len`.
///
/// Labels are resolved against `labels`; unlabeled documents get `-1`.
pub fn tokenize(
    docs: &[Document],
    vocab: &Vocabulary,
    max_len: usize,
    labels: &LabelSet,
) -> Result<TokenizedBatch> {
    if max_len == 0 {
        return Err(Error::param("max_len must be at least 1"));
    }
    let mut empty = Vec::new();
    let mut rows = Vec::with_capacity(docs.len());
    let mut label_ids = Vec::with_capacity(docs.len());
    for d in docs {
        let ids: Vec<u32> = words(&d.text).iter().map(|w| vocab.id(w)).collect();
        if ids.is_empty() {
            empty.push(d.id.clone());
        }
        rows.push(ids);
        label_ids.push(match d.label() {
            Some(l) => labels.require(l)? as i64,
            None => -1,
        });
    }
    if !empty.is_empty() {
        return Err(Error::data(format!(
            "documents with no tokens: {}",
            empty.join(", ")
        )));
    }
    let mut batch = TokenizedBatch::from_rows(&rows, max_len)?;
    batch.labels = label_ids;
    batch.doc_ids = docs.iter().map(|d| d.id.clone()).collect();
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_vocab() -> Vocabulary {
        Vocabulary::from_tokens(
            ["<pad>", "<unk>", "died", "of", "cancer"]
                .map(String::from)
                .to_vec(),
            1,
        )
        .unwrap()
    }

    #[test]
    fn tokenizes_and_pads() {
        let docs = [Document::unlabeled("a", "Died of cancer.")];
        let b = tokenize(&docs, &tiny_vocab(), 5, &LabelSet::obituary()).unwrap();
        assert_eq!(b.ids, [2, 3, 4, 0, 0]);
        assert_eq!(b.mask, [1, 1, 1, 0, 0]);
        assert_eq!(b.labels, [-1]);
    }

    #[test]
    fn unseen_token_is_unk() {
        let docs = [Document::unlabeled("a", "died suddenly")];
        let b = tokenize(&docs, &tiny_vocab(), 4, &LabelSet::obituary()).unwrap();
        assert_eq!(&b.ids[..2], &[2, UNK]);
    }

    #[test]
    fn truncates_long_text() {
        let text = vec!["of"; 200].join(" ");
        let docs = [Document::unlabeled("a", text)];
        let b = tokenize(&docs, &tiny_vocab(), 128, &LabelSet::obituary()).unwrap();
        assert_eq!(b.ids.len(), 128);
        assert!(b.mask.iter().all(|&m| m == 1));
    }

    #[test]
    fn empty_text_names_document() {
        let docs = [
            Document::unlabeled("ok", "of"),
            Document::unlabeled("bad", " ... "),
        ];
        let msg = tokenize(&docs, &tiny_vocab(), 4, &LabelSet::obituary())
            .unwrap_err()
            .to_string();
        assert!(msg.contains("bad") && !msg.contains("ok,"), "{msg}");
    }

    #[test]
    fn vocab_respects_min_freq_and_order() {
        let v = Vocabulary::build(["b a a", "c a b"], 2);
        assert_eq!(v.tokens(), ["<pad>", "<unk>", "a", "b"]);
        assert_eq!(v.id("c"), UNK);
    }

    #[test]
    fn vocab_file_round_trip() {
        let v = Vocabulary::build(["x y y x z"], 2);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vocab.txt");
        v.write(&p).unwrap();
        assert_eq!(Vocabulary::load(&p).unwrap(), v);
    }

    #[test]
    fn punctuation_becomes_space() {
        assert_eq!(words("Smith's, (age 84)"), ["smith", "s", "age", "84"]);
    }
}

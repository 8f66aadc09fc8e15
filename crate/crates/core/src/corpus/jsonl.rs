use std::collections::HashSet;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Document, LabelSet};
use crate::error::{Error, Result};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    text: String,
    #[serde(default)]
    label: Option<String>,
}

#[derive(Serialize)]
struct RecordRef<'a> {
    id: &'a str,
    text: &'a str,
    label: Option<&'a str>,
}

/// Parses JSON-lines documents from a reader. `source` names the input in
/// error messages. Blank lines are skipped.
pub fn parse_jsonl(
    reader: impl BufRead,
    source: &str,
    labels: Option<&LabelSet>,
) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::data(format!("{source}:{line_no}: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line)
            .map_err(|e| Error::data(format!("{source}:{line_no}: malformed record: {e}")))?;
        if !seen.insert(rec.id.clone()) {
            return Err(Error::data(format!(
                "{source}:{line_no}: duplicate id {:?}",
                rec.id
            )));
        }
        let doc = match rec.label {
            Some(label) => {
                if let Some(ls) = labels {
                    if ls.index_of(&label).is_none() {
                        return Err(Error::data(format!(
                            "{source}:{line_no}: unknown label {label:?}"
                        )));
                    }
                }
                Document::gold(rec.id, rec.text, label)
            }
            None => Document::unlabeled(rec.id, rec.text),
        };
        docs.push(doc);
    }
    Ok(docs)
}

/// Loads `{id, text, label}` records, one per line, in file order.
pub fn load_jsonl(path: &Path, labels: Option<&LabelSet>) -> Result<Vec<Document>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_jsonl(BufReader::new(file), &path.display().to_string(), labels)
}

pub fn write_jsonl_to(mut w: impl Write, docs: &[Document]) -> std::io::Result<()> {
    for d in docs {
        let rec = RecordRef {
            id: &d.id,
            text: &d.text,
            label: d.label(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_jsonl(path: &Path, docs: &[Document]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_jsonl_to(BufWriter::new(file), docs).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Provenance;

    fn parse(s: &str, labels: Option<&LabelSet>) -> Result<Vec<Document>> {
        parse_jsonl(s.as_bytes(), "test", labels)
    }

    #[test]
    fn null_label_is_unlabeled() {
        let docs = parse(r#"{"id":"a","text":"x","label":null}"#, None).unwrap();
        assert_eq!(docs[0].provenance(), Provenance::Unlabeled);
        assert!(!docs[0].is_labeled());
        let docs = parse(r#"{"id":"a","text":"x"}"#, None).unwrap();
        assert!(!docs[0].is_labeled());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let src = "{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"a\",\"text\":\"y\"}\n";
        let msg = parse(src, None).unwrap_err().to_string();
        assert!(msg.contains("duplicate id") && msg.contains(":2:"), "{msg}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let src = "{\"id\":\"a\",\"text\":\"x\"}\n\n{\"id\":\"b\",\"text\":}\n";
        let msg = parse(src, None).unwrap_err().to_string();
        assert!(msg.contains("test:3:"), "{msg}");
    }

    #[test]
    fn unknown_fields_and_labels_rejected() {
        assert!(parse(r#"{"id":"a","text":"x","extra":1}"#, None).is_err());
        let ls = LabelSet::new(["A"]).unwrap();
        let msg = parse(r#"{"id":"a","text":"x","label":"B"}"#, Some(&ls))
            .unwrap_err()
            .to_string();
        assert!(msg.contains("\"B\""), "{msg}");
    }

    #[test]
    fn fixture_file_keeps_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("docs.jsonl");
        std::fs::write(
            &path,
            concat!(
                "{\"id\":\"n1\",\"text\":\"Died of cancer.\",\"label\":\"Neoplasms (Cancers)\"}\n",
                "{\"id\":\"n2\",\"text\":\"Car crash on the highway.\",\"label\":null}\n",
                "{\"id\":\"n3\",\"text\":\"Heart attack at home.\",\"label\":\"Circulatory System\"}\n",
            ),
        )
        .unwrap();
        let docs = load_jsonl(&path, Some(&LabelSet::obituary())).unwrap();
        let ids: Vec<&str> = docs.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, ["n1", "n2", "n3"]);
        assert_eq!(docs[2].label(), Some("Circulatory System"));
        assert!(!docs[1].is_labeled());
    }
}

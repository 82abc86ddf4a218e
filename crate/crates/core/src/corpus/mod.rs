//! Labeled corpora: ingestion, tokenization, hashed TF-IDF features and
//! multi-label stratified splitting.

mod features;
mod stratify;
mod tokenize;

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use features::{featurize, FeatureMatrix, HashedTfidf, SparseVec, DEFAULT_FEATURE_DIM};
pub use stratify::{fold_label_counts, stratified_kfold, stratified_sample, FoldAssignment};
pub use tokenize::{tokenize, tokenize_truncated};

/// Ordered label names. Position in the list is the label index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVocabulary {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelVocabulary {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(labels.len());
        for (j, name) in labels.iter().enumerate() {
            if name.trim().is_empty() {
                return Err(Error::invalid(format!("label {j} is empty")));
            }
            if index.insert(name.clone(), j).is_some() {
                return Err(Error::invalid(format!("duplicate label {name:?}")));
            }
        }
        Ok(LabelVocabulary { labels, index })
    }

    /// Reads one label per line; blank lines and `#` comment lines are ignored.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let vocab = Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_owned),
        )?;
        if vocab.is_empty() {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: 0,
                message: "vocabulary has no labels".into(),
            });
        }
        Ok(vocab)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn name(&self, j: usize) -> &str {
        &self.labels[j]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// One label per line, the format read by [`LabelVocabulary::load`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for l in &self.labels {
            out.push_str(l);
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub text: String,
    /// One flag per vocabulary label.
    pub labels: Vec<bool>,
}

impl Document {
    pub fn label_count(&self) -> usize {
        self.labels.iter().filter(|&&b| b).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub vocab: LabelVocabulary,
}

#[derive(Deserialize)]
struct RawRecord {
    #[serde(default)]
    id: Option<String>,
    text: String,
    labels: Vec<String>,
}

#[derive(Serialize)]
struct OutRecord<'a> {
    id: &'a str,
    text: &'a str,
    labels: Vec<&'a str>,
}

impl Corpus {
    /// Builds a corpus, checking id uniqueness, label-vector width and non-empty text.
    pub fn new(documents: Vec<Document>, vocab: LabelVocabulary) -> Result<Self> {
        let mut seen = HashSet::with_capacity(documents.len());
        for d in &documents {
            if d.labels.len() != vocab.len() {
                return Err(Error::DimensionMismatch {
                    expected: vocab.len(),
                    actual: d.labels.len(),
                });
            }
            if d.text.trim().is_empty() {
                return Err(Error::invalid(format!("document {:?} has empty text", d.id)));
            }
            if !seen.insert(d.id.as_str()) {
                return Err(Error::invalid(format!("duplicate document id {:?}", d.id)));
            }
        }
        Ok(Corpus { documents, vocab })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn num_labels(&self) -> usize {
        self.vocab.len()
    }

    pub fn positives(&self, label: usize) -> usize {
        self.documents.iter().filter(|d| d.labels[label]).count()
    }

    /// Fraction of documents carrying `label`; zero for an empty corpus.
    pub fn prevalence(&self, label: usize) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.positives(label) as f64 / self.len() as f64
        }
    }

    /// Documents at `indices`, in the order given.
    pub fn subset(&self, indices: &[usize]) -> Corpus {
        Corpus {
            documents: indices.iter().map(|&i| self.documents[i].clone()).collect(),
            vocab: self.vocab.clone(),
        }
    }

    /// Parses a line-delimited JSON corpus against `vocab`. Blank lines and `#`
    /// comment lines are skipped; a missing `id` becomes the 0-based line number.
    pub fn parse(text: &str, vocab: LabelVocabulary, source: &Path) -> Result<Self> {
        let mut documents = Vec::new();
        let mut seen = HashSet::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let line_1 = lineno + 1;
            let parse_err = |message: String| Error::Parse {
                path: source.to_owned(),
                line: line_1,
                message,
            };
            let raw: RawRecord = serde_json::from_str(line).map_err(|e| parse_err(format!("malformed record: {e}")))?;
            if raw.text.trim().is_empty() {
                return Err(parse_err("empty text".into()));
            }
            let mut labels = vec![false; vocab.len()];
            for name in &raw.labels {
                let j = vocab.index_of(name).ok_or_else(|| Error::UnknownLabel {
                    label: name.clone(),
                    line: line_1,
                })?;
                labels[j] = true;
            }
            let id = raw.id.unwrap_or_else(|| lineno.to_string());
            if !seen.insert(id.clone()) {
                return Err(parse_err(format!("duplicate document id {id:?}")));
            }
            documents.push(Document {
                id,
                text: raw.text,
                labels,
            });
        }
        Ok(Corpus { documents, vocab })
    }

    /// Serializes to the line-delimited format accepted by [`load_corpus`].
    pub fn to_jsonl(&self) -> String {
        let mut out = Vec::new();
        for d in &self.documents {
            let rec = OutRecord {
                id: &d.id,
                text: &d.text,
                labels: d
                    .labels
                    .iter()
                    .enumerate()
                    .filter(|(_, &b)| b)
                    .map(|(j, _)| self.vocab.name(j))
                    .collect(),
            };
            serde_json::to_writer(&mut out, &rec).expect("in-memory serialization");
            out.write_all(b"\n").expect("in-memory write");
        }
        String::from_utf8(out).expect("json is utf-8")
    }
}

/// Loads a corpus file and its label vocabulary.
pub fn load_corpus(path: &Path, vocab_path: &Path) -> Result<Corpus> {
    let vocab = LabelVocabulary::load(vocab_path)?;
    let text = fs::read_to_string(path)?;
    Corpus::parse(&text, vocab, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab_ab() -> LabelVocabulary {
        LabelVocabulary::new(["A", "B"]).unwrap()
    }

    #[test]
    fn vocabulary_index_is_stable() {
        let v = LabelVocabulary::new(["x", "y", "z"]).unwrap();
        for (j, l) in v.labels().iter().enumerate() {
            assert_eq!(v.index_of(l), Some(j));
        }
        assert!(LabelVocabulary::new(["x", "x"]).is_err());
        assert!(LabelVocabulary::new(["x", " "]).is_err());
    }

    #[test]
    fn parses_two_records() {
        let text = r#"{"id":"d1","text":"alpha","labels":["A"]}
{"id":"d2","text":"beta","labels":["A","B"]}
"#;
        let c = Corpus::parse(text, vocab_ab(), Path::new("c.jsonl")).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.documents[0].labels, vec![true, false]);
        assert_eq!(c.documents[1].labels, vec![true, true]);
    }

    #[test]
    fn unknown_label_names_line() {
        let text = r#"{"text":"alpha","labels":["C"]}"#;
        let err = Corpus::parse(text, vocab_ab(), Path::new("c.jsonl")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("\"C\""), "{msg}");
        assert!(msg.contains("line 1"), "{msg}");
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        let c = Corpus::parse("", vocab_ab(), Path::new("c.jsonl")).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn rejects_malformed_and_empty_text() {
        assert!(Corpus::parse("{not json", vocab_ab(), Path::new("c")).is_err());
        let err = Corpus::parse(r#"{"text":"  ","labels":[]}"#, vocab_ab(), Path::new("c")).unwrap_err();
        assert!(err.to_string().contains("empty text"));
    }

    #[test]
    fn missing_id_uses_line_number() {
        let text = "{\"text\":\"a\",\"labels\":[]}\n{\"text\":\"b\",\"labels\":[\"B\"]}\n";
        let c = Corpus::parse(text, vocab_ab(), Path::new("c")).unwrap();
        assert_eq!(c.documents[0].id, "0");
        assert_eq!(c.documents[1].id, "1");
    }

    #[test]
    fn jsonl_round_trip() {
        let text = r#"{"id":"d1","text":"alpha \"q\"","labels":["B"]}"#;
        let c = Corpus::parse(text, vocab_ab(), Path::new("c")).unwrap();
        let again = Corpus::parse(&c.to_jsonl(), vocab_ab(), Path::new("c")).unwrap();
        assert_eq!(c, again);
    }
}

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<F> {
    pub doc_id: String,
    pub label: usize,
    pub probability: F,
    pub truth: bool,
    pub fold: usize,
}

/// Validation-fold predictions gathered across folds and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet<F> {
    pub labels: Vec<String>,
    pub records: Vec<Prediction<F>>,
}

impl<F: Scalar> PredictionSet<F> {
    pub fn new(labels: Vec<String>) -> Self {
        PredictionSet {
            labels,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct document ids in first-appearance order.
    pub fn doc_ids(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.doc_id.as_str()))
            .map(|r| r.doc_id.as_str())
            .collect()
    }

    /// Exactly one record per (document, label), every document scored on every
    /// label, probabilities in `[0, 1]`, and one fold per document.
    pub fn check_complete(&self) -> Result<()> {
        let mut seen: HashSet<(&str, usize)> = HashSet::with_capacity(self.records.len());
        let mut fold_of: HashMap<&str, usize> = HashMap::new();
        for r in &self.records {
            if r.label >= self.labels.len() {
                return Err(Error::Invariant(format!("label index {} out of range", r.label)));
            }
            if !(r.probability >= F::zero() && r.probability <= F::one()) {
                return Err(Error::Invariant(format!(
                    "probability {} for ({}, {}) outside [0, 1]",
                    r.probability, r.doc_id, self.labels[r.label]
                )));
            }
            if !seen.insert((r.doc_id.as_str(), r.label)) {
                return Err(Error::Invariant(format!(
                    "duplicate prediction for ({}, {})",
                    r.doc_id, self.labels[r.label]
                )));
            }
            if *fold_of.entry(r.doc_id.as_str()).or_insert(r.fold) != r.fold {
                return Err(Error::Invariant(format!("document {} appears in two folds", r.doc_id)));
            }
        }
        let docs = fold_of.len();
        if seen.len() != docs * self.labels.len() {
            return Err(Error::Invariant(format!(
                "{} predictions for {} documents x {} labels",
                seen.len(),
                docs,
                self.labels.len()
            )));
        }
        Ok(())
    }

    /// Tab-separated: `doc_id, label, probability, truth, fold`, preceded by a
    /// `#labels` line and any extra `#` comment lines.
    pub fn to_tsv(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            for line in c.lines() {
                let _ = writeln!(out, "# {line}");
            }
        }
        out.push_str("#labels");
        for l in &self.labels {
            out.push('\t');
            out.push_str(l);
        }
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                r.doc_id,
                self.labels[r.label],
                r.probability.as_f64(),
                u8::from(r.truth),
                r.fold
            );
        }
        out
    }

    /// Parses [`PredictionSet::to_tsv`] output. Without a `#labels` line, label
    /// order is first appearance.
    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut labels: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut fixed_labels = false;
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let err = |message: String| Error::Parse {
                path: "<predictions>".into(),
                line: lineno,
                message,
            };
            if let Some(rest) = line.strip_prefix("#labels") {
                if fixed_labels || !records.is_empty() {
                    return Err(err("#labels must precede all records and appear once".into()));
                }
                labels = rest.split('\t').filter(|s| !s.is_empty()).map(str::to_owned).collect();
                index = labels.iter().cloned().enumerate().map(|(i, l)| (l, i)).collect();
                if index.len() != labels.len() {
                    return Err(err("duplicate label in #labels".into()));
                }
                fixed_labels = true;
                continue;
            }
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 5 {
                return Err(err(format!("expected 5 tab-separated fields, found {}", fields.len())));
            }
            if fields[0].is_empty() {
                return Err(err("empty document id".into()));
            }
            let label = match index.get(fields[1]) {
                Some(&j) => j,
                None if !fixed_labels => {
                    labels.push(fields[1].to_owned());
                    index.insert(fields[1].to_owned(), labels.len() - 1);
                    labels.len() - 1
                }
                None => return Err(err(format!("label {:?} not in #labels", fields[1]))),
            };
            let p: f64 = fields[2]
                .parse()
                .map_err(|_| err(format!("bad probability {:?}", fields[2])))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(err(format!("probability {p} outside [0, 1]")));
            }
            let truth = match fields[3] {
                "0" => false,
                "1" => true,
                other => return Err(err(format!("truth must be 0 or 1, got {other:?}"))),
            };
            let fold: usize = fields[4]
                .parse()
                .map_err(|_| err(format!("bad fold index {:?}", fields[4])))?;
            records.push(Prediction {
                doc_id: fields[0].to_owned(),
                label,
                probability: F::lit(p),
                truth,
                fold,
            });
        }
        Ok(PredictionSet { labels, records })
    }
}

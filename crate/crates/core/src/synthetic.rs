//! Keyword-separable synthetic corpora.
//!
//! Each label owns one keyword token; a document carries the label exactly
//! when the keyword occurs in its text. Remaining tokens are filler drawn
//! uniformly from a fixed vocabulary. Label correlation is introduced by
//! letting each label copy its predecessor's bit with probability
//! `correlation` before falling back to an independent draw.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::{Corpus, Document, LabelVocabulary};
use crate::error::{Error, Result};
use crate::seed::rng_for;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub docs: usize,
    pub labels: usize,
    /// Independent per-label positive rate.
    pub prevalence: f64,
    /// Probability that label `j > 0` copies label `j - 1`.
    pub correlation: f64,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub filler_vocab: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            docs: 1000,
            labels: 10,
            prevalence: 0.3,
            correlation: 0.0,
            min_tokens: 10,
            max_tokens: 30,
            filler_vocab: 40,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.docs == 0 || self.labels == 0 {
            return Err(Error::invalid(
                "synthetic corpus needs at least one document and one label",
            ));
        }
        if !(0.0..=1.0).contains(&self.prevalence) || !(0.0..=1.0).contains(&self.correlation) {
            return Err(Error::invalid("prevalence and correlation must lie in [0, 1]"));
        }
        if self.min_tokens == 0 || self.min_tokens > self.max_tokens {
            return Err(Error::invalid("token range must satisfy 1 <= min <= max"));
        }
        if self.filler_vocab == 0 {
            return Err(Error::invalid("filler vocabulary must be non-empty"));
        }
        Ok(())
    }
}

pub fn label_name(j: usize) -> String {
    format!("topic_{j}")
}

pub fn keyword(j: usize) -> String {
    format!("kw{j}marker")
}

pub fn generate(cfg: &SyntheticConfig) -> Result<Corpus> {
    cfg.validate()?;
    let mut rng = rng_for(cfg.seed, &[]);
    let vocab = LabelVocabulary::new((0..cfg.labels).map(label_name))?;
    let mut documents = Vec::with_capacity(cfg.docs);
    for i in 0..cfg.docs {
        let mut labels = Vec::with_capacity(cfg.labels);
        for j in 0..cfg.labels {
            let bit = if j > 0 && rng.gen_bool(cfg.correlation) {
                labels[j - 1]
            } else {
                rng.gen_bool(cfg.prevalence)
            };
            labels.push(bit);
        }
        let length = rng.gen_range(cfg.min_tokens..=cfg.max_tokens);
        let mut tokens: Vec<String> = (0..length)
            .map(|_| format!("w{}", rng.gen_range(0..cfg.filler_vocab)))
            .collect();
        for (j, _) in labels.iter().enumerate().filter(|(_, &b)| b) {
            tokens.push(keyword(j));
        }
        tokens.shuffle(&mut rng);
        documents.push(Document {
            id: format!("doc{i:05}"),
            text: tokens.join(" "),
            labels,
        });
    }
    Corpus::new(documents, vocab)
}

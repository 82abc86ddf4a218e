use std::collections::HashMap;
use std::hash::Hasher;

use fnv::FnvHasher;

use super::tokenize::tokenize_truncated;
use super::Corpus;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_FEATURE_DIM: usize = 32768;

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVec<F> {
    pub dim: usize,
    pub entries: Vec<(usize, F)>,
}

impl<F: Scalar> SparseVec<F> {
    pub fn zeros(dim: usize) -> Self {
        SparseVec {
            dim,
            entries: Vec::new(),
        }
    }

    /// Keeps nonzero entries of a dense slice.
    pub fn from_dense(values: &[F]) -> Self {
        SparseVec {
            dim: values.len(),
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, v)| !v.is_zero())
                .map(|(i, &v)| (i, v))
                .collect(),
        }
    }

    pub fn to_dense(&self) -> Vec<F> {
        let mut out = vec![F::zero(); self.dim];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }

    pub fn norm(&self) -> F {
        self.entries.iter().map(|&(_, v)| v * v).sum::<F>().sqrt()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }
}

/// Hashed TF-IDF rows, one per document.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<F> {
    pub dim: usize,
    pub rows: Vec<SparseVec<F>>,
    pub doc_ids: Vec<String>,
}

/// Hashing bucket and sign of a token: FNV-1a 64, bucket from the residue,
/// sign from the top bit.
pub(crate) fn hash_token(token: &str, dim: usize) -> (usize, bool) {
    let mut h = FnvHasher::default();
    h.write(token.as_bytes());
    let v = h.finish();
    ((v % dim as u64) as usize, v >> 63 == 1)
}

/// Document frequencies fitted on one set of documents, applied to any other.
#[derive(Debug, Clone)]
pub struct HashedTfidf {
    dim: usize,
    max_length: usize,
    n_docs: usize,
    df: HashMap<String, usize>,
}

impl HashedTfidf {
    pub fn fit<'a, I>(texts: I, dim: usize, max_length: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        if dim < 2 {
            return Err(Error::invalid(format!("feature dim must be >= 2, got {dim}")));
        }
        let mut df: HashMap<String, usize> = HashMap::new();
        let mut n_docs = 0;
        for text in texts {
            n_docs += 1;
            let mut tokens = tokenize_truncated(text, max_length);
            tokens.sort_unstable();
            tokens.dedup();
            for t in tokens {
                *df.entry(t).or_insert(0) += 1;
            }
        }
        if n_docs == 0 {
            return Err(Error::invalid("cannot fit features on an empty corpus"));
        }
        Ok(HashedTfidf {
            dim,
            max_length,
            n_docs,
            df,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Smooth inverse document frequency `ln((1+N)/(1+df)) + 1`.
    pub fn idf(&self, token: &str) -> f64 {
        let df = self.df.get(token).copied().unwrap_or(0);
        ((1 + self.n_docs) as f64 / (1 + df) as f64).ln() + 1.0
    }

    pub fn transform<F: Scalar>(&self, text: &str) -> SparseVec<F> {
        let tokens = tokenize_truncated(text, self.max_length);
        let mut tf: HashMap<&str, usize> = HashMap::new();
        for t in &tokens {
            *tf.entry(t.as_str()).or_insert(0) += 1;
        }
        // Sort tokens so accumulation order (and hence rounding) is fixed.
        let mut counted: Vec<(&str, usize)> = tf.into_iter().collect();
        counted.sort_unstable();
        let mut buckets: HashMap<usize, f64> = HashMap::new();
        for (token, count) in counted {
            let (bucket, negative) = hash_token(token, self.dim);
            let w = count as f64 * self.idf(token);
            *buckets.entry(bucket).or_insert(0.0) += if negative { -w } else { w };
        }
        let mut entries: Vec<(usize, f64)> = buckets.into_iter().filter(|&(_, v)| v != 0.0).collect();
        entries.sort_unstable_by_key(|&(i, _)| i);
        let norm = entries.iter().map(|&(_, v)| v * v).sum::<f64>().sqrt();
        SparseVec {
            dim: self.dim,
            entries: entries.into_iter().map(|(i, v)| (i, F::lit(v / norm))).collect(),
        }
    }

    pub fn transform_corpus<F: Scalar>(&self, corpus: &Corpus) -> FeatureMatrix<F> {
        FeatureMatrix {
            dim: self.dim,
            rows: corpus.documents.iter().map(|d| self.transform(&d.text)).collect(),
            doc_ids: corpus.documents.iter().map(|d| d.id.clone()).collect(),
        }
    }
}

/// Fits document frequencies on `corpus` and featurizes it.
pub fn featurize<F: Scalar>(corpus: &Corpus, dim: usize, max_length: usize) -> Result<FeatureMatrix<F>> {
    let model = HashedTfidf::fit(corpus.documents.iter().map(|d| d.text.as_str()), dim, max_length)?;
    Ok(model.transform_corpus(corpus))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, LabelVocabulary};

    fn corpus(texts: &[&str]) -> Corpus {
        let vocab = LabelVocabulary::new(["A"]).unwrap();
        let docs = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Document {
                id: i.to_string(),
                text: t.to_string(),
                labels: vec![false],
            })
            .collect();
        Corpus::new(docs, vocab).unwrap()
    }

    #[test]
    fn single_token_has_unit_weight() {
        let fm = featurize::<f64>(&corpus(&["tumor"]), 1024, 128).unwrap();
        assert_eq!(fm.rows[0].nnz(), 1);
        assert_eq!(fm.rows[0].entries[0].1.abs(), 1.0);
    }

    #[test]
    fn idf_of_ubiquitous_token_is_one() {
        let c = corpus(&["cell growth", "cell death", "cell"]);
        let m = HashedTfidf::fit(c.documents.iter().map(|d| d.text.as_str()), 64, 10).unwrap();
        assert_eq!(m.idf("cell"), 1.0);
        assert!(m.idf("growth") > 1.0);
    }

    #[test]
    fn rows_are_unit_norm() {
        let c = corpus(&["a b c a", "b b d e f", "g h"]);
        let fm = featurize::<f64>(&c, 4096, 128).unwrap();
        for r in &fm.rows {
            assert!((r.norm() - 1.0).abs() < 1e-9);
            assert!(r.entries.iter().all(|&(i, _)| i < fm.dim));
            assert!(r.entries.windows(2).all(|w| w[0].0 < w[1].0));
        }
    }

    #[test]
    fn max_length_drops_trailing_tokens() {
        let c = corpus(&["alpha beta gamma"]);
        let truncated = featurize::<f64>(&c, 4096, 1).unwrap();
        let only_alpha = featurize::<f64>(&corpus(&["alpha"]), 4096, 1).unwrap();
        assert_eq!(truncated.rows, only_alpha.rows);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(featurize::<f64>(&corpus(&["a"]), 1, 10).is_err());
        assert!(featurize::<f64>(&corpus(&[]), 16, 10).is_err());
    }

    #[test]
    fn disjoint_tokens_give_disjoint_support() {
        // Brute-force recomputation: every token's bucket and signed weight are
        // rebuilt independently from the hash definition.
        let texts = ["apoptosis evasion", "angiogenesis invasion metastasis"];
        let c = corpus(&texts);
        let dim = 1 << 16;
        let fm = featurize::<f64>(&c, dim, 512).unwrap();
        let buckets: Vec<Vec<usize>> = texts
            .iter()
            .map(|t| {
                let mut b: Vec<usize> = t.split(' ').map(|w| hash_token(w, dim).0).collect();
                b.sort_unstable();
                b
            })
            .collect();
        assert!(
            buckets[0].iter().all(|b| !buckets[1].contains(b)),
            "test assumes no collisions"
        );
        for (row, expect) in fm.rows.iter().zip(&buckets) {
            let got: Vec<usize> = row.entries.iter().map(|e| e.0).collect();
            assert_eq!(&got, expect);
        }
        // All tokens have df = 1 over N = 2, so each weight is ±1/sqrt(n_tokens).
        for (row, t) in fm.rows.iter().zip(texts) {
            let n = t.split(' ').count() as f64;
            for &(i, v) in &row.entries {
                let token = t.split(' ').find(|w| hash_token(w, dim).0 == i).unwrap();
                let sign = if hash_token(token, dim).1 { -1.0 } else { 1.0 };
                assert!((v - sign / n.sqrt()).abs() < 1e-12);
            }
        }
        let s0: Vec<usize> = fm.rows[0].entries.iter().map(|e| e.0).collect();
        assert!(fm.rows[1].entries.iter().all(|e| !s0.contains(&e.0)));
    }
}

use std::collections::HashMap;
use std::hash::Hasher;

use fnv::FnvHasher;
use rand::seq::SliceRandom;

use super::Corpus;
use crate::error::{Error, Result};
use crate::seed::{rng_for, TAG_STRATIFY};

/// Fold index per document, aligned with corpus order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub k: usize,
    pub folds: Vec<usize>,
    pub doc_ids: Vec<String>,
}

impl FoldAssignment {
    pub fn new(k: usize, folds: Vec<usize>, doc_ids: Vec<String>) -> Result<Self> {
        if folds.len() != doc_ids.len() {
            return Err(Error::DimensionMismatch {
                expected: doc_ids.len(),
                actual: folds.len(),
            });
        }
        if let Some(&f) = folds.iter().find(|&&f| f >= k) {
            return Err(Error::invalid(format!("fold index {f} out of range for k = {k}")));
        }
        Ok(FoldAssignment { k, folds, doc_ids })
    }

    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.doc_ids.iter().position(|d| d == id).map(|i| self.folds[i])
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.folds {
            sizes[f] += 1;
        }
        sizes
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] != fold).collect()
    }

    pub fn validation_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] == fold).collect()
    }

    /// Checks that the assignment covers exactly the documents of `corpus`.
    pub fn check_covers(&self, corpus: &Corpus) -> Result<()> {
        let same =
            self.doc_ids.len() == corpus.len() && self.doc_ids.iter().zip(&corpus.documents).all(|(a, d)| *a == d.id);
        if same {
            Ok(())
        } else {
            Err(Error::invalid("fold assignment does not match corpus documents"))
        }
    }

    /// Stable digest of (document id, fold) pairs.
    pub fn fingerprint(&self) -> u64 {
        let mut h = FnvHasher::default();
        h.write_usize(self.k);
        for (id, f) in self.doc_ids.iter().zip(&self.folds) {
            h.write(id.as_bytes());
            h.write_u8(0);
            h.write_usize(*f);
        }
        h.finish()
    }
}

/// Greedy iterative stratification of `labels` into bins of fixed capacity.
///
/// Repeatedly takes the label with the fewest unassigned positives and places
/// each of its documents (in seeded order) into the open bin with the largest
/// outstanding demand for that label, breaking ties by largest remaining
/// capacity and then lowest bin index. Documents with no labels fill the
/// remaining capacity. Capacities must sum to the document count.
pub(crate) fn iterative_stratify(labels: &[Vec<bool>], capacities: &[usize], seed: u64) -> Vec<usize> {
    let n = labels.len();
    debug_assert_eq!(capacities.iter().sum::<usize>(), n);
    let num_labels = labels.first().map_or(0, Vec::len);
    let bins = capacities.len();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, &[TAG_STRATIFY]));

    let positives: Vec<i64> = (0..num_labels)
        .map(|j| labels.iter().filter(|l| l[j]).count() as i64)
        .collect();
    // demand[b][j] * n: desired positives minus those already placed, kept in
    // integers scaled by n so comparisons are exact.
    let mut demand: Vec<Vec<i64>> = capacities
        .iter()
        .map(|&c| positives.iter().map(|&p| p * c as i64).collect())
        .collect();
    let mut remaining_cap: Vec<usize> = capacities.to_vec();
    let mut remaining_pos: Vec<usize> = positives.iter().map(|&p| p as usize).collect();
    let mut bin_of = vec![usize::MAX; n];

    loop {
        let next = (0..num_labels)
            .filter(|&j| remaining_pos[j] > 0)
            .min_by_key(|&j| (remaining_pos[j], j));
        let Some(label) = next else { break };
        for &doc in &order {
            if !labels[doc][label] || bin_of[doc] != usize::MAX {
                continue;
            }
            let bin = (0..bins)
                .filter(|&b| remaining_cap[b] > 0)
                .max_by(|&a, &b| {
                    demand[a][label]
                        .cmp(&demand[b][label])
                        .then(remaining_cap[a].cmp(&remaining_cap[b]))
                        .then(b.cmp(&a))
                })
                .expect("capacities sum to document count");
            bin_of[doc] = bin;
            remaining_cap[bin] -= 1;
            for j in 0..num_labels {
                if labels[doc][j] {
                    demand[bin][j] -= n as i64;
                    remaining_pos[j] -= 1;
                }
            }
        }
    }
    for &doc in &order {
        if bin_of[doc] != usize::MAX {
            continue;
        }
        let bin = (0..bins)
            .filter(|&b| remaining_cap[b] > 0)
            .max_by(|&a, &b| remaining_cap[a].cmp(&remaining_cap[b]).then(b.cmp(&a)))
            .expect("capacities sum to document count");
        bin_of[doc] = bin;
        remaining_cap[bin] -= 1;
    }
    rebalance(labels, capacities, &order, &mut bin_of);
    bin_of
}

/// Local repair after the greedy pass: repeatedly applies the document swap
/// between two bins that most reduces the squared deviation of per-bin
/// positive counts from their proportional targets. Swaps keep every bin's
/// size, and the search stops at the first configuration no single swap
/// improves. Documents are grouped by (bin, label pattern); within a group
/// the earliest document in seeded order moves first.
fn rebalance(labels: &[Vec<bool>], capacities: &[usize], order: &[usize], bin_of: &mut [usize]) {
    let n = labels.len() as i64;
    let num_labels = labels.first().map_or(0, Vec::len);
    let bins = capacities.len();
    if num_labels == 0 || bins < 2 {
        return;
    }
    let positives: Vec<i64> = (0..num_labels)
        .map(|j| labels.iter().filter(|l| l[j]).count() as i64)
        .collect();
    // dev[b][j] = n * placed - positives * capacity, the scaled excess.
    let mut dev: Vec<Vec<i64>> = capacities
        .iter()
        .map(|&c| positives.iter().map(|&p| -p * c as i64).collect())
        .collect();
    for (d, row) in labels.iter().enumerate() {
        for j in 0..num_labels {
            if row[j] {
                dev[bin_of[d]][j] += n;
            }
        }
    }
    // Groups keyed by (bin, pattern), members in seeded order.
    let mut groups: std::collections::BTreeMap<(usize, Vec<bool>), Vec<usize>> = Default::default();
    for &d in order {
        groups.entry((bin_of[d], labels[d].clone())).or_default().push(d);
    }
    // Each accepted swap strictly lowers a non-negative integer objective,
    // so the loop terminates; the cap is a guard, not a tuning knob.
    for _ in 0..labels.len() * bins {
        let keys: Vec<(usize, Vec<bool>)> = groups.keys().cloned().collect();
        let mut best: Option<(i64, usize, usize)> = None;
        for (ia, (a, pa)) in keys.iter().enumerate() {
            for (ib, (b, pb)) in keys.iter().enumerate().skip(ia + 1) {
                if a == b || pa == pb {
                    continue;
                }
                let mut delta = 0i64;
                for j in 0..num_labels {
                    let shift = (i64::from(pb[j]) - i64::from(pa[j])) * n;
                    if shift != 0 {
                        let (da, db) = (dev[*a][j], dev[*b][j]);
                        delta += (da + shift).pow(2) - da.pow(2) + (db - shift).pow(2) - db.pow(2);
                    }
                }
                if delta < 0 && best.is_none_or(|(d, _, _)| delta < d) {
                    best = Some((delta, ia, ib));
                }
            }
        }
        let Some((_, ia, ib)) = best else { break };
        let (ka, kb) = (keys[ia].clone(), keys[ib].clone());
        let da = groups.get_mut(&ka).expect("group exists").remove(0);
        let db = groups.get_mut(&kb).expect("group exists").remove(0);
        for key in [&ka, &kb] {
            if groups[key].is_empty() {
                groups.remove(key);
            }
        }
        for (doc, from, to) in [(da, ka.0, kb.0), (db, kb.0, ka.0)] {
            bin_of[doc] = to;
            for j in 0..num_labels {
                if labels[doc][j] {
                    dev[from][j] -= n;
                    dev[to][j] += n;
                }
            }
            let entry = groups.entry((to, labels[doc].clone())).or_default();
            let at = entry
                .iter()
                .position(|&x| rank(order, x) > rank(order, doc))
                .unwrap_or(entry.len());
            entry.insert(at, doc);
        }
    }
}

fn rank(order: &[usize], doc: usize) -> usize {
    order.iter().position(|&d| d == doc).expect("document in order")
}

fn label_rows(corpus: &Corpus) -> Vec<Vec<bool>> {
    corpus.documents.iter().map(|d| d.labels.clone()).collect()
}

/// Stratified k-fold assignment; fold sizes differ by at most one.
pub fn stratified_kfold(corpus: &Corpus, k: usize, seed: u64) -> Result<FoldAssignment> {
    let n = corpus.len();
    if k < 2 || k > n {
        return Err(Error::invalid(format!(
            "fold count must satisfy 2 <= k <= {n} (documents), got {k}"
        )));
    }
    let capacities: Vec<usize> = (0..k).map(|f| n / k + usize::from(f < n % k)).collect();
    let folds = iterative_stratify(&label_rows(corpus), &capacities, seed);
    FoldAssignment::new(k, folds, corpus.documents.iter().map(|d| d.id.clone()).collect())
}

/// Topic-distribution-preserving subset of `size` documents, in corpus order.
pub fn stratified_sample(corpus: &Corpus, size: usize, seed: u64) -> Result<Corpus> {
    let n = corpus.len();
    if size == 0 || size > n {
        return Err(Error::invalid(format!("sample size must be in 1..={n}, got {size}")));
    }
    let bins = iterative_stratify(&label_rows(corpus), &[size, n - size], seed);
    let chosen: Vec<usize> = (0..n).filter(|&i| bins[i] == 0).collect();
    Ok(corpus.subset(&chosen))
}

/// Per-fold positive counts, `[fold][label]`.
pub fn fold_label_counts(corpus: &Corpus, folds: &FoldAssignment) -> Vec<Vec<usize>> {
    let mut counts = vec![vec![0; corpus.num_labels()]; folds.k];
    let index: HashMap<&str, usize> = folds
        .doc_ids
        .iter()
        .zip(&folds.folds)
        .map(|(id, &f)| (id.as_str(), f))
        .collect();
    for d in &corpus.documents {
        let f = index[d.id.as_str()];
        for (j, &b) in d.labels.iter().enumerate() {
            if b {
                counts[f][j] += 1;
            }
        }
    }
    counts
}

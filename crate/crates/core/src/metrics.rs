//! Multi-label evaluation: confusion counts, precision/recall/F1,
//! example-based F1, micro/macro/weighted F1 and per-label AUC.
//!
//! Every aggregate is accumulated exactly as a rational number and rounded
//! once at the end, so results do not depend on record order.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use crate::distill::{PredictionSet, THRESHOLD};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn add(&mut self, predicted: bool, truth: bool) {
        match (predicted, truth) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn support(&self) -> u64 {
        self.tp + self.fn_
    }

    fn merge(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }
}

fn ratio(n: u64, d: u64) -> BigRational {
    if d == 0 {
        BigRational::zero()
    } else {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }
}

fn to_scalar<F: Scalar>(r: &BigRational) -> F {
    F::lit(r.to_f64().expect("bounded rational converts to f64"))
}

/// Exact precision, recall and F1; 0/0 is 0.
pub fn prf1_exact(c: &ConfusionCounts) -> (BigRational, BigRational, BigRational) {
    let p = ratio(c.tp, c.tp + c.fp);
    let r = ratio(c.tp, c.tp + c.fn_);
    // 2PR / (P + R) simplifies to 2tp / (2tp + fp + fn).
    let f = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_);
    (p, r, f)
}

pub fn prf1<F: Scalar>(c: &ConfusionCounts) -> (F, F, F) {
    let (p, r, f) = prf1_exact(c);
    (to_scalar(&p), to_scalar(&r), to_scalar(&f))
}

fn predicted<F: Scalar>(p: F) -> bool {
    p >= F::lit(THRESHOLD)
}

fn require_nonempty<F: Scalar>(p: &PredictionSet<F>) -> Result<()> {
    if p.is_empty() {
        return Err(Error::invalid("prediction set is empty"));
    }
    p.check_complete()
}

/// Per-label confusion counts in label-index order.
pub fn label_counts<F: Scalar>(p: &PredictionSet<F>) -> Vec<ConfusionCounts> {
    let mut counts = vec![ConfusionCounts::default(); p.labels.len()];
    for r in &p.records {
        counts[r.label].add(predicted(r.probability), r.truth);
    }
    counts
}

/// Mean over documents of `2|Y ∩ Ŷ| / (|Y| + |Ŷ|)`, a document with both sets
/// empty scoring 1.
pub fn example_f1_exact<F: Scalar>(p: &PredictionSet<F>) -> Result<BigRational> {
    require_nonempty(p)?;
    // (intersection, |Y| + |Ŷ|) per document.
    let mut per_doc: HashMap<&str, (u64, u64)> = HashMap::new();
    for r in &p.records {
        let e = per_doc.entry(r.doc_id.as_str()).or_default();
        let yhat = predicted(r.probability);
        e.0 += u64::from(yhat && r.truth);
        e.1 += u64::from(yhat) + u64::from(r.truth);
    }
    // Group numerators by denominator so the rational sum stays small.
    let mut by_denominator: BTreeMap<u64, u64> = BTreeMap::new();
    for &(inter, size) in per_doc.values() {
        let (n, d) = if size == 0 { (1, 1) } else { (2 * inter, size) };
        *by_denominator.entry(d).or_default() += n;
    }
    let sum = by_denominator
        .into_iter()
        .fold(BigRational::zero(), |acc, (d, n)| acc + ratio(n, d));
    Ok(sum / BigRational::from_integer(BigInt::from(per_doc.len())))
}

pub fn example_f1<F: Scalar>(p: &PredictionSet<F>) -> Result<F> {
    example_f1_exact(p).map(|r| to_scalar(&r))
}

pub fn micro_f1_exact<F: Scalar>(p: &PredictionSet<F>) -> Result<BigRational> {
    require_nonempty(p)?;
    let mut pooled = ConfusionCounts::default();
    for c in label_counts(p) {
        pooled.merge(&c);
    }
    Ok(prf1_exact(&pooled).2)
}

pub fn micro_f1<F: Scalar>(p: &PredictionSet<F>) -> Result<F> {
    micro_f1_exact(p).map(|r| to_scalar(&r))
}

pub fn macro_f1_exact<F: Scalar>(p: &PredictionSet<F>) -> Result<BigRational> {
    require_nonempty(p)?;
    let counts = label_counts(p);
    let sum = counts.iter().fold(BigRational::zero(), |acc, c| acc + prf1_exact(c).2);
    Ok(sum / BigRational::from_integer(BigInt::from(counts.len())))
}

pub fn macro_f1<F: Scalar>(p: &PredictionSet<F>) -> Result<F> {
    macro_f1_exact(p).map(|r| to_scalar(&r))
}

/// How label weights are formed for the weighted F1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    /// `positives_j / Σ_k positives_k`; weights sum to 1.
    #[default]
    SupportNormalized,
    /// `positives_j / documents`; weights may sum to more than 1 on
    /// multi-label data.
    Literal,
}

pub fn weighted_f1_exact<F: Scalar>(p: &PredictionSet<F>, weighting: Weighting) -> Result<BigRational> {
    require_nonempty(p)?;
    let counts = label_counts(p);
    let numerator: BigRational = counts.iter().fold(BigRational::zero(), |acc, c| {
        acc + prf1_exact(c).2 * BigRational::from_integer(BigInt::from(c.support()))
    });
    let denominator = match weighting {
        Weighting::SupportNormalized => counts.iter().map(ConfusionCounts::support).sum::<u64>(),
        Weighting::Literal => p.doc_ids().len() as u64,
    };
    if denominator == 0 {
        return Ok(BigRational::zero());
    }
    Ok(numerator / BigRational::from_integer(BigInt::from(denominator)))
}

pub fn weighted_f1<F: Scalar>(p: &PredictionSet<F>) -> Result<F> {
    weighted_f1_exact(p, Weighting::SupportNormalized).map(|r| to_scalar(&r))
}

/// Mann-Whitney AUC as an exact fraction `(2·wins + ties) / (2·P·N)`;
/// `None` without at least one positive and one negative.
pub fn auc_exact<F: Scalar>(scores: &[(F, bool)]) -> Option<(u128, u128)> {
    let positives = scores.iter().filter(|s| s.1).count() as u128;
    let negatives = scores.len() as u128 - positives;
    if positives == 0 || negatives == 0 {
        return None;
    }
    let mut sorted: Vec<(F, bool)> = scores.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("scores are comparable"));
    // Walk tie groups in ascending order; every positive beats all negatives
    // strictly below its group and ties with negatives inside it.
    let mut twice_u: u128 = 0;
    let mut negatives_below: u128 = 0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        let group_pos = sorted[i..j].iter().filter(|s| s.1).count() as u128;
        let group_neg = (j - i) as u128 - group_pos;
        twice_u += group_pos * (2 * negatives_below + group_neg);
        negatives_below += group_neg;
        i = j;
    }
    Some((twice_u, 2 * positives * negatives))
}

pub fn auc<F: Scalar>(scores: &[(F, bool)]) -> Result<Option<F>> {
    if scores.iter().any(|s| !s.0.is_finite()) {
        return Err(Error::NonFinite("AUC scores".into()));
    }
    Ok(auc_exact(scores).map(|(n, d)| {
        let r = BigRational::new(BigInt::from(n), BigInt::from(d));
        to_scalar(&r)
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelMetrics<F> {
    pub name: String,
    pub precision: F,
    pub recall: F,
    pub f1: F,
    pub auc: Option<F>,
    pub counts: ConfusionCounts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport<F> {
    pub documents: usize,
    pub example_f1: F,
    pub micro_f1: F,
    pub macro_f1: F,
    pub weighted_f1: F,
    /// Literal-weight variant, present only when requested.
    pub weighted_f1_literal: Option<F>,
    /// Mean AUC over labels where it is defined.
    pub macro_auc: Option<F>,
    pub per_label: Vec<LabelMetrics<F>>,
}

pub fn full_report<F: Scalar>(p: &PredictionSet<F>) -> Result<MetricsReport<F>> {
    report_with(p, false)
}

/// As [`full_report`], optionally adding the literal-weight weighted F1.
pub fn report_with<F: Scalar>(p: &PredictionSet<F>, literal_weights: bool) -> Result<MetricsReport<F>> {
    require_nonempty(p)?;
    let counts = label_counts(p);
    let mut scores: Vec<Vec<(F, bool)>> = vec![Vec::new(); p.labels.len()];
    for r in &p.records {
        scores[r.label].push((r.probability, r.truth));
    }
    let mut per_label = Vec::with_capacity(p.labels.len());
    let mut auc_sum = BigRational::zero();
    let mut auc_defined = 0u64;
    for (j, c) in counts.iter().enumerate() {
        let (precision, recall, f1) = prf1(c);
        let exact = auc_exact(&scores[j]);
        if let Some((n, d)) = exact {
            auc_sum += BigRational::new(BigInt::from(n), BigInt::from(d));
            auc_defined += 1;
        }
        per_label.push(LabelMetrics {
            name: p.labels[j].clone(),
            precision,
            recall,
            f1,
            auc: exact.map(|(n, d)| to_scalar(&BigRational::new(BigInt::from(n), BigInt::from(d)))),
            counts: *c,
        });
    }
    let macro_auc =
        (auc_defined > 0).then(|| to_scalar(&(auc_sum / BigRational::from_integer(BigInt::from(auc_defined)))));
    Ok(MetricsReport {
        documents: p.doc_ids().len(),
        example_f1: example_f1(p)?,
        micro_f1: micro_f1(p)?,
        macro_f1: macro_f1(p)?,
        weighted_f1: weighted_f1(p)?,
        weighted_f1_literal: if literal_weights {
            Some(to_scalar(&weighted_f1_exact(p, Weighting::Literal)?))
        } else {
            None
        },
        macro_auc,
        per_label,
    })
}

fn fmt6<F: Scalar>(v: F) -> String {
    format!("{:.6}", v.as_f64())
}

fn fmt_opt<F: Scalar>(v: Option<F>) -> String {
    v.map_or_else(|| "absent".to_owned(), fmt6)
}

impl<F: Scalar> MetricsReport<F> {
    /// `key = value` text with fixed key names and six decimals; per-label
    /// blocks open with `[label NAME]`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "documents = {}", self.documents);
        let _ = writeln!(out, "labels = {}", self.per_label.len());
        let _ = writeln!(out, "example_f1 = {}", fmt6(self.example_f1));
        let _ = writeln!(out, "micro_f1 = {}", fmt6(self.micro_f1));
        let _ = writeln!(out, "macro_f1 = {}", fmt6(self.macro_f1));
        let _ = writeln!(out, "weighted_f1 = {}", fmt6(self.weighted_f1));
        if let Some(w) = self.weighted_f1_literal {
            let _ = writeln!(out, "weighted_f1_literal = {}", fmt6(w));
        }
        let _ = writeln!(out, "macro_auc = {}", fmt_opt(self.macro_auc));
        for l in &self.per_label {
            let _ = writeln!(out, "\n[label {}]", l.name);
            let _ = writeln!(out, "precision = {}", fmt6(l.precision));
            let _ = writeln!(out, "recall = {}", fmt6(l.recall));
            let _ = writeln!(out, "f1 = {}", fmt6(l.f1));
            let _ = writeln!(out, "auc = {}", fmt_opt(l.auc));
            let c = &l.counts;
            let _ = writeln!(out, "tp = {}\nfp = {}\nfn = {}\ntn = {}", c.tp, c.fp, c.fn_, c.tn);
        }
        out
    }

    /// Reads a top-level value back from [`MetricsReport::to_text`] output.
    pub fn parse_field(text: &str, key: &str) -> Option<f64> {
        text.lines()
            .take_while(|l| !l.starts_with('['))
            .filter(|l| !l.starts_with('#'))
            .filter_map(|l| l.split_once(" = "))
            .find(|(k, _)| *k == key)
            .and_then(|(_, v)| v.parse().ok())
    }
}

//! Naive brute-force metrics over exact rationals.

// Shared between test targets; each uses a subset.
#![allow(dead_code)]

use mltc::distill::{Prediction, PredictionSet};
use mltc::metrics::{auc, example_f1, full_report, macro_f1, micro_f1, weighted_f1};
use mltc::seed::rng_for;
use num_rational::Ratio;
use num_traits::ToPrimitive;
use rand::seq::SliceRandom;
use rand::Rng;

type Q = Ratio<i64>;

pub const CASES: u64 = 10_000;
const GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

pub struct Matrix {
    probs: Vec<Vec<f64>>,
    truth: Vec<Vec<bool>>,
}

impl Matrix {
    fn docs(&self) -> usize {
        self.truth.len()
    }

    fn labels(&self) -> usize {
        self.truth[0].len()
    }

    fn pred(&self, d: usize, j: usize) -> bool {
        self.probs[d][j] >= 0.5
    }
}

pub fn random_matrix(case: u64) -> Matrix {
    let mut rng = rng_for(0x0ac1e, &[case]);
    let docs = rng.gen_range(1..=6);
    let labels = rng.gen_range(1..=3);
    let probs = (0..docs)
        .map(|_| {
            (0..labels)
                .map(|_| {
                    if rng.gen_bool(0.5) {
                        GRID[rng.gen_range(0..GRID.len())]
                    } else {
                        rng.gen()
                    }
                })
                .collect()
        })
        .collect();
    let truth = (0..docs)
        .map(|_| (0..labels).map(|_| rng.gen_bool(0.5)).collect())
        .collect();
    Matrix { probs, truth }
}

pub fn to_set(m: &Matrix, shuffle_seed: u64) -> PredictionSet<f64> {
    let mut p = PredictionSet::new((0..m.labels()).map(|j| format!("L{j}")).collect());
    for d in 0..m.docs() {
        for j in 0..m.labels() {
            p.records.push(Prediction {
                doc_id: format!("d{d}"),
                label: j,
                probability: m.probs[d][j],
                truth: m.truth[d][j],
                fold: 0,
            });
        }
    }
    p.records.shuffle(&mut rng_for(shuffle_seed, &[]));
    p
}

fn q(n: i64, d: i64) -> Q {
    if d == 0 {
        Q::from_integer(0)
    } else {
        Q::new(n, d)
    }
}

pub fn f(x: Q) -> f64 {
    x.to_f64().unwrap()
}

/// Per-label (tp, fp, fn) counted cell by cell.
fn counts(m: &Matrix, j: usize) -> (i64, i64, i64) {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for d in 0..m.docs() {
        match (m.pred(d, j), m.truth[d][j]) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    (tp, fp, fn_)
}

/// F1 as the harmonic mean of precision and recall, 0 when undefined.
fn f1_from(tp: i64, fp: i64, fn_: i64) -> Q {
    let p = q(tp, tp + fp);
    let r = q(tp, tp + fn_);
    if p + r == Q::from_integer(0) {
        Q::from_integer(0)
    } else {
        Q::from_integer(2) * p * r / (p + r)
    }
}

fn oracle_example(m: &Matrix) -> Q {
    let mut sum = Q::from_integer(0);
    for d in 0..m.docs() {
        let y: Vec<usize> = (0..m.labels()).filter(|&j| m.truth[d][j]).collect();
        let yhat: Vec<usize> = (0..m.labels()).filter(|&j| m.pred(d, j)).collect();
        let inter = y.iter().filter(|j| yhat.contains(j)).count() as i64;
        sum += if y.is_empty() && yhat.is_empty() {
            Q::from_integer(1)
        } else {
            q(2 * inter, (y.len() + yhat.len()) as i64)
        };
    }
    sum / Q::from_integer(m.docs() as i64)
}

fn oracle_micro(m: &Matrix) -> Q {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for j in 0..m.labels() {
        let c = counts(m, j);
        tp += c.0;
        fp += c.1;
        fn_ += c.2;
    }
    f1_from(tp, fp, fn_)
}

fn oracle_macro(m: &Matrix) -> Q {
    let sum: Q = (0..m.labels())
        .map(|j| {
            let (tp, fp, fn_) = counts(m, j);
            f1_from(tp, fp, fn_)
        })
        .sum();
    sum / Q::from_integer(m.labels() as i64)
}

fn oracle_weighted(m: &Matrix) -> Q {
    let mut num = Q::from_integer(0);
    let mut total = 0;
    for j in 0..m.labels() {
        let (tp, fp, fn_) = counts(m, j);
        num += f1_from(tp, fp, fn_) * Q::from_integer(tp + fn_);
        total += tp + fn_;
    }
    if total == 0 {
        Q::from_integer(0)
    } else {
        num / Q::from_integer(total)
    }
}

/// Pairwise enumeration: pairs where the positive outscores the negative,
/// ties counted one half.
pub fn oracle_auc(scores: &[(f64, bool)]) -> Option<Q> {
    let mut num = Q::from_integer(0);
    let mut pairs = 0;
    for &(sp, tp) in scores {
        for &(sn, tn) in scores {
            if tp && !tn {
                pairs += 1;
                if sp > sn {
                    num += Q::from_integer(1);
                } else if sp == sn {
                    num += Q::new(1, 2);
                }
            }
        }
    }
    (pairs > 0).then(|| num / Q::from_integer(pairs))
}

/// Compares every metric for one seeded matrix bit for bit.
pub fn check_case(case: u64) -> Result<(), String> {
    let m = random_matrix(case);
    let p = to_set(&m, case);
    let mismatch = |name: &str| format!("case {case}: {name}");
    let exact = |got: f64, want: Q, name: &str| {
        if got.to_bits() == f(want).to_bits() {
            Ok(())
        } else {
            Err(format!("{}: {got} vs {}", mismatch(name), f(want)))
        }
    };
    let err = |e: mltc::Error| e.to_string();
    exact(example_f1(&p).map_err(err)?, oracle_example(&m), "example")?;
    exact(micro_f1(&p).map_err(err)?, oracle_micro(&m), "micro")?;
    exact(macro_f1(&p).map_err(err)?, oracle_macro(&m), "macro")?;
    exact(weighted_f1(&p).map_err(err)?, oracle_weighted(&m), "weighted")?;
    let report = full_report(&p).map_err(err)?;
    for j in 0..m.labels() {
        let scores: Vec<(f64, bool)> = (0..m.docs()).map(|d| (m.probs[d][j], m.truth[d][j])).collect();
        let expected = oracle_auc(&scores).map(f);
        if auc(&scores).map_err(err)? != expected || report.per_label[j].auc != expected {
            return Err(mismatch("auc"));
        }
        let (tp, fp, fn_) = counts(&m, j);
        exact(report.per_label[j].f1, f1_from(tp, fp, fn_), "label f1")?;
    }
    Ok(())
}

/// Score vectors with heavy ties: few distinct levels over up to 40 items.
pub fn tied_scores(case: u64) -> Vec<(f64, bool)> {
    let mut rng = rng_for(0xa0c, &[case]);
    let n = rng.gen_range(2..=40);
    let levels = rng.gen_range(1..=6);
    (0..n)
        .map(|_| (f64::from(rng.gen_range(0..levels)) / 5.0, rng.gen_bool(0.4)))
        .collect()
}

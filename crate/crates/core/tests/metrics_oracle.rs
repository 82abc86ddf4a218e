//! Metrics against a naive brute-force implementation over exact rationals.

#[path = "oracle/metrics.rs"]
mod oracle;

use mltc::metrics::{auc, full_report};
use oracle::{check_case, f, oracle_auc, random_matrix, tied_scores, to_set, CASES};

#[test]
fn metrics_match_brute_force_oracle_bit_for_bit() {
    for case in 0..CASES {
        check_case(case).unwrap();
    }
}

#[test]
fn record_order_does_not_change_any_metric() {
    for case in 0..200 {
        let m = random_matrix(case);
        let a = full_report(&to_set(&m, 1)).unwrap();
        let b = full_report(&to_set(&m, 2)).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        assert_eq!(a, b);
    }
}

#[test]
fn auc_matches_pairwise_enumeration_with_ties() {
    for case in 0..200u64 {
        let scores = tied_scores(case);
        assert_eq!(auc(&scores).unwrap(), oracle_auc(&scores).map(f), "case {case}");
    }
}

#[test]
fn auc_worked_examples() {
    let s = [(0.9, true), (0.8, false), (0.7, true), (0.1, false)];
    assert_eq!(auc(&s).unwrap(), Some(0.75));
    assert_eq!(auc(&[(0.3, true), (0.3, false)]).unwrap(), Some(0.5));
    assert_eq!(auc(&[(0.3, true), (0.4, true)]).unwrap(), None);
}

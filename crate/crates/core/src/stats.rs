//! Replication statistics: descriptive summaries with t-based confidence
//! intervals, two-sample t-tests and one-way ANOVA with eta squared.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos approximation).
pub fn ln_gamma<F: Scalar>(x: F) -> F {
    let pi = F::lit(std::f64::consts::PI);
    if x < F::lit(0.5) {
        // Reflection: Γ(x) Γ(1 - x) = π / sin(πx).
        return (pi / (pi * x).sin()).ln() - ln_gamma(F::one() - x);
    }
    let x = x - F::one();
    let mut a = F::lit(LANCZOS[0]);
    let t = x + F::lit(LANCZOS_G + 0.5);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        a += F::lit(c) / (x + F::from_usize_lossy(i));
    }
    F::lit(0.5) * (F::lit(2.0) * pi).ln() + (x + F::lit(0.5)) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf<F: Scalar>(a: F, b: F, x: F) -> F {
    let tiny = F::lit(1e-300).max(F::min_positive_value());
    let eps = F::epsilon();
    let one = F::one();
    let qab = a + b;
    let qap = a + one;
    let qam = a - one;
    let mut c = one;
    let mut d = one - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = one / d;
    let mut h = d;
    for m in 1..=500usize {
        let m = F::from_usize_lossy(m);
        let m2 = m + m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        let del = d * c;
        h *= del;
        if (del - one).abs() < eps {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)` for `a, b > 0`, `x ∈ [0, 1]`.
pub fn incomplete_beta<F: Scalar>(a: F, b: F, x: F) -> F {
    if x <= F::zero() {
        return F::zero();
    }
    if x >= F::one() {
        return F::one();
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (F::one() - x).ln();
    let front = ln_front.exp();
    if x < (a + F::one()) / (a + b + F::lit(2.0)) {
        front * beta_cf(a, b, x) / a
    } else {
        F::one() - front * beta_cf(b, a, F::one() - x) / b
    }
}

/// Student t cumulative distribution function.
pub fn t_cdf<F: Scalar>(t: F, df: F) -> F {
    if t.is_infinite() {
        return if t > F::zero() { F::one() } else { F::zero() };
    }
    let x = df / (df + t * t);
    let tail = F::lit(0.5) * incomplete_beta(df / F::lit(2.0), F::lit(0.5), x);
    if t > F::zero() {
        F::one() - tail
    } else {
        tail
    }
}

/// Two-sided p-value `P(|T| ≥ |t|)`.
pub fn t_two_sided_p<F: Scalar>(t: F, df: F) -> F {
    if t.is_infinite() {
        return F::zero();
    }
    let x = df / (df + t * t);
    incomplete_beta(df / F::lit(2.0), F::lit(0.5), x).min(F::one())
}

/// F distribution survival function `P(X ≥ f)`.
pub fn f_sf<F: Scalar>(f: F, d1: F, d2: F) -> F {
    if f <= F::zero() {
        return F::one();
    }
    if f.is_infinite() {
        return F::zero();
    }
    incomplete_beta(d2 / F::lit(2.0), d1 / F::lit(2.0), d2 / (d2 + d1 * f))
}

/// Quantile of the t distribution by bisection on [`t_cdf`].
pub fn t_quantile<F: Scalar>(p: F, df: F) -> Result<F> {
    if !(p > F::zero() && p < F::one()) || !(df > F::zero()) {
        return Err(Error::invalid(format!(
            "t quantile needs 0 < p < 1 and df > 0, got p={p}, df={df}"
        )));
    }
    let mut hi = F::one();
    while t_cdf(hi, df) < p {
        hi = hi + hi;
    }
    let mut lo = -F::one();
    while t_cdf(lo, df) > p {
        lo = lo + lo;
    }
    for _ in 0..200 {
        let mid = (lo + hi) / F::lit(2.0);
        if mid == lo || mid == hi {
            break;
        }
        if t_cdf(mid, df) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo + hi) / F::lit(2.0))
}

/// Arithmetic mean; exactly the common value when all scores are equal.
fn mean<F: Scalar>(xs: &[F]) -> F {
    if xs.iter().all(|&x| x == xs[0]) {
        return xs[0];
    }
    xs.iter().copied().sum::<F>() / F::from_usize_lossy(xs.len())
}

/// Sum of squared deviations from the mean; exactly zero for constant input.
fn sum_sq_dev<F: Scalar>(xs: &[F]) -> F {
    let m = mean(xs);
    xs.iter().map(|&x| (x - m) * (x - m)).sum()
}

/// Sample variance (n - 1 denominator); zero for a single value.
fn variance<F: Scalar>(xs: &[F]) -> F {
    if xs.len() < 2 {
        return F::zero();
    }
    sum_sq_dev(xs) / F::from_usize_lossy(xs.len() - 1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary<F> {
    pub n: usize,
    pub mean: F,
    pub sd: F,
    pub min: F,
    pub max: F,
    /// 95% interval `mean ± t(0.975, n-1) · sd / √n`; absent for n = 1.
    pub ci: Option<(F, F)>,
}

pub fn describe<F: Scalar>(scores: &[F]) -> Result<Summary<F>> {
    if scores.is_empty() {
        return Err(Error::invalid("describe needs at least one score"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores".into()));
    }
    let n = scores.len();
    let m = mean(scores);
    let sd = variance(scores).sqrt();
    let ci = if n >= 2 {
        Some(confidence_interval(m, sd, n)?)
    } else {
        None
    };
    Ok(Summary {
        n,
        mean: m,
        sd,
        min: scores.iter().copied().fold(F::infinity(), F::min),
        max: scores.iter().copied().fold(F::neg_infinity(), F::max),
        ci,
    })
}

/// 95% t interval from summary statistics.
pub fn confidence_interval<F: Scalar>(mean: F, sd: F, n: usize) -> Result<(F, F)> {
    if n < 2 {
        return Err(Error::invalid("confidence interval needs n >= 2"));
    }
    let t = t_quantile(F::lit(0.975), F::from_usize_lossy(n - 1))?;
    let half = t * sd / F::from_usize_lossy(n).sqrt();
    Ok((mean - half, mean + half))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTestResult<F> {
    pub mean_difference: F,
    pub t_statistic: F,
    pub df: F,
    pub p_value: F,
    pub significant: bool,
}

pub const SIGNIFICANCE: f64 = 0.05;

/// Two-sample, two-sided t-test of `mean(a) - mean(b)`: Welch by default,
/// pooled-variance Student when `pooled` is set.
pub fn t_test<F: Scalar>(a: &[F], b: &[F], pooled: bool) -> Result<TTestResult<F>> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::invalid("t-test needs at least two scores per sample"));
    }
    if a.iter().chain(b).any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores".into()));
    }
    let (na, nb) = (F::from_usize_lossy(a.len()), F::from_usize_lossy(b.len()));
    let (va, vb) = (variance(a), variance(b));
    let diff = mean(a) - mean(b);
    let (se2, df) = if pooled {
        let df = na + nb - F::lit(2.0);
        let sp2 = ((na - F::one()) * va + (nb - F::one()) * vb) / df;
        (sp2 * (F::one() / na + F::one() / nb), df)
    } else {
        let (qa, qb) = (va / na, vb / nb);
        let se2 = qa + qb;
        let denom = qa * qa / (na - F::one()) + qb * qb / (nb - F::one());
        (
            se2,
            if denom > F::zero() {
                se2 * se2 / denom
            } else {
                na + nb - F::lit(2.0)
            },
        )
    };
    let (t, p) = if se2 > F::zero() {
        let t = diff / se2.sqrt();
        (t, t_two_sided_p(t, df))
    } else if diff == F::zero() {
        (F::zero(), F::one())
    } else {
        (diff.signum() * F::infinity(), F::zero())
    };
    Ok(TTestResult {
        mean_difference: diff,
        t_statistic: t,
        df,
        p_value: p,
        significant: p < F::lit(SIGNIFICANCE),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnovaResult<F> {
    pub f_statistic: F,
    pub df_between: usize,
    pub df_within: usize,
    pub p_value: F,
    pub eta_squared: F,
    pub ss_between: F,
    pub ss_within: F,
}

pub fn anova<F: Scalar>(groups: &[Vec<F>]) -> Result<AnovaResult<F>> {
    if groups.len() < 2 || groups.iter().any(Vec::is_empty) {
        return Err(Error::invalid("ANOVA needs at least two non-empty groups"));
    }
    let total: usize = groups.iter().map(Vec::len).sum();
    if total <= groups.len() {
        return Err(Error::invalid("ANOVA needs more scores than groups"));
    }
    if groups.iter().flatten().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores".into()));
    }
    let all: Vec<F> = groups.iter().flatten().copied().collect();
    let grand = mean(&all);
    let mut ss_between = F::zero();
    let mut ss_within = F::zero();
    for g in groups {
        let m = mean(g);
        ss_between += F::from_usize_lossy(g.len()) * (m - grand) * (m - grand);
        ss_within += sum_sq_dev(g);
    }
    let df_between = groups.len() - 1;
    let df_within = total - groups.len();
    let (f, p, eta) = if ss_within > F::zero() {
        let f = (ss_between / F::from_usize_lossy(df_between)) / (ss_within / F::from_usize_lossy(df_within));
        let p = f_sf(f, F::from_usize_lossy(df_between), F::from_usize_lossy(df_within));
        (f, p, ss_between / (ss_between + ss_within))
    } else if ss_between > F::zero() {
        (F::infinity(), F::zero(), F::one())
    } else {
        (F::zero(), F::one(), F::zero())
    };
    Ok(AnovaResult {
        f_statistic: f,
        df_between,
        df_within,
        p_value: p,
        eta_squared: eta,
        ss_between,
        ss_within,
    })
}

/// Scores per approach, in first-appearance order.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationSet<F> {
    pub approaches: Vec<(String, Vec<F>)>,
}

impl<F: Scalar> ReplicationSet<F> {
    /// One `approach score` pair per line, split at the last run of
    /// whitespace so approach names may contain spaces; `#` lines are comments.
    pub fn parse(text: &str) -> Result<Self> {
        let mut approaches: Vec<(String, Vec<F>)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: "<replications>".into(),
                line: i + 1,
                message,
            };
            let (name, score) = line
                .rsplit_once(char::is_whitespace)
                .ok_or_else(|| err("expected `approach score`".into()))?;
            let name = name.trim();
            if name.is_empty() {
                return Err(err("empty approach name".into()));
            }
            let score: f64 = score.parse().map_err(|_| err(format!("bad score {score:?}")))?;
            if !score.is_finite() {
                return Err(err("score must be finite".into()));
            }
            match approaches.iter_mut().find(|(n, _)| n == name) {
                Some((_, v)) => v.push(F::lit(score)),
                None => approaches.push((name.to_owned(), vec![F::lit(score)])),
            }
        }
        if approaches.is_empty() {
            return Err(Error::invalid("replication file holds no scores"));
        }
        Ok(ReplicationSet { approaches })
    }
}

fn pct<F: Scalar>(v: F) -> String {
    format!("{:.2}%", v.as_f64() * 100.0)
}

fn full<F: Scalar>(v: F) -> String {
    format!("{}", v.as_f64())
}

/// Descriptive table, pairwise t-tests in both orders, and ANOVA when at least
/// two approaches are present.
pub fn report<F: Scalar>(set: &ReplicationSet<F>, pooled: bool) -> Result<String> {
    let mut out = String::new();
    let _ = writeln!(out, "[descriptive]");
    let _ = writeln!(out, "approach\tn\tmean\tsd\tmin\tmax\tci_low\tci_high");
    let mut summaries = Vec::new();
    for (name, scores) in &set.approaches {
        let s = describe(scores)?;
        let (lo, hi) =
            s.ci.map_or(("absent".to_owned(), "absent".to_owned()), |(l, h)| (pct(l), pct(h)));
        let _ = writeln!(
            out,
            "{name}\t{}\t{}\t{}\t{}\t{}\t{lo}\t{hi}",
            s.n,
            pct(s.mean),
            pct(s.sd),
            pct(s.min),
            pct(s.max)
        );
        summaries.push(s);
    }
    let _ = writeln!(out, "\n[descriptive_full]");
    for ((name, _), s) in set.approaches.iter().zip(&summaries) {
        let ci =
            s.ci.map_or("absent absent".to_owned(), |(l, h)| format!("{} {}", full(l), full(h)));
        let _ = writeln!(
            out,
            "{name}\tmean={} sd={} min={} max={} ci={ci}",
            full(s.mean),
            full(s.sd),
            full(s.min),
            full(s.max)
        );
    }
    let _ = writeln!(out, "\n[five_number]");
    for (name, scores) in &set.approaches {
        let q = five_number(scores);
        let _ = writeln!(
            out,
            "{name}\t{}",
            q.iter().map(|&v| full(v)).collect::<Vec<_>>().join(" ")
        );
    }
    if set.approaches.len() >= 2 {
        let _ = writeln!(out, "\n[t_tests {}]", if pooled { "pooled" } else { "welch" });
        let _ = writeln!(
            out,
            "first\tsecond\tmean_difference\tt_statistic\tdf\tp_value\tsignificant"
        );
        for (i, (a_name, a)) in set.approaches.iter().enumerate() {
            for (j, (b_name, b)) in set.approaches.iter().enumerate() {
                if i == j {
                    continue;
                }
                if a.len() < 2 || b.len() < 2 {
                    let _ = writeln!(out, "{a_name}\t{b_name}\tabsent (needs two scores per approach)");
                    continue;
                }
                let t = t_test(a, b, pooled)?;
                let _ = writeln!(
                    out,
                    "{a_name}\t{b_name}\t{}\t{}\t{}\t{}\t{}",
                    pct(t.mean_difference),
                    full(t.t_statistic),
                    full(t.df),
                    full(t.p_value),
                    if t.significant { "yes" } else { "no" }
                );
            }
        }
        let groups: Vec<Vec<F>> = set.approaches.iter().map(|(_, v)| v.clone()).collect();
        let _ = writeln!(out, "\n[anova]");
        match anova(&groups) {
            Ok(a) => {
                let _ = writeln!(
                    out,
                    "f_statistic = {}\ndf_between = {}\ndf_within = {}\np_value = {}\neta_squared = {}\nss_between = {}\nss_within = {}",
                    full(a.f_statistic),
                    a.df_between,
                    a.df_within,
                    full(a.p_value),
                    full(a.eta_squared),
                    full(a.ss_between),
                    full(a.ss_within)
                );
            }
            Err(e) => {
                let _ = writeln!(out, "absent ({e})");
            }
        }
    }
    Ok(out)
}

/// Minimum, lower quartile, median, upper quartile, maximum (linear
/// interpolation between order statistics).
pub fn five_number<F: Scalar>(scores: &[F]) -> [F; 5] {
    let mut s = scores.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    let q = |p: f64| -> F {
        let pos = p * (s.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = F::lit(pos - lo as f64);
        s[lo] + frac * (s[hi] - s[lo])
    };
    [s[0], q(0.25), q(0.5), q(0.75), s[s.len() - 1]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_describe() {
        let s = describe(&[1.0f64, 2.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.sd, s.min, s.max), (2.0, 1.0, 1.0, 3.0));
        let s = describe(&[0.4f64; 4]).unwrap();
        assert_eq!(s.sd, 0.0);
        let (lo, hi) = s.ci.unwrap();
        assert!((lo - 0.4).abs() < 1e-15 && (hi - 0.4).abs() < 1e-15);
        assert!(describe(&[0.5f64]).unwrap().ci.is_none());
    }

    #[test]
    fn t_quantile_known_value() {
        assert!((t_quantile(0.975f64, 4.0).unwrap() - 2.776_445_105_2).abs() < 1e-8);
        assert!((t_quantile(0.975f64, 1.0).unwrap() - 12.706_204_736).abs() < 1e-7);
    }

    #[test]
    fn t_test_examples() {
        let r = t_test(&[1.0f64, 2.0, 3.0], &[1.0, 2.0, 3.0], false).unwrap();
        assert_eq!((r.mean_difference, r.t_statistic, r.p_value), (0.0, 0.0, 1.0));
        let r = t_test(&[1.0f64, 2.0, 3.0, 4.0, 5.0], &[2.0, 3.0, 4.0, 5.0, 6.0], false).unwrap();
        assert_eq!(r.mean_difference, -1.0);
        assert!((r.t_statistic + 1.0).abs() < 1e-12);
        assert!((r.p_value - 0.346_593_507).abs() < 1e-6, "{}", r.p_value);
        let r = t_test(&[0.287f64; 5], &[0.287; 5], false).unwrap();
        assert_eq!((r.t_statistic, r.p_value), (0.0, 1.0));
        let r = t_test(&[0.287f64; 5], &[0.5; 5], false).unwrap();
        assert_eq!((r.t_statistic, r.p_value), (f64::NEG_INFINITY, 0.0));
        assert!(r.significant);
    }

    #[test]
    fn anova_examples() {
        let a = anova(&[vec![0.0f64, 0.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!((a.eta_squared, a.p_value), (1.0, 0.0));
        assert!(a.f_statistic.is_infinite());
        let a = anova(&[vec![0.3f64, 0.3], vec![0.3, 0.3]]).unwrap();
        assert_eq!((a.f_statistic, a.eta_squared), (0.0, 0.0));
        let a = anova(&[vec![1.0f64, 2.0, 3.0], vec![2.0, 3.0, 4.0], vec![3.0, 4.0, 5.0]]).unwrap();
        assert!((a.f_statistic - 3.0).abs() < 1e-12 && (a.eta_squared - 0.5).abs() < 1e-12);
    }

    #[test]
    fn replication_file() {
        let set =
            ReplicationSet::<f64>::parse("# header\nKD model 0.82\nKD model 0.83\nBART 0.28\nBART 0.28\n").unwrap();
        assert_eq!(set.approaches.len(), 2);
        assert_eq!(set.approaches[0].0, "KD model");
        let text = report(&set, false).unwrap();
        assert!(text.contains("[anova]") && text.contains("eta_squared"));
        assert!(ReplicationSet::<f64>::parse("x notanumber\n")
            .unwrap_err()
            .to_string()
            .contains("line 1"));
    }
}

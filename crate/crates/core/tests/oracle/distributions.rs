//! Direct numerical integration of the t and F densities.

// Shared between test targets; each uses a subset.
#![allow(dead_code)]

use mltc::seed::rng_for;
use mltc::stats::{f_sf, t_cdf, t_two_sided_p};
use rand::Rng;
use statrs::function::gamma::ln_gamma;

pub const TOL: f64 = 1e-6;
const STEPS: usize = 20_000;

/// Composite Simpson rule on `[a, b]`.
fn simpson(g: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let h = (b - a) / STEPS as f64;
    let mut s = g(a) + g(b);
    for i in 1..STEPS {
        s += g(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn t_pdf(x: f64, v: f64) -> f64 {
    let ln_c = ln_gamma((v + 1.0) / 2.0) - ln_gamma(v / 2.0) - 0.5 * (v * std::f64::consts::PI).ln();
    (ln_c - (v + 1.0) / 2.0 * (1.0 + x * x / v).ln()).exp()
}

fn f_pdf(x: f64, d1: f64, d2: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let ln_b = ln_gamma(d1 / 2.0) + ln_gamma(d2 / 2.0) - ln_gamma((d1 + d2) / 2.0);
    let ln = 0.5 * d1 * (d1 / d2).ln() + (0.5 * d1 - 1.0) * x.ln() - 0.5 * (d1 + d2) * (1.0 + d1 * x / d2).ln() - ln_b;
    ln.exp()
}

/// Two-sided p from the symmetric density: `1 - 2 ∫_0^|t| pdf`.
pub fn oracle_t_p(t: f64, v: f64) -> f64 {
    1.0 - 2.0 * simpson(|x| t_pdf(x, v), 0.0, t.abs())
}

/// Survival function; `x = u²` removes the density's singularity at zero.
/// The lower endpoint is nudged off zero so the integrand takes its limit.
pub fn oracle_f_sf(x: f64, d1: f64, d2: f64) -> f64 {
    1.0 - simpson(|u| 2.0 * u * f_pdf(u * u, d1, d2), 1e-150, x.sqrt())
}

/// Largest gap between the two-sided t p-value (and the CDF) and the
/// integrated density over a seeded grid of 200 points.
pub fn t_grid_error() -> f64 {
    let mut rng = rng_for(0x7d157, &[]);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let v = rng.gen_range(1.0..60.0);
        let t: f64 = rng.gen_range(-8.0..8.0);
        let o = oracle_t_p(t, v);
        let cdf_oracle = if t >= 0.0 { 1.0 - o / 2.0 } else { o / 2.0 };
        worst = worst
            .max((t_two_sided_p(t, v) - o).abs())
            .max((t_cdf(t, v) - cdf_oracle).abs());
    }
    worst
}

/// Largest gap between the F survival function and the integrated density
/// over a seeded grid of 200 points.
pub fn f_grid_error() -> f64 {
    let mut rng = rng_for(0xfd157, &[]);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let d1 = f64::from(rng.gen_range(1..=10));
        let d2 = f64::from(rng.gen_range(1..=60));
        let x: f64 = rng.gen_range(0.01..12.0);
        worst = worst.max((f_sf(x, d1, d2) - oracle_f_sf(x, d1, d2)).abs());
    }
    worst
}

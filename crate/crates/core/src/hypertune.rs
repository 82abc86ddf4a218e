//! Particle swarm search over a box-constrained, mixed integer/continuous
//! hyperparameter space.
//!
//! Each particle owns a ChaCha stream keyed by `(seed, particle index)`, and
//! all bookkeeping after the parallel evaluation phase runs serially in
//! particle order, so results are identical for every worker count.

use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::distill::DistillConfig;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DimKind {
    Continuous,
    Integer,
}

impl DimKind {
    pub fn name(self) -> &'static str {
        match self {
            DimKind::Continuous => "continuous",
            DimKind::Integer => "integer",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dimension<F> {
    pub name: String,
    pub lower: F,
    pub upper: F,
    pub kind: DimKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperSpace<F> {
    dims: Vec<Dimension<F>>,
}

/// Names `decode` looks up to build a [`DistillConfig`].
pub const CONFIG_DIMENSIONS: [&str; 6] = [
    "temperature",
    "alpha",
    "learning_rate",
    "batch_size",
    "epochs",
    "max_length",
];

impl<F: Scalar> HyperSpace<F> {
    pub fn new(dims: Vec<Dimension<F>>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::invalid("hyperparameter space has no dimensions"));
        }
        for (i, d) in dims.iter().enumerate() {
            if d.name.is_empty() || d.name.contains(char::is_whitespace) {
                return Err(Error::invalid(format!("bad dimension name {:?}", d.name)));
            }
            if dims[..i].iter().any(|e| e.name == d.name) {
                return Err(Error::invalid(format!("duplicate dimension {:?}", d.name)));
            }
            if !(d.lower.is_finite() && d.upper.is_finite() && d.lower < d.upper) {
                return Err(Error::invalid(format!(
                    "dimension {} needs finite lower < upper, got [{}, {}]",
                    d.name, d.lower, d.upper
                )));
            }
        }
        Ok(HyperSpace { dims })
    }

    /// Temperature [2, 4], alpha [0.1, 0.9], learning rate [1e-4, 1e-3],
    /// batch size [8, 64], epochs [3, 5], max length [128, 512].
    pub fn standard() -> Self {
        let dim = |name: &str, lower: f64, upper: f64, kind| Dimension {
            name: name.to_owned(),
            lower: F::lit(lower),
            upper: F::lit(upper),
            kind,
        };
        HyperSpace {
            dims: vec![
                dim("temperature", 2.0, 4.0, DimKind::Continuous),
                dim("alpha", 0.1, 0.9, DimKind::Continuous),
                dim("learning_rate", 0.0001, 0.001, DimKind::Continuous),
                dim("batch_size", 8.0, 64.0, DimKind::Integer),
                dim("epochs", 3.0, 5.0, DimKind::Integer),
                dim("max_length", 128.0, 512.0, DimKind::Integer),
            ],
        }
    }

    /// The same box in every one of `n` continuous dimensions named `x0, x1, ...`.
    pub fn cube(n: usize, lower: F, upper: F) -> Result<Self> {
        Self::new(
            (0..n)
                .map(|i| Dimension {
                    name: format!("x{i}"),
                    lower,
                    upper,
                    kind: DimKind::Continuous,
                })
                .collect(),
        )
    }

    pub fn dims(&self) -> &[Dimension<F>] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    /// One `name lower upper kind` line per dimension; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut dims = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: "<space>".into(),
                line: i + 1,
                message,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(err(format!(
                    "expected `name lower upper kind`, got {} fields",
                    fields.len()
                )));
            }
            let num = |s: &str| -> Result<F> {
                s.parse::<f64>()
                    .map(F::lit)
                    .map_err(|_| err(format!("bad number {s:?}")))
            };
            let kind = match fields[3] {
                "continuous" => DimKind::Continuous,
                "integer" => DimKind::Integer,
                other => return Err(err(format!("kind must be continuous or integer, got {other:?}"))),
            };
            dims.push(Dimension {
                name: fields[0].to_owned(),
                lower: num(fields[1])?,
                upper: num(fields[2])?,
                kind,
            });
        }
        Self::new(dims)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for d in &self.dims {
            let _ = writeln!(out, "{} {} {} {}", d.name, d.lower, d.upper, d.kind.name());
        }
        out
    }

    /// Per-dimension decoded values: continuous passed through, integers
    /// rounded half away from zero and clamped.
    pub fn decode_values(&self, position: &[F]) -> Result<Vec<F>> {
        self.check_len(position.len())?;
        Ok(self
            .dims
            .iter()
            .zip(position)
            .map(|(d, &x)| match d.kind {
                DimKind::Continuous => x,
                DimKind::Integer => x.round().max(d.lower.ceil()).min(d.upper.floor()),
            })
            .collect())
    }

    /// `name=value` pairs of the decoded position.
    pub fn describe(&self, position: &[F]) -> Result<String> {
        let values = self.decode_values(position)?;
        Ok(self
            .dims
            .iter()
            .zip(values)
            .map(|(d, v)| match d.kind {
                DimKind::Continuous => format!("{}={}", d.name, v),
                DimKind::Integer => format!("{}={}", d.name, v.as_f64() as i64),
            })
            .collect::<Vec<_>>()
            .join(" "))
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.dims.len() {
            return Err(Error::DimensionMismatch {
                expected: self.dims.len(),
                actual: n,
            });
        }
        Ok(())
    }
}

/// Maps a position onto the six distillation hyperparameters by dimension name.
pub fn decode<F: Scalar>(position: &[F], space: &HyperSpace<F>) -> Result<DistillConfig<F>> {
    let values = space.decode_values(position)?;
    let get = |name: &str| -> Result<F> {
        space
            .dims
            .iter()
            .position(|d| d.name == name)
            .map(|i| values[i])
            .ok_or_else(|| Error::invalid(format!("space lacks dimension {name:?}")))
    };
    let count = |name: &str| -> Result<usize> {
        let v = get(name)?.round();
        if v < F::one() {
            return Err(Error::invalid(format!("{name} decodes to {v}, need >= 1")));
        }
        Ok(v.as_f64() as usize)
    };
    let cfg = DistillConfig {
        temperature: get("temperature")?,
        alpha: get("alpha")?,
        learning_rate: get("learning_rate")?,
        batch_size: count("batch_size")?,
        epochs: count("epochs")?,
        max_length: count("max_length")?,
    };
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwarmConfig<F> {
    pub particles: usize,
    pub inertia: F,
    pub cognitive: F,
    pub social: F,
    pub max_iters: usize,
    /// Minimum gbest improvement that resets the patience counter.
    pub threshold: F,
    /// Interpret `threshold` relative to `|prev_best|` instead of absolutely.
    pub relative_threshold: bool,
    pub patience: usize,
    pub seed: u64,
    pub parallelism: usize,
}

impl<F: Scalar> SwarmConfig<F> {
    /// Ten particles, ten iterations, w = 0.7, c1 = c2 = 1.5, threshold
    /// 0.001 (absolute), patience 1.
    pub fn standard(seed: u64) -> Self {
        SwarmConfig {
            particles: 10,
            inertia: F::lit(0.7),
            cognitive: F::lit(1.5),
            social: F::lit(1.5),
            max_iters: 10,
            threshold: F::lit(0.001),
            relative_threshold: false,
            patience: 1,
            seed,
            parallelism: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::invalid("swarm needs at least one particle"));
        }
        for (name, v) in [
            ("inertia", self.inertia),
            ("cognitive", self.cognitive),
            ("social", self.social),
        ] {
            if !(v >= F::zero()) || !v.is_finite() {
                return Err(Error::invalid(format!(
                    "{name} weight must be finite and >= 0, got {v}"
                )));
            }
        }
        if self.patience == 0 {
            return Err(Error::invalid("patience must be >= 1"));
        }
        if self.parallelism == 0 {
            return Err(Error::invalid("parallelism must be >= 1"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be >= 1"));
        }
        if !(self.threshold >= F::zero()) || !self.threshold.is_finite() {
            return Err(Error::invalid("threshold must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle<F> {
    pub position: Vec<F>,
    pub velocity: Vec<F>,
    pub pbest_pos: Vec<F>,
    pub pbest_score: F,
    rng: ChaCha8Rng,
}

impl<F: Scalar> Particle<F> {
    /// Draws `r1`, `r2` from this particle's stream and applies the update.
    pub fn velocity_update(&mut self, gbest_pos: Option<&[F]>, cfg: &SwarmConfig<F>) {
        let n = self.position.len();
        let r1: Vec<F> = (0..n).map(|_| F::lit(self.rng.gen::<f64>())).collect();
        let r2: Vec<F> = (0..n).map(|_| F::lit(self.rng.gen::<f64>())).collect();
        velocity_update_with(self, gbest_pos, cfg, &r1, &r2);
    }
}

/// `v ← w·v + c1·r1·(pbest − x) + c2·r2·(gbest − x)`, then `x ← x + v`; no
/// clamping. Without a global best the social term vanishes.
pub fn velocity_update_with<F: Scalar>(
    p: &mut Particle<F>,
    gbest_pos: Option<&[F]>,
    cfg: &SwarmConfig<F>,
    r1: &[F],
    r2: &[F],
) {
    for d in 0..p.position.len() {
        let x = p.position[d];
        let g = gbest_pos.map_or(x, |g| g[d]);
        p.velocity[d] =
            cfg.inertia * p.velocity[d] + cfg.cognitive * r1[d] * (p.pbest_pos[d] - x) + cfg.social * r2[d] * (g - x);
        p.position[d] = x + p.velocity[d];
    }
}

/// Clamps every coordinate into its bounds, zeroing the velocity component of
/// each clamped coordinate.
pub fn apply_constraints<F: Scalar>(p: &mut Particle<F>, space: &HyperSpace<F>) {
    for (d, dim) in space.dims.iter().enumerate() {
        let x = p.position[d];
        let clamped = x.max(dim.lower).min(dim.upper);
        if clamped != x {
            p.position[d] = clamped;
            p.velocity[d] = F::zero();
        }
    }
}

/// Position-only clamp.
pub fn clamp_position<F: Scalar>(position: &[F], space: &HyperSpace<F>) -> Vec<F> {
    position
        .iter()
        .zip(&space.dims)
        .map(|(&x, d)| x.max(d.lower).min(d.upper))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState<F> {
    pub particles: Vec<Particle<F>>,
    pub gbest_pos: Option<Vec<F>>,
    pub gbest_score: F,
    pub prev_best: F,
    pub no_improv_count: usize,
    pub iteration: usize,
}

pub fn init_swarm<F: Scalar>(space: &HyperSpace<F>, cfg: &SwarmConfig<F>) -> Result<SwarmState<F>> {
    cfg.validate()?;
    let particles = (0..cfg.particles)
        .map(|i| {
            let mut rng = rng_for(cfg.seed, &[i as u64]);
            let position: Vec<F> = space
                .dims
                .iter()
                .map(|d| {
                    let u = F::lit(rng.gen::<f64>());
                    (d.lower + u * (d.upper - d.lower)).max(d.lower).min(d.upper)
                })
                .collect();
            let velocity: Vec<F> = space
                .dims
                .iter()
                .map(|d| {
                    let half = (d.upper - d.lower) / F::lit(2.0);
                    let u = F::lit(rng.gen::<f64>());
                    -half + u * (half + half)
                })
                .collect();
            Particle {
                pbest_pos: position.clone(),
                position,
                velocity,
                pbest_score: F::neg_infinity(),
                rng,
            }
        })
        .collect();
    Ok(SwarmState {
        particles,
        gbest_pos: None,
        gbest_score: F::neg_infinity(),
        prev_best: F::neg_infinity(),
        no_improv_count: 0,
        iteration: 0,
    })
}

/// Records one completed iteration: counts an insufficient improvement
/// (including an undefined one) or resets the counter, advances `prev_best`,
/// and reports whether patience is exhausted.
pub fn early_stop_check<F: Scalar>(state: &mut SwarmState<F>, threshold: F, patience: usize, relative: bool) -> bool {
    let improvement = state.gbest_score - state.prev_best;
    let needed = if relative && state.prev_best.is_finite() {
        threshold * state.prev_best.abs()
    } else {
        threshold
    };
    // NaN (no finite score yet) never counts as progress.
    if improvement >= needed {
        state.no_improv_count = 0;
    } else {
        state.no_improv_count += 1;
    }
    state.prev_best = state.gbest_score;
    state.no_improv_count >= patience
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord<F> {
    pub iteration: usize,
    pub gbest_score: F,
    pub gbest_pos: Option<Vec<F>>,
    /// Particles whose objective returned a non-finite value this iteration.
    pub non_finite: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsoResult<F> {
    pub best_position: Option<Vec<F>>,
    pub best_score: F,
    pub trace: Vec<TraceRecord<F>>,
    pub stopped_early: bool,
}

/// Maximizes `objective` over `space`.
pub fn pso_optimize<F, O>(space: &HyperSpace<F>, objective: O, cfg: &SwarmConfig<F>) -> Result<PsoResult<F>>
where
    F: Scalar,
    O: Fn(&[F]) -> F + Sync,
{
    let mut state = init_swarm(space, cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| Error::Invariant(format!("thread pool: {e}")))?;
    let mut trace = Vec::new();
    let mut stopped_early = false;
    for iteration in 1..=cfg.max_iters {
        let scores: Vec<F> = pool.install(|| state.particles.par_iter().map(|p| objective(&p.position)).collect());
        let mut non_finite = Vec::new();
        for (i, (p, &raw)) in state.particles.iter_mut().zip(&scores).enumerate() {
            let score = if raw.is_finite() {
                raw
            } else {
                non_finite.push(i);
                F::neg_infinity()
            };
            if score > p.pbest_score {
                p.pbest_score = score;
                p.pbest_pos = p.position.clone();
            }
            if score > state.gbest_score {
                state.gbest_score = score;
                state.gbest_pos = Some(p.position.clone());
            }
        }
        for p in &mut state.particles {
            p.velocity_update(state.gbest_pos.as_deref(), cfg);
            apply_constraints(p, space);
        }
        state.iteration = iteration;
        trace.push(TraceRecord {
            iteration,
            gbest_score: state.gbest_score,
            gbest_pos: state.gbest_pos.clone(),
            non_finite,
        });
        if early_stop_check(&mut state, cfg.threshold, cfg.patience, cfg.relative_threshold) {
            stopped_early = iteration < cfg.max_iters;
            break;
        }
    }
    Ok(PsoResult {
        best_position: state.gbest_pos,
        best_score: state.gbest_score,
        trace,
        stopped_early,
    })
}

/// Tab-separated trace: iteration, gbest score, non-finite particle indices
/// (`-` when none), decoded gbest configuration.
pub fn trace_to_text<F: Scalar>(result: &PsoResult<F>, space: &HyperSpace<F>) -> Result<String> {
    let mut out = String::from("#iteration\tgbest_score\tnon_finite\tgbest_config\n");
    for r in &result.trace {
        let flags = if r.non_finite.is_empty() {
            "-".to_owned()
        } else {
            r.non_finite.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
        };
        let config = match &r.gbest_pos {
            Some(p) => space.describe(p)?,
            None => "-".to_owned(),
        };
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            r.iteration,
            r.gbest_score.as_f64(),
            flags,
            config
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn particle(x: f64, v: f64, pbest: f64) -> Particle<f64> {
        Particle {
            position: vec![x],
            velocity: vec![v],
            pbest_pos: vec![pbest],
            pbest_score: 0.0,
            rng: rng_for(0, &[]),
        }
    }

    #[test]
    fn hand_evaluated_update() {
        let cfg = SwarmConfig::<f64>::standard(0);
        let mut p = particle(0.0, 1.0, 2.0);
        velocity_update_with(&mut p, Some(&[4.0]), &cfg, &[1.0], &[1.0]);
        assert!((p.velocity[0] - 9.7).abs() < 1e-12);
        assert!((p.position[0] - 9.7).abs() < 1e-12);

        let mut p = particle(3.0, 0.0, 3.0);
        velocity_update_with(&mut p, Some(&[3.0]), &cfg, &[0.4], &[0.9]);
        assert_eq!((p.velocity[0], p.position[0]), (0.0, 3.0));

        let inertia_only = SwarmConfig {
            cognitive: 0.0,
            social: 0.0,
            ..cfg
        };
        let mut p = particle(1.0, 2.0, -5.0);
        velocity_update_with(&mut p, Some(&[8.0]), &inertia_only, &[0.3], &[0.6]);
        assert_eq!(p.velocity[0], 0.7 * 2.0);
    }

    #[test]
    fn constraints_clamp_and_zero_velocity() {
        let space = HyperSpace::new(vec![
            Dimension {
                name: "a".into(),
                lower: 0.0,
                upper: 5.0,
                kind: DimKind::Continuous,
            },
            Dimension {
                name: "b".into(),
                lower: 0.1,
                upper: 1.0,
                kind: DimKind::Continuous,
            },
        ])
        .unwrap();
        let mut p = particle(0.0, 0.0, 0.0);
        p.position = vec![10.0, -3.0];
        p.velocity = vec![1.0, -1.0];
        apply_constraints(&mut p, &space);
        assert_eq!(p.position, vec![5.0, 0.1]);
        assert_eq!(p.velocity, vec![0.0, 0.0]);
        p.position = vec![2.0, 0.5];
        p.velocity = vec![1.0, 1.0];
        apply_constraints(&mut p, &space);
        assert_eq!(
            (p.position.clone(), p.velocity.clone()),
            (vec![2.0, 0.5], vec![1.0, 1.0])
        );
    }

    #[test]
    fn decode_rounding() {
        let space = HyperSpace::<f64>::standard();
        let cfg = decode(&[2.79, 0.1, 0.0005, 8.4, 4.5, 300.0], &space).unwrap();
        assert_eq!(
            (cfg.temperature, cfg.batch_size, cfg.epochs, cfg.max_length),
            (2.79, 8, 5, 300)
        );
        assert!(decode(&[2.0, 0.1], &space).is_err());
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let space = HyperSpace::new(vec![Dimension {
            name: "tiny".into(),
            lower: 0.0,
            upper: 1e-9,
            kind: DimKind::Continuous,
        }])
        .unwrap();
        let cfg = SwarmConfig {
            particles: 7,
            ..SwarmConfig::standard(3)
        };
        let a = init_swarm(&space, &cfg).unwrap();
        assert_eq!(a, init_swarm(&space, &cfg).unwrap());
        for p in &a.particles {
            assert!(p.position[0] >= 0.0 && p.position[0] <= 1e-9);
            assert_eq!(p.pbest_score, f64::NEG_INFINITY);
        }
    }

    #[test]
    fn early_stop_counting() {
        let space = HyperSpace::<f64>::cube(1, 0.0, 1.0).unwrap();
        let cfg = SwarmConfig::standard(0);
        let mut s = init_swarm(&space, &cfg).unwrap();
        s.gbest_score = 0.5;
        assert!(!early_stop_check(&mut s, 0.001, 1, false));
        s.gbest_score = 0.5005;
        assert!(early_stop_check(&mut s, 0.001, 1, false));

        let mut s = init_swarm(&space, &cfg).unwrap();
        s.gbest_score = 0.2;
        s.prev_best = 0.2;
        let stops: Vec<bool> = (0..3).map(|_| early_stop_check(&mut s, 0.001, 3, false)).collect();
        assert_eq!(stops, vec![false, false, true]);
        s.gbest_score = 0.3;
        assert!(!early_stop_check(&mut s, 0.001, 3, false));
        assert_eq!(s.no_improv_count, 0);
    }

    #[test]
    fn constant_objective_stops_after_patience() {
        let space = HyperSpace::<f64>::cube(2, -1.0, 1.0).unwrap();
        let cfg = SwarmConfig {
            patience: 2,
            max_iters: 50,
            ..SwarmConfig::standard(1)
        };
        let r = pso_optimize(&space, |_| 0.25, &cfg).unwrap();
        // Iteration 1 improves from -inf; iterations 2 and 3 exhaust patience.
        assert_eq!(r.trace.len(), 3);
        assert!(r.stopped_early);
    }

    #[test]
    fn non_finite_scores_are_flagged() {
        let space = HyperSpace::<f64>::cube(1, -1.0, 1.0).unwrap();
        let cfg = SwarmConfig {
            max_iters: 2,
            ..SwarmConfig::standard(1)
        };
        let r = pso_optimize(&space, |x| if x[0] > 0.0 { f64::NAN } else { x[0] }, &cfg).unwrap();
        assert!(!r.trace[0].non_finite.is_empty());
        assert!(r.best_score.is_finite());
        let text = trace_to_text(&r, &space).unwrap();
        assert_eq!(text.lines().count(), 1 + r.trace.len());
    }

    #[test]
    fn space_file_round_trip() {
        let space = HyperSpace::<f64>::standard();
        assert_eq!(HyperSpace::parse(&space.to_text()).unwrap(), space);
        assert!(HyperSpace::<f64>::parse("a 1 0 continuous\n").is_err());
        let err = HyperSpace::<f64>::parse("# c\na 0 1 discrete\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}

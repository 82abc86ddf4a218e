//! Central finite differences over seeded small models, compared with the
//! analytic gradients of every training objective.

// Shared between test targets; each uses a subset.
#![allow(dead_code)]

use mltc::corpus::SparseVec;
use mltc::distill::{accumulate_gradient, Objective, Projection};
use mltc::model::{init_model, Activation, EncoderSpec, Gradients, ModelState, Role};
use mltc::seed::rng_for;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-5;
pub const MAX_REL_ERR: f64 = 1e-4;
/// Denominator floor so that gradients that are zero up to rounding compare
/// on an absolute scale.
pub const FLOOR: f64 = 1e-6;
pub const TRIALS: u64 = 100;

struct Case {
    model: ModelState<f64>,
    x: SparseVec<f64>,
    label: usize,
    teacher_logits: [f64; 2],
    teacher_hidden: Vec<f64>,
    projection: Projection<f64>,
    target: bool,
    temperature: f64,
    alpha: f64,
    beta: f64,
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

fn case(trial: u64) -> Case {
    let mut rng = rng_for(0x6ead, &[trial]);
    let input_dim = rng.gen_range(2..=16);
    let depth = rng.gen_range(1..=2);
    let hidden_sizes: Vec<usize> = (0..depth).map(|_| rng.gen_range(1..=8)).collect();
    let spec = EncoderSpec {
        input_dim,
        hidden_sizes,
        activation: Activation::Tanh,
        role: Role::Student,
    };
    let num_labels = rng.gen_range(1..=3);
    let mut model: ModelState<f64> = init_model(&spec, num_labels, trial).unwrap();
    let params = uniform(&mut rng, model.parameter_count(), 1.0);
    model.set_flat_parameters(&params).unwrap();
    let dense: Vec<f64> = (0..input_dim)
        .map(|_| {
            if rng.gen_bool(0.6) {
                rng.gen_range(-1.0..1.0)
            } else {
                0.0
            }
        })
        .collect();
    let teacher_width = rng.gen_range(1..=8);
    let mut projection = Projection::init(teacher_width, spec.output_width(), trial);
    projection.weights = uniform(&mut rng, projection.weights.len(), 1.0);
    Case {
        model,
        x: SparseVec::from_dense(&dense),
        label: rng.gen_range(0..num_labels),
        teacher_logits: [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)],
        teacher_hidden: uniform(&mut rng, teacher_width, 1.0),
        projection,
        target: rng.gen_bool(0.5),
        temperature: rng.gen_range(0.5..5.0),
        alpha: rng.gen_range(0.0..1.0),
        beta: rng.gen_range(0.0..1.0),
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Kind {
    Hard,
    Soft,
    Kd,
    Contrastive,
    KdContrastive,
}

fn objective<'a>(c: &'a Case, projection: &'a Projection<f64>, kind: Kind) -> Objective<'a, f64> {
    match kind {
        Kind::Hard => Objective::Hard { target: c.target },
        Kind::Soft => Objective::Soft {
            teacher_logits: c.teacher_logits,
            temperature: c.temperature,
        },
        Kind::Kd => Objective::Kd {
            teacher_logits: c.teacher_logits,
            target: c.target,
            temperature: c.temperature,
            alpha: c.alpha,
        },
        Kind::Contrastive => Objective::Contrastive {
            teacher_hidden: &c.teacher_hidden,
            projection,
        },
        Kind::KdContrastive => Objective::KdContrastive {
            teacher_logits: c.teacher_logits,
            teacher_hidden: &c.teacher_hidden,
            target: c.target,
            temperature: c.temperature,
            alpha: c.alpha,
            beta: c.beta,
            projection,
        },
    }
}

fn loss(model: &ModelState<f64>, c: &Case, projection: &Projection<f64>, kind: Kind) -> f64 {
    let mut g = Gradients::zeros(model);
    accumulate_gradient(model, &c.x, c.label, objective(c, projection, kind), &mut g, None).unwrap()
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FLOOR)
}

/// Largest relative error over every model parameter and, for objectives
/// with a contrastive term, every projection weight.
fn check(c: &Case, kind: Kind) -> f64 {
    let mut grads = Gradients::zeros(&c.model);
    let mut pgrad = vec![0.0; c.projection.weights.len()];
    accumulate_gradient(
        &c.model,
        &c.x,
        c.label,
        objective(c, &c.projection, kind),
        &mut grads,
        Some(&mut pgrad),
    )
    .unwrap();
    let analytic = grads.flatten(&c.model);
    let base = c.model.flat_parameters();
    let mut worst = 0.0f64;
    let mut probe = c.model.clone();
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + EPS;
        probe.set_flat_parameters(&p).unwrap();
        let up = loss(&probe, c, &c.projection, kind);
        p[i] = base[i] - EPS;
        probe.set_flat_parameters(&p).unwrap();
        let down = loss(&probe, c, &c.projection, kind);
        worst = worst.max(rel_err(analytic[i], (up - down) / (2.0 * EPS)));
    }
    if matches!(kind, Kind::Contrastive | Kind::KdContrastive) {
        for (i, &g) in pgrad.iter().enumerate() {
            let mut proj = c.projection.clone();
            proj.weights[i] += EPS;
            let up = loss(&c.model, c, &proj, kind);
            proj.weights[i] -= 2.0 * EPS;
            let down = loss(&c.model, c, &proj, kind);
            worst = worst.max(rel_err(g, (up - down) / (2.0 * EPS)));
        }
    }
    worst
}

pub const ALL: [Kind; 5] = [Kind::Hard, Kind::Soft, Kind::Kd, Kind::Contrastive, Kind::KdContrastive];

/// Worst relative error over `trials` seeded cases.
pub fn worst_error(kind: Kind, trials: u64) -> f64 {
    (0..trials).map(|t| check(&case(t), kind)).fold(0.0, f64::max)
}

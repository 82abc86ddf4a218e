//! Distillation losses and their derivatives.
//!
//! `soft_loss` is `T^2 * KL(teacher || student)` on temperature-softened
//! two-class distributions, `hard_loss` is cross-entropy against the true bit,
//! and `kd_loss` mixes them with weight `alpha` on the soft term.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DistillConfig;
use crate::corpus::SparseVec;
use crate::error::{Error, Result};
use crate::model::{log_softmax_t, softmax_t, Dense, Gradients, ModelState};
use crate::scalar::Scalar;

/// Below this norm a hidden vector is treated as zero by the contrastive loss.
pub const ZERO_NORM: f64 = 1e-12;

pub fn soft_loss<F: Scalar>(z_s: [F; 2], z_t: [F; 2], temperature: F) -> Result<F> {
    soft_loss_grad(z_s, z_t, temperature).map(|(l, _)| l)
}

/// Soft loss and its derivative with respect to the student logits,
/// `T * (sigma_s - sigma_t)`.
pub fn soft_loss_grad<F: Scalar>(z_s: [F; 2], z_t: [F; 2], temperature: F) -> Result<(F, [F; 2])> {
    let log_s = log_softmax_t(z_s, temperature)?;
    let log_t = log_softmax_t(z_t, temperature)?;
    let sigma_t = softmax_t(z_t, temperature)?;
    let sigma_s = softmax_t(z_s, temperature)?;
    let mut kl = F::zero();
    for i in 0..2 {
        if sigma_t[i] > F::zero() {
            kl += sigma_t[i] * (log_t[i] - log_s[i]);
        }
    }
    // Rounding can leave a tiny negative KL for near-identical inputs.
    let kl = kl.max(F::zero());
    let t2 = temperature * temperature;
    let grad = [
        temperature * (sigma_s[0] - sigma_t[0]),
        temperature * (sigma_s[1] - sigma_t[1]),
    ];
    Ok((t2 * kl, grad))
}

pub fn hard_loss<F: Scalar>(z_s: [F; 2], target: bool) -> Result<F> {
    hard_loss_grad(z_s, target).map(|(l, _)| l)
}

/// Cross-entropy and its derivative `softmax(z) - onehot(target)`.
pub fn hard_loss_grad<F: Scalar>(z_s: [F; 2], target: bool) -> Result<(F, [F; 2])> {
    let y = usize::from(target);
    let log_p = log_softmax_t(z_s, F::one())?;
    let p = softmax_t(z_s, F::one())?;
    let mut grad = p;
    grad[y] -= F::one();
    Ok((-log_p[y], grad))
}

/// `alpha * soft + (1 - alpha) * hard`.
pub fn kd_loss<F: Scalar>(z_s: [F; 2], z_t: [F; 2], target: bool, cfg: &DistillConfig<F>) -> Result<F> {
    kd_loss_grad(z_s, z_t, target, cfg.temperature, cfg.alpha).map(|(l, _)| l)
}

pub fn kd_loss_grad<F: Scalar>(
    z_s: [F; 2],
    z_t: [F; 2],
    target: bool,
    temperature: F,
    alpha: F,
) -> Result<(F, [F; 2])> {
    if !(alpha >= F::zero() && alpha <= F::one()) {
        return Err(Error::invalid(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let (soft, gs) = soft_loss_grad(z_s, z_t, temperature)?;
    let (hard, gh) = hard_loss_grad(z_s, target)?;
    let beta = F::one() - alpha;
    Ok((
        alpha * soft + beta * hard,
        [alpha * gs[0] + beta * gh[0], alpha * gs[1] + beta * gh[1]],
    ))
}

/// Linear map from the student hidden space into the teacher hidden space.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection<F> {
    /// Teacher hidden width.
    pub rows: usize,
    /// Student hidden width.
    pub cols: usize,
    /// Row-major `rows x cols`.
    pub weights: Vec<F>,
}

impl<F: Scalar> Projection<F> {
    pub fn init(teacher_width: usize, student_width: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d: Dense<F> = Dense::glorot(teacher_width, student_width, &mut rng);
        Projection {
            rows: teacher_width,
            cols: student_width,
            weights: d.weights,
        }
    }

    pub fn apply(&self, h_s: &[F]) -> Result<Vec<F>> {
        if h_s.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                actual: h_s.len(),
            });
        }
        Ok((0..self.rows)
            .map(|r| {
                self.weights[r * self.cols..(r + 1) * self.cols]
                    .iter()
                    .zip(h_s)
                    .map(|(&w, &h)| w * h)
                    .sum()
            })
            .collect())
    }
}

fn norm<F: Scalar>(v: &[F]) -> F {
    v.iter().map(|&x| x * x).sum::<F>().sqrt()
}

pub fn contrastive_loss<F: Scalar>(h_s: &[F], h_t: &[F], projection: &Projection<F>) -> Result<F> {
    contrastive_loss_grad(h_s, h_t, projection).map(|g| g.loss)
}

pub struct ContrastiveGrad<F> {
    pub loss: F,
    /// Derivative with respect to the student hidden vector.
    pub d_student: Vec<F>,
    /// Derivative with respect to the projection weights, row-major.
    pub d_projection: Vec<F>,
}

/// `1 - cos(P h_s, h_t)`; exactly 1 with zero derivatives when either vector
/// has norm below [`ZERO_NORM`].
pub fn contrastive_loss_grad<F: Scalar>(
    h_s: &[F],
    h_t: &[F],
    projection: &Projection<F>,
) -> Result<ContrastiveGrad<F>> {
    if h_t.len() != projection.rows {
        return Err(Error::DimensionMismatch {
            expected: projection.rows,
            actual: h_t.len(),
        });
    }
    let u = projection.apply(h_s)?;
    let nu = norm(&u);
    let nt = norm(h_t);
    let eps = F::lit(ZERO_NORM);
    if nu < eps || nt < eps {
        return Ok(ContrastiveGrad {
            loss: F::one(),
            d_student: vec![F::zero(); h_s.len()],
            d_projection: vec![F::zero(); projection.weights.len()],
        });
    }
    let dot: F = u.iter().zip(h_t).map(|(&a, &b)| a * b).sum();
    let cos = dot / (nu * nt);
    // d(1 - cos)/du = -(h_t / (|u||t|) - cos * u / |u|^2)
    let du: Vec<F> = u
        .iter()
        .zip(h_t)
        .map(|(&ui, &ti)| -(ti / (nu * nt) - cos * ui / (nu * nu)))
        .collect();
    let mut d_student = vec![F::zero(); projection.cols];
    let mut d_projection = vec![F::zero(); projection.weights.len()];
    for r in 0..projection.rows {
        let row = &projection.weights[r * projection.cols..(r + 1) * projection.cols];
        for c in 0..projection.cols {
            d_projection[r * projection.cols + c] = du[r] * h_s[c];
            d_student[c] += row[c] * du[r];
        }
    }
    Ok(ContrastiveGrad {
        loss: F::one() - cos,
        d_student,
        d_projection,
    })
}

/// Per-example training objective for one label head.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a, F> {
    Hard {
        target: bool,
    },
    Soft {
        teacher_logits: [F; 2],
        temperature: F,
    },
    Kd {
        teacher_logits: [F; 2],
        target: bool,
        temperature: F,
        alpha: F,
    },
    Contrastive {
        teacher_hidden: &'a [F],
        projection: &'a Projection<F>,
    },
    /// `(1 - beta) * kd + beta * contrastive`.
    KdContrastive {
        teacher_logits: [F; 2],
        teacher_hidden: &'a [F],
        target: bool,
        temperature: F,
        alpha: F,
        beta: F,
        projection: &'a Projection<F>,
    },
}

/// Evaluates `objective` on one example and accumulates parameter gradients
/// into `grads` (and the projection gradient into `projection_grad` when the
/// objective has a contrastive term).
pub fn accumulate_gradient<F: Scalar>(
    model: &ModelState<F>,
    x: &SparseVec<F>,
    label: usize,
    objective: Objective<'_, F>,
    grads: &mut Gradients<F>,
    projection_grad: Option<&mut [F]>,
) -> Result<F> {
    let trace = model.trace(x)?;
    let logits = model.head_logits(trace.hidden(), label);
    let (loss, dlogits, contrastive) = match objective {
        Objective::Hard { target } => {
            let (l, g) = hard_loss_grad(logits, target)?;
            (l, Some(g), None)
        }
        Objective::Soft {
            teacher_logits,
            temperature,
        } => {
            let (l, g) = soft_loss_grad(logits, teacher_logits, temperature)?;
            (l, Some(g), None)
        }
        Objective::Kd {
            teacher_logits,
            target,
            temperature,
            alpha,
        } => {
            let (l, g) = kd_loss_grad(logits, teacher_logits, target, temperature, alpha)?;
            (l, Some(g), None)
        }
        Objective::Contrastive {
            teacher_hidden,
            projection,
        } => {
            let c = contrastive_loss_grad(trace.hidden(), teacher_hidden, projection)?;
            (c.loss, None, Some((c, F::one())))
        }
        Objective::KdContrastive {
            teacher_logits,
            teacher_hidden,
            target,
            temperature,
            alpha,
            beta,
            projection,
        } => {
            let (l, g) = kd_loss_grad(logits, teacher_logits, target, temperature, alpha)?;
            let c = contrastive_loss_grad(trace.hidden(), teacher_hidden, projection)?;
            let keep = F::one() - beta;
            (
                keep * l + beta * c.loss,
                Some([keep * g[0], keep * g[1]]),
                Some((c, beta)),
            )
        }
    };
    let extra: Option<Vec<F>> = contrastive.map(|(c, w)| {
        if let Some(pg) = projection_grad {
            for (acc, &g) in pg.iter_mut().zip(&c.d_projection) {
                *acc += w * g;
            }
        }
        c.d_student.iter().map(|&g| w * g).collect()
    });
    match dlogits {
        Some(d) => model.backward(x, &trace, label, d, extra.as_deref(), grads),
        None => model.backward_encoder(x, &trace, extra.expect("contrastive term present"), grads),
    }
    Ok(loss)
}

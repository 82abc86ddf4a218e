//! Teacher fine-tuning, response-based distillation, sequential and
//! binary-relevance multi-label training, the contrastive ablation and the
//! classifier-chains baseline.

mod chains;
mod loss;
mod predictions;
mod train;

use crate::error::{Error, Result};
use crate::model::EncoderSpec;
use crate::scalar::Scalar;

pub use chains::{baseline_classifier_chains, predict_chain, train_chain, LogisticModel};
pub use loss::{
    accumulate_gradient, contrastive_loss, contrastive_loss_grad, hard_loss, hard_loss_grad, kd_loss, kd_loss_grad,
    soft_loss, soft_loss_grad, ContrastiveGrad, Objective, Projection, ZERO_NORM,
};
pub use predictions::{Prediction, PredictionSet};
pub use train::{
    distill_binary_relevance, distill_sequential, run_mode, train_student, train_teacher, DistillOutcome, TeacherView,
};

/// Decision threshold: a label is assigned when its probability is at least this.
pub const THRESHOLD: f64 = 0.5;

/// The six tunable hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistillConfig<F> {
    pub temperature: F,
    pub alpha: F,
    pub learning_rate: F,
    pub batch_size: usize,
    pub epochs: usize,
    pub max_length: usize,
}

impl<F: Scalar> DistillConfig<F> {
    /// Hand-picked values: T = 2, alpha = 0.5, lr = 2e-5, batch 16, 128 tokens, 5 epochs.
    pub fn trial_and_error() -> Self {
        DistillConfig {
            temperature: F::lit(2.0),
            alpha: F::lit(0.5),
            learning_rate: F::lit(2e-5),
            batch_size: 16,
            epochs: 5,
            max_length: 128,
        }
    }

    /// Swarm-selected values: T = 2.79, alpha = 0.1, lr = 1e-5, batch 8, 512 tokens, 5 epochs.
    pub fn pso_selected() -> Self {
        DistillConfig {
            temperature: F::lit(2.79),
            alpha: F::lit(0.1),
            learning_rate: F::lit(1e-5),
            batch_size: 8,
            epochs: 5,
            max_length: 512,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > F::zero()) || !self.temperature.is_finite() {
            return Err(Error::invalid(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if !(self.alpha >= F::zero() && self.alpha <= F::one()) {
            return Err(Error::invalid(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.learning_rate >= F::zero()) || !self.learning_rate.is_finite() {
            return Err(Error::invalid(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if self.max_length == 0 {
            return Err(Error::invalid("max length must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    SequentialKd,
    BinaryRelevanceKd,
    SequentialKdContrastive,
    BinaryRelevanceKdContrastive,
    ClassifierChainsBaseline,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::SequentialKd,
        Variant::BinaryRelevanceKd,
        Variant::SequentialKdContrastive,
        Variant::BinaryRelevanceKdContrastive,
        Variant::ClassifierChainsBaseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::SequentialKd => "sequential_kd",
            Variant::BinaryRelevanceKd => "binary_relevance_kd",
            Variant::SequentialKdContrastive => "sequential_kd_contrastive",
            Variant::BinaryRelevanceKdContrastive => "binary_relevance_kd_contrastive",
            Variant::ClassifierChainsBaseline => "classifier_chains_baseline",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown training mode {s:?}")))
    }

    pub fn is_contrastive(self) -> bool {
        matches!(
            self,
            Variant::SequentialKdContrastive | Variant::BinaryRelevanceKdContrastive
        )
    }

    pub fn is_sequential(self) -> bool {
        matches!(self, Variant::SequentialKd | Variant::SequentialKdContrastive)
    }
}

/// Training variant plus the contrastive weight, present exactly for the
/// contrastive variants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingMode<F> {
    variant: Variant,
    contrastive_weight: Option<F>,
}

impl<F: Scalar> TrainingMode<F> {
    pub const DEFAULT_CONTRASTIVE_WEIGHT: f64 = 0.5;

    pub fn new(variant: Variant, contrastive_weight: Option<F>) -> Result<Self> {
        match (variant.is_contrastive(), contrastive_weight) {
            (true, Some(b)) if b >= F::zero() && b <= F::one() => {}
            (true, Some(b)) => {
                return Err(Error::invalid(format!(
                    "contrastive weight must lie in [0, 1], got {b}"
                )))
            }
            (true, None) => return Err(Error::invalid(format!("{} needs a contrastive weight", variant.name()))),
            (false, Some(_)) => {
                return Err(Error::invalid(format!(
                    "{} takes no contrastive weight",
                    variant.name()
                )))
            }
            (false, None) => {}
        }
        Ok(TrainingMode {
            variant,
            contrastive_weight,
        })
    }

    /// Uses the default contrastive weight for contrastive variants.
    pub fn with_defaults(variant: Variant) -> Self {
        let beta = variant
            .is_contrastive()
            .then(|| F::lit(Self::DEFAULT_CONTRASTIVE_WEIGHT));
        TrainingMode {
            variant,
            contrastive_weight: beta,
        }
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn contrastive_weight(&self) -> Option<F> {
        self.contrastive_weight
    }
}

/// Everything a cross-validated training run needs besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct DistillSetup<F> {
    pub teacher: EncoderSpec,
    pub student: EncoderSpec,
    pub config: DistillConfig<F>,
    pub mode: TrainingMode<F>,
    /// Hashed feature dimensionality; must match both encoders' input width.
    pub feature_dim: usize,
    /// Processing order of label indices; vocabulary order when `None`.
    pub label_order: Option<Vec<usize>>,
    /// Multiplier applied to `config.learning_rate` for every gradient step.
    pub lr_scale: F,
    /// Multiplier for the linear classifier-chains baseline, which starts
    /// from zero weights and needs far larger steps than the encoders.
    pub baseline_lr_scale: F,
    pub seed: u64,
    /// When false the teacher is skipped and students train on hard labels only.
    pub teacher_guidance: bool,
}

impl<F: Scalar> DistillSetup<F> {
    /// Default encoders over `feature_dim` inputs.
    pub fn new(feature_dim: usize, config: DistillConfig<F>, mode: TrainingMode<F>, seed: u64) -> Self {
        DistillSetup {
            teacher: EncoderSpec::teacher(feature_dim),
            student: EncoderSpec::student(feature_dim),
            config,
            mode,
            feature_dim,
            label_order: None,
            lr_scale: F::lit(DEFAULT_LR_SCALE),
            baseline_lr_scale: F::lit(DEFAULT_BASELINE_LR_SCALE),
            seed,
            teacher_guidance: true,
        }
    }

    pub fn step_size(&self) -> F {
        self.config.learning_rate * self.lr_scale
    }

    pub(crate) fn order(&self, num_labels: usize) -> Result<Vec<usize>> {
        match &self.label_order {
            None => Ok((0..num_labels).collect()),
            Some(order) => {
                let mut sorted = order.clone();
                sorted.sort_unstable();
                if sorted != (0..num_labels).collect::<Vec<_>>() {
                    return Err(Error::invalid("label order must be a permutation of the vocabulary"));
                }
                Ok(order.clone())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.teacher.validate()?;
        self.student.validate()?;
        if self.feature_dim < 2 {
            return Err(Error::invalid("feature dim must be >= 2"));
        }
        for spec in [&self.teacher, &self.student] {
            if spec.input_dim != self.feature_dim {
                return Err(Error::DimensionMismatch {
                    expected: self.feature_dim,
                    actual: spec.input_dim,
                });
            }
        }
        for (name, v) in [
            ("lr_scale", self.lr_scale),
            ("baseline_lr_scale", self.baseline_lr_scale),
        ] {
            if !(v > F::zero()) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite and > 0")));
            }
        }
        Ok(())
    }
}

/// Step-size multiplier for randomly initialized desk-scale encoders. The
/// preset learning rates are sized for fine-tuning pretrained transformers;
/// plain gradient descent on small random encoders needs steps about four
/// orders of magnitude larger to converge within the preset epoch budget.
pub const DEFAULT_LR_SCALE: f64 = 15000.0;

/// Step-size multiplier for the zero-initialized linear baseline.
pub const DEFAULT_BASELINE_LR_SCALE: f64 = 500000.0;

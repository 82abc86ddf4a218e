//! Mini-batch training loops and the cross-validated distillation drivers.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::chains::baseline_classifier_chains;
use super::loss::{accumulate_gradient, Objective, Projection};
use super::predictions::{Prediction, PredictionSet};
use super::{DistillConfig, DistillSetup, Variant};
use crate::corpus::{Corpus, FoldAssignment, HashedTfidf, SparseVec};
use crate::error::{Error, Result};
use crate::model::{init_model, EncoderSpec, Gradients, ModelState};
use crate::scalar::Scalar;
use crate::seed::{
    derive_seed, rng_for, TAG_PROJECTION_INIT, TAG_STUDENT_INIT, TAG_STUDENT_SHUFFLE, TAG_TEACHER_INIT,
    TAG_TEACHER_SHUFFLE,
};

/// Frozen teacher outputs on a training split, one entry per example.
#[derive(Debug, Clone)]
pub struct TeacherView<F> {
    pub logits: Vec<[F; 2]>,
    /// Present only when a contrastive objective needs hidden states.
    pub hidden: Option<Vec<Vec<F>>>,
}

impl<F: Scalar> TeacherView<F> {
    pub fn compute(teacher: &ModelState<F>, xs: &[SparseVec<F>], label: usize, with_hidden: bool) -> Result<Self> {
        let mut logits = Vec::with_capacity(xs.len());
        let mut hidden = with_hidden.then(|| Vec::with_capacity(xs.len()));
        for x in xs {
            let r = teacher.forward(x, label)?;
            logits.push(r.logits);
            if let Some(h) = hidden.as_mut() {
                h.push(r.hidden);
            }
        }
        Ok(TeacherView { logits, hidden })
    }
}

/// Per-example objective source for [`run_epochs`].
enum Guidance<'a, F> {
    Hard,
    Kd {
        view: &'a TeacherView<F>,
        temperature: F,
        alpha: F,
    },
    KdContrastive {
        view: &'a TeacherView<F>,
        hidden: &'a [Vec<F>],
        temperature: F,
        alpha: F,
        beta: F,
    },
}

impl<'a, F: Scalar> Guidance<'a, F> {
    fn objective<'p>(&self, i: usize, target: bool, projection: Option<&'p Projection<F>>) -> Objective<'p, F>
    where
        'a: 'p,
    {
        match *self {
            Guidance::Hard => Objective::Hard { target },
            Guidance::Kd {
                view,
                temperature,
                alpha,
            } => Objective::Kd {
                teacher_logits: view.logits[i],
                target,
                temperature,
                alpha,
            },
            Guidance::KdContrastive {
                view,
                hidden,
                temperature,
                alpha,
                beta,
            } => Objective::KdContrastive {
                teacher_logits: view.logits[i],
                teacher_hidden: &hidden[i],
                target,
                temperature,
                alpha,
                beta,
                projection: projection.expect("contrastive guidance carries a projection"),
            },
        }
    }
}

fn check_split<F: Scalar>(xs: &[SparseVec<F>], targets: &[bool]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    if xs.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            actual: targets.len(),
        });
    }
    Ok(())
}

/// Shuffled mini-batch gradient descent on the mean per-example loss.
/// Returns the mean training loss of every epoch.
#[allow(clippy::too_many_arguments)]
fn run_epochs<F: Scalar>(
    model: &mut ModelState<F>,
    xs: &[SparseVec<F>],
    targets: &[bool],
    label: usize,
    cfg: &DistillConfig<F>,
    lr: F,
    shuffle_seed: u64,
    guidance: &Guidance<'_, F>,
    mut projection: Option<&mut Projection<F>>,
) -> Result<Vec<F>> {
    cfg.validate()?;
    check_split(xs, targets)?;
    let mut rng = rng_for(shuffle_seed, &[]);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = F::zero();
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = Gradients::zeros(model);
            let mut pgrad = projection.as_deref().map(|p| vec![F::zero(); p.weights.len()]);
            for &i in batch {
                let objective = guidance.objective(i, targets[i], projection.as_deref());
                total += accumulate_gradient(model, &xs[i], label, objective, &mut grads, pgrad.as_deref_mut())?;
            }
            let inv = F::one() / F::from_usize_lossy(batch.len());
            grads.scale(inv);
            model.sgd_step(&grads, lr)?;
            if let (Some(p), Some(g)) = (projection.as_deref_mut(), pgrad) {
                let updated: Vec<F> = p.weights.iter().zip(&g).map(|(&w, &d)| w - lr * inv * d).collect();
                if updated.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("projection weights".into()));
                }
                p.weights = updated;
            }
        }
        losses.push(total / F::from_usize_lossy(xs.len()));
    }
    Ok(losses)
}

/// Fine-tunes the teacher's encoder and `label` head with hard loss for
/// `cfg.epochs`. Returns the mean training loss per epoch.
pub fn train_teacher<F: Scalar>(
    teacher: &mut ModelState<F>,
    xs: &[SparseVec<F>],
    targets: &[bool],
    label: usize,
    cfg: &DistillConfig<F>,
    lr: F,
    shuffle_seed: u64,
) -> Result<Vec<F>> {
    run_epochs(
        teacher,
        xs,
        targets,
        label,
        cfg,
        lr,
        shuffle_seed,
        &Guidance::Hard,
        None,
    )
}

/// Trains the student's encoder and `label` head against a frozen teacher.
///
/// With `teacher = None` the student trains on hard labels only. With a
/// contrastive weight the teacher view must carry hidden states and a
/// projection must be supplied.
#[allow(clippy::too_many_arguments)]
pub fn train_student<F: Scalar>(
    student: &mut ModelState<F>,
    xs: &[SparseVec<F>],
    targets: &[bool],
    label: usize,
    cfg: &DistillConfig<F>,
    lr: F,
    shuffle_seed: u64,
    teacher: Option<&TeacherView<F>>,
    contrastive: Option<(F, &mut Projection<F>)>,
) -> Result<Vec<F>> {
    match (teacher, contrastive) {
        (None, None) => run_epochs(
            student,
            xs,
            targets,
            label,
            cfg,
            lr,
            shuffle_seed,
            &Guidance::Hard,
            None,
        ),
        (Some(view), None) => {
            let guidance = Guidance::Kd {
                view,
                temperature: cfg.temperature,
                alpha: cfg.alpha,
            };
            run_epochs(student, xs, targets, label, cfg, lr, shuffle_seed, &guidance, None)
        }
        (Some(view), Some((beta, projection))) => {
            let hidden = view
                .hidden
                .as_deref()
                .ok_or_else(|| Error::invalid("contrastive training needs teacher hidden states"))?;
            let guidance = Guidance::KdContrastive {
                view,
                hidden,
                temperature: cfg.temperature,
                alpha: cfg.alpha,
                beta,
            };
            run_epochs(
                student,
                xs,
                targets,
                label,
                cfg,
                lr,
                shuffle_seed,
                &guidance,
                Some(projection),
            )
        }
        (None, Some(_)) => Err(Error::invalid("contrastive training needs a teacher")),
    }
}

/// Student predictions, plus the teacher's when a teacher was trained.
#[derive(Debug, Clone, PartialEq)]
pub struct DistillOutcome<F> {
    pub student: PredictionSet<F>,
    pub teacher: Option<PredictionSet<F>>,
}

/// Featurized training and validation data for one fold.
pub(crate) struct FoldData<F> {
    pub train_x: Vec<SparseVec<F>>,
    pub train_y: Vec<Vec<bool>>,
    pub valid_x: Vec<SparseVec<F>>,
    pub valid_idx: Vec<usize>,
}

/// Fits TF-IDF on the fold's training split only and transforms both splits.
pub(crate) fn fold_data<F: Scalar>(
    corpus: &Corpus,
    folds: &FoldAssignment,
    fold: usize,
    dim: usize,
    max_length: usize,
) -> Result<FoldData<F>> {
    let train_idx = folds.train_indices(fold);
    let valid_idx = folds.validation_indices(fold);
    let docs = &corpus.documents;
    let tfidf = HashedTfidf::fit(train_idx.iter().map(|&i| docs[i].text.as_str()), dim, max_length)?;
    Ok(FoldData {
        train_x: train_idx.iter().map(|&i| tfidf.transform(&docs[i].text)).collect(),
        train_y: train_idx.iter().map(|&i| docs[i].labels.clone()).collect(),
        valid_x: valid_idx.iter().map(|&i| tfidf.transform(&docs[i].text)).collect(),
        valid_idx,
    })
}

pub(crate) fn check_folds(corpus: &Corpus, folds: &FoldAssignment) -> Result<()> {
    folds.check_covers(corpus)?;
    if corpus.num_labels() == 0 {
        return Err(Error::invalid("corpus has no labels"));
    }
    Ok(())
}

/// Runs `per_fold` on every fold in parallel and concatenates the results in
/// fold order.
pub(crate) fn collect_folds<T: Send>(k: usize, per_fold: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..k).into_par_iter().map(per_fold).collect()
}

type FoldRecords<F> = (Vec<Prediction<F>>, Vec<Prediction<F>>);

fn predictions_for<F: Scalar>(
    model: &ModelState<F>,
    data: &FoldData<F>,
    corpus: &Corpus,
    label: usize,
    fold: usize,
) -> Result<Vec<Prediction<F>>> {
    data.valid_x
        .iter()
        .zip(&data.valid_idx)
        .map(|(x, &d)| {
            let doc = &corpus.documents[d];
            Ok(Prediction {
                doc_id: doc.id.clone(),
                label,
                probability: model.predict_proba(x, label)?,
                truth: doc.labels[label],
                fold,
            })
        })
        .collect()
}

/// One fold of sequential or binary-relevance training.
fn train_fold<F: Scalar>(
    corpus: &Corpus,
    folds: &FoldAssignment,
    setup: &DistillSetup<F>,
    fold: usize,
    order: &[usize],
    sequential: bool,
) -> Result<FoldRecords<F>> {
    let cfg = &setup.config;
    let lr = setup.step_size();
    let num_labels = corpus.num_labels();
    let beta = setup.mode.contrastive_weight();
    let data: FoldData<F> = fold_data(corpus, folds, fold, setup.feature_dim, cfg.max_length)?;
    let init = |spec: &EncoderSpec, tag: u64, label: usize| -> Result<ModelState<F>> {
        init_model(
            spec,
            num_labels,
            derive_seed(setup.seed, &[tag, fold as u64, label as u64]),
        )
    };
    let projection_for = |label: usize| {
        Projection::init(
            setup.teacher.output_width(),
            setup.student.output_width(),
            derive_seed(setup.seed, &[TAG_PROJECTION_INIT, fold as u64, label as u64]),
        )
    };
    let mut teacher = if setup.teacher_guidance {
        Some(init(&setup.teacher, TAG_TEACHER_INIT, 0)?)
    } else {
        None
    };
    let mut student = init(&setup.student, TAG_STUDENT_INIT, 0)?;
    let mut projection = beta.map(|_| projection_for(0));
    let mut student_records = Vec::with_capacity(data.valid_x.len() * num_labels);
    let mut teacher_records = Vec::new();
    for (position, &label) in order.iter().enumerate() {
        if !sequential && position > 0 {
            // Binary relevance: nothing carries over between labels.
            if teacher.is_some() {
                teacher = Some(init(&setup.teacher, TAG_TEACHER_INIT, label)?);
            }
            student = init(&setup.student, TAG_STUDENT_INIT, label)?;
            projection = beta.map(|_| projection_for(label));
        }
        let targets: Vec<bool> = data.train_y.iter().map(|y| y[label]).collect();
        let shuffle = |tag: u64| derive_seed(setup.seed, &[tag, fold as u64, label as u64]);
        let view = match teacher.as_mut() {
            Some(t) => {
                train_teacher(t, &data.train_x, &targets, label, cfg, lr, shuffle(TAG_TEACHER_SHUFFLE))?;
                teacher_records.extend(predictions_for(t, &data, corpus, label, fold)?);
                Some(TeacherView::compute(t, &data.train_x, label, beta.is_some())?)
            }
            None => None,
        };
        let contrastive = beta.zip(projection.as_mut());
        train_student(
            &mut student,
            &data.train_x,
            &targets,
            label,
            cfg,
            lr,
            shuffle(TAG_STUDENT_SHUFFLE),
            view.as_ref(),
            contrastive,
        )?;
        student_records.extend(predictions_for(&student, &data, corpus, label, fold)?);
    }
    Ok((student_records, teacher_records))
}

fn distill_cv<F: Scalar>(
    corpus: &Corpus,
    folds: &FoldAssignment,
    setup: &DistillSetup<F>,
    sequential: bool,
) -> Result<DistillOutcome<F>> {
    setup.validate()?;
    check_folds(corpus, folds)?;
    if setup.mode.contrastive_weight().is_some() && !setup.teacher_guidance {
        return Err(Error::invalid("contrastive variants need teacher guidance"));
    }
    let order = setup.order(corpus.num_labels())?;
    let per_fold = collect_folds(folds.k, |fold| {
        train_fold(corpus, folds, setup, fold, &order, sequential)
    })?;
    let labels = corpus.vocab.labels().to_vec();
    let mut student = PredictionSet::new(labels.clone());
    let mut teacher = PredictionSet::new(labels);
    for (s, t) in per_fold {
        student.records.extend(s);
        teacher.records.extend(t);
    }
    student.check_complete()?;
    let teacher = if setup.teacher_guidance {
        teacher.check_complete()?;
        Some(teacher)
    } else {
        None
    };
    Ok(DistillOutcome { student, teacher })
}

/// Nested fold / label / epoch training with encoders carried across labels
/// within a fold.
pub fn distill_sequential<F: Scalar>(
    corpus: &Corpus,
    folds: &FoldAssignment,
    setup: &DistillSetup<F>,
) -> Result<DistillOutcome<F>> {
    distill_cv(corpus, folds, setup, true)
}

/// Fresh teacher and student for every (fold, label) pair.
pub fn distill_binary_relevance<F: Scalar>(
    corpus: &Corpus,
    folds: &FoldAssignment,
    setup: &DistillSetup<F>,
) -> Result<DistillOutcome<F>> {
    distill_cv(corpus, folds, setup, false)
}

/// Dispatches on `setup.mode`.
pub fn run_mode<F: Scalar>(
    corpus: &Corpus,
    folds: &FoldAssignment,
    setup: &DistillSetup<F>,
) -> Result<DistillOutcome<F>> {
    match setup.mode.variant() {
        Variant::SequentialKd | Variant::SequentialKdContrastive => distill_sequential(corpus, folds, setup),
        Variant::BinaryRelevanceKd | Variant::BinaryRelevanceKdContrastive => {
            distill_binary_relevance(corpus, folds, setup)
        }
        Variant::ClassifierChainsBaseline => Ok(DistillOutcome {
            student: baseline_classifier_chains(corpus, folds, setup)?,
            teacher: None,
        }),
    }
}

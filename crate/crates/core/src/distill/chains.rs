//! TF-IDF + linear classifier-chains baseline.
//!
//! Classifier `j` in the chain sees the hashed TF-IDF features plus one
//! indicator per earlier label in the chain. Training feeds the true bits of
//! earlier labels; validation feeds the chain's own thresholded predictions.

use rand::seq::SliceRandom;

use super::predictions::{Prediction, PredictionSet};
use super::train::{check_folds, collect_folds, fold_data};
use super::{DistillConfig, DistillSetup, THRESHOLD};
use crate::corpus::{Corpus, FoldAssignment, SparseVec};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::{derive_seed, rng_for, TAG_CHAIN_SHUFFLE};

/// Logistic regression over sparse features plus dense chain indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel<F> {
    pub feature_weights: Vec<F>,
    /// One weight per earlier label in the chain, in chain order.
    pub chain_weights: Vec<F>,
    pub bias: F,
}

fn sigmoid<F: Scalar>(z: F) -> F {
    if z >= F::zero() {
        F::one() / (F::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (F::one() + e)
    }
}

impl<F: Scalar> LogisticModel<F> {
    pub fn zeros(feature_dim: usize, chain_len: usize) -> Self {
        LogisticModel {
            feature_weights: vec![F::zero(); feature_dim],
            chain_weights: vec![F::zero(); chain_len],
            bias: F::zero(),
        }
    }

    pub fn logit(&self, x: &SparseVec<F>, chain: &[bool]) -> F {
        let mut z = self.bias;
        for &(i, v) in &x.entries {
            z += self.feature_weights[i] * v;
        }
        for (&w, &b) in self.chain_weights.iter().zip(chain) {
            if b {
                z += w;
            }
        }
        z
    }

    pub fn predict_proba(&self, x: &SparseVec<F>, chain: &[bool]) -> F {
        sigmoid(self.logit(x, chain))
    }

    /// Mini-batch gradient descent on mean logistic loss; returns per-epoch
    /// mean loss.
    pub fn fit(
        &mut self,
        xs: &[SparseVec<F>],
        chains: &[Vec<bool>],
        targets: &[bool],
        cfg: &DistillConfig<F>,
        lr: F,
        shuffle_seed: u64,
    ) -> Result<Vec<F>> {
        cfg.validate()?;
        if xs.is_empty() {
            return Err(Error::invalid("training split is empty"));
        }
        if xs.len() != targets.len() || xs.len() != chains.len() {
            return Err(Error::DimensionMismatch {
                expected: xs.len(),
                actual: targets.len().min(chains.len()),
            });
        }
        let mut rng = rng_for(shuffle_seed, &[]);
        let mut order: Vec<usize> = (0..xs.len()).collect();
        let mut losses = Vec::with_capacity(cfg.epochs);
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut total = F::zero();
            for batch in order.chunks(cfg.batch_size) {
                let step = lr / F::from_usize_lossy(batch.len());
                let mut deltas: Vec<(usize, F)> = Vec::new();
                let mut chain_grad = vec![F::zero(); self.chain_weights.len()];
                let mut bias_grad = F::zero();
                for &i in batch {
                    let z = self.logit(&xs[i], &chains[i]);
                    let y = if targets[i] { F::one() } else { F::zero() };
                    // log(1 + e^z) - y z, evaluated stably.
                    let softplus = z.max(F::zero()) + (-z.abs()).exp().ln_1p();
                    total += softplus - y * z;
                    let r = sigmoid(z) - y;
                    deltas.extend(xs[i].entries.iter().map(|&(j, v)| (j, r * v)));
                    for (g, &b) in chain_grad.iter_mut().zip(&chains[i]) {
                        if b {
                            *g += r;
                        }
                    }
                    bias_grad += r;
                }
                for (j, g) in deltas {
                    self.feature_weights[j] -= step * g;
                }
                for (w, g) in self.chain_weights.iter_mut().zip(chain_grad) {
                    *w -= step * g;
                }
                self.bias -= step * bias_grad;
            }
            if !self.bias.is_finite() || self.chain_weights.iter().any(|w| !w.is_finite()) {
                return Err(Error::NonFinite("chain classifier weights".into()));
            }
            losses.push(total / F::from_usize_lossy(xs.len()));
        }
        Ok(losses)
    }
}

/// Trains one classifier per label in `order`, teacher-forcing the chain with
/// the true bits of earlier labels.
pub fn train_chain<F: Scalar>(
    xs: &[SparseVec<F>],
    labels: &[Vec<bool>],
    order: &[usize],
    cfg: &DistillConfig<F>,
    lr: F,
    seed: u64,
) -> Result<Vec<LogisticModel<F>>> {
    let dim = xs
        .first()
        .map(|x| x.dim)
        .ok_or_else(|| Error::invalid("training split is empty"))?;
    let mut models = Vec::with_capacity(order.len());
    for (position, &label) in order.iter().enumerate() {
        let chains: Vec<Vec<bool>> = labels
            .iter()
            .map(|y| order[..position].iter().map(|&l| y[l]).collect())
            .collect();
        let targets: Vec<bool> = labels.iter().map(|y| y[label]).collect();
        let mut model = LogisticModel::zeros(dim, position);
        model.fit(
            xs,
            &chains,
            &targets,
            cfg,
            lr,
            derive_seed(seed, &[TAG_CHAIN_SHUFFLE, label as u64]),
        )?;
        models.push(model);
    }
    Ok(models)
}

/// Runs the chain on one input, feeding each classifier the thresholded
/// predictions of its predecessors. Probabilities are in chain order.
pub fn predict_chain<F: Scalar>(models: &[LogisticModel<F>], x: &SparseVec<F>) -> Vec<F> {
    let mut bits = Vec::with_capacity(models.len());
    let mut probs = Vec::with_capacity(models.len());
    for m in models {
        let p = m.predict_proba(x, &bits);
        bits.push(p >= F::lit(THRESHOLD));
        probs.push(p);
    }
    probs
}

/// Cross-validated classifier chains. Uses the setup's feature dimension,
/// label order, learning rate, batch size, epochs and token budget.
pub fn baseline_classifier_chains<F: Scalar>(
    corpus: &Corpus,
    folds: &FoldAssignment,
    setup: &DistillSetup<F>,
) -> Result<PredictionSet<F>> {
    setup.validate()?;
    check_folds(corpus, folds)?;
    let order = setup.order(corpus.num_labels())?;
    let per_fold = collect_folds(folds.k, |fold| {
        let data = fold_data::<F>(corpus, folds, fold, setup.feature_dim, setup.config.max_length)?;
        let models = train_chain(
            &data.train_x,
            &data.train_y,
            &order,
            &setup.config,
            setup.config.learning_rate * setup.baseline_lr_scale,
            derive_seed(setup.seed, &[fold as u64]),
        )?;
        let mut records = Vec::with_capacity(data.valid_x.len() * order.len());
        for (x, &d) in data.valid_x.iter().zip(&data.valid_idx) {
            let doc = &corpus.documents[d];
            for (&label, probability) in order.iter().zip(predict_chain(&models, x)) {
                records.push(Prediction {
                    doc_id: doc.id.clone(),
                    label,
                    probability,
                    truth: doc.labels[label],
                    fold,
                });
            }
        }
        Ok(records)
    })?;
    let mut out = PredictionSet::new(corpus.vocab.labels().to_vec());
    out.records = per_fold.into_iter().flatten().collect();
    out.check_complete()?;
    Ok(out)
}

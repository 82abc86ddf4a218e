//! Feed-forward text encoders with per-label two-logit heads.
//!
//! Weights are stored input-major (`weights[i * fan_out + o]`) so a sparse
//! input touches contiguous rows of the first layer.

mod checkpoint;
mod grad;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::SparseVec;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use grad::{Gradients, LayerGrad, WeightGrad};

/// Index of the "label present" logit.
pub const POSITIVE: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::invalid(format!("unknown activation {other:?}"))),
        }
    }

    fn apply<F: Scalar>(self, x: F) -> F {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(F::zero()),
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output<F: Scalar>(self, y: F) -> F {
        match self {
            Activation::Tanh => F::one() - y * y,
            Activation::Relu => {
                if y > F::zero() {
                    F::one()
                } else {
                    F::zero()
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Teacher,
    Student,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderSpec {
    pub input_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub activation: Activation,
    pub role: Role,
}

impl EncoderSpec {
    pub const TEACHER_HIDDEN: [usize; 2] = [128, 64];
    pub const STUDENT_HIDDEN: [usize; 1] = [32];

    pub fn teacher(input_dim: usize) -> Self {
        EncoderSpec {
            input_dim,
            hidden_sizes: Self::TEACHER_HIDDEN.to_vec(),
            activation: Activation::Tanh,
            role: Role::Teacher,
        }
    }

    pub fn student(input_dim: usize) -> Self {
        EncoderSpec {
            input_dim,
            hidden_sizes: Self::STUDENT_HIDDEN.to_vec(),
            activation: Activation::Tanh,
            role: Role::Student,
        }
    }

    /// Width of the hidden representation fed to the heads.
    pub fn output_width(&self) -> usize {
        *self.hidden_sizes.last().expect("validated spec has hidden layers")
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::invalid("encoder input_dim must be positive"));
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return Err(Error::invalid("encoder needs at least one non-empty hidden layer"));
        }
        Ok(())
    }

    pub fn parameter_count(&self, num_labels: usize) -> usize {
        let mut fan_in = self.input_dim;
        let mut total = 0;
        for &h in &self.hidden_sizes {
            total += fan_in * h + h;
            fan_in = h;
        }
        total + num_labels * (fan_in * 2 + 2)
    }
}

/// Affine layer, weights stored input-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F> {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Vec<F>,
    pub bias: Vec<F>,
}

impl<F: Scalar> Dense<F> {
    /// Uniform in `[-a, a]`, `a = sqrt(6 / (fan_in + fan_out))`; zero bias.
    pub fn glorot(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-a, a);
        Dense {
            fan_in,
            fan_out,
            weights: (0..fan_in * fan_out).map(|_| F::lit(dist.sample(rng))).collect(),
            bias: vec![F::zero(); fan_out],
        }
    }

    pub fn weight(&self, input: usize, output: usize) -> F {
        self.weights[input * self.fan_out + output]
    }

    pub fn row(&self, input: usize) -> &[F] {
        &self.weights[input * self.fan_out..(input + 1) * self.fan_out]
    }

    pub fn forward_dense(&self, x: &[F]) -> Vec<F> {
        let mut out = self.bias.clone();
        for (i, &xi) in x.iter().enumerate() {
            if xi.is_zero() {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(self.row(i)) {
                *o += xi * w;
            }
        }
        out
    }

    pub fn forward_sparse(&self, x: &SparseVec<F>) -> Vec<F> {
        let mut out = self.bias.clone();
        for &(i, xi) in &x.entries {
            for (o, &w) in out.iter_mut().zip(self.row(i)) {
                *o += xi * w;
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }
}

/// Encoder layers plus one two-logit head per label.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState<F> {
    pub spec: EncoderSpec,
    pub layers: Vec<Dense<F>>,
    pub heads: Vec<Dense<F>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardResult<F> {
    pub hidden: Vec<F>,
    pub logits: [F; 2],
}

/// Post-activation outputs of every encoder layer for one input.
#[derive(Debug, Clone)]
pub struct Trace<F> {
    pub activations: Vec<Vec<F>>,
}

impl<F> Trace<F> {
    pub fn hidden(&self) -> &[F] {
        self.activations.last().expect("encoder has layers")
    }
}

/// Initializes a model deterministically from `seed`.
pub fn init_model<F: Scalar>(spec: &EncoderSpec, num_labels: usize, seed: u64) -> Result<ModelState<F>> {
    spec.validate()?;
    if num_labels == 0 {
        return Err(Error::invalid("model needs at least one label head"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(spec.hidden_sizes.len());
    let mut fan_in = spec.input_dim;
    for &h in &spec.hidden_sizes {
        layers.push(Dense::glorot(fan_in, h, &mut rng));
        fan_in = h;
    }
    let heads = (0..num_labels).map(|_| Dense::glorot(fan_in, 2, &mut rng)).collect();
    Ok(ModelState {
        spec: spec.clone(),
        layers,
        heads,
    })
}

impl<F: Scalar> ModelState<F> {
    pub fn num_labels(&self) -> usize {
        self.heads.len()
    }

    pub fn hidden_width(&self) -> usize {
        self.spec.output_width()
    }

    fn check_input(&self, x: &SparseVec<F>) -> Result<()> {
        if x.dim != self.spec.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.spec.input_dim,
                actual: x.dim,
            });
        }
        Ok(())
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.heads.len() {
            return Err(Error::invalid(format!(
                "label index {label} out of range for {} heads",
                self.heads.len()
            )));
        }
        Ok(())
    }

    pub fn trace(&self, x: &SparseVec<F>) -> Result<Trace<F>> {
        self.check_input(x)?;
        let act = self.spec.activation;
        let mut activations = Vec::with_capacity(self.layers.len());
        let mut current = self.layers[0].forward_sparse(x);
        current.iter_mut().for_each(|v| *v = act.apply(*v));
        activations.push(current);
        for layer in &self.layers[1..] {
            let mut next = layer.forward_dense(activations.last().unwrap());
            next.iter_mut().for_each(|v| *v = act.apply(*v));
            activations.push(next);
        }
        Ok(Trace { activations })
    }

    pub fn head_logits(&self, hidden: &[F], label: usize) -> [F; 2] {
        let out = self.heads[label].forward_dense(hidden);
        [out[0], out[1]]
    }

    pub fn forward(&self, x: &SparseVec<F>, label: usize) -> Result<ForwardResult<F>> {
        self.check_label(label)?;
        let trace = self.trace(x)?;
        let logits = self.head_logits(trace.hidden(), label);
        let hidden = trace.activations.into_iter().last().unwrap();
        Ok(ForwardResult { hidden, logits })
    }

    /// Probability of the "present" class at temperature 1.
    pub fn predict_proba(&self, x: &SparseVec<F>, label: usize) -> Result<F> {
        let r = self.forward(x, label)?;
        Ok(softmax_t(r.logits, F::one())?[POSITIVE])
    }

    /// Accumulates gradients of a per-example loss into `grads`, given the
    /// loss's derivative with respect to the label's logits and, optionally,
    /// an extra derivative with respect to the hidden representation.
    pub fn backward(
        &self,
        x: &SparseVec<F>,
        trace: &Trace<F>,
        label: usize,
        dlogits: [F; 2],
        dhidden_extra: Option<&[F]>,
        grads: &mut Gradients<F>,
    ) {
        let hidden = trace.hidden();
        let head = &self.heads[label];
        let width = hidden.len();
        let hg = grads.head_mut(label, width);
        let mut dhidden = vec![F::zero(); width];
        {
            let WeightGrad::Dense(hw) = &mut hg.weights else {
                unreachable!("head gradients are dense")
            };
            for h in 0..width {
                hw[2 * h] += hidden[h] * dlogits[0];
                hw[2 * h + 1] += hidden[h] * dlogits[1];
                dhidden[h] = head.weight(h, 0) * dlogits[0] + head.weight(h, 1) * dlogits[1];
            }
            hg.bias[0] += dlogits[0];
            hg.bias[1] += dlogits[1];
        }
        if let Some(extra) = dhidden_extra {
            for (d, &e) in dhidden.iter_mut().zip(extra) {
                *d += e;
            }
        }
        self.backward_encoder(x, trace, dhidden, grads);
    }

    /// Backpropagates a derivative with respect to the hidden representation
    /// through the encoder only.
    pub fn backward_encoder(&self, x: &SparseVec<F>, trace: &Trace<F>, dhidden: Vec<F>, grads: &mut Gradients<F>) {
        let act = self.spec.activation;
        let mut upstream = dhidden;
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let out = &trace.activations[li];
            let delta: Vec<F> = upstream
                .iter()
                .zip(out)
                .map(|(&u, &y)| u * act.derivative_from_output(y))
                .collect();
            let lg = &mut grads.layers[li];
            for (b, &d) in lg.bias.iter_mut().zip(&delta) {
                *b += d;
            }
            if li == 0 {
                let WeightGrad::Rows(rows) = &mut lg.weights else {
                    unreachable!("first-layer gradients are row-sparse")
                };
                for &(i, xi) in &x.entries {
                    let row = rows.entry(i).or_insert_with(|| vec![F::zero(); layer.fan_out]);
                    for (g, &d) in row.iter_mut().zip(&delta) {
                        *g += xi * d;
                    }
                }
            } else {
                let input = &trace.activations[li - 1];
                let WeightGrad::Dense(w) = &mut lg.weights else {
                    unreachable!("inner-layer gradients are dense")
                };
                let mut next = vec![F::zero(); layer.fan_in];
                for i in 0..layer.fan_in {
                    let xi = input[i];
                    let row = layer.row(i);
                    let grow = &mut w[i * layer.fan_out..(i + 1) * layer.fan_out];
                    let mut acc = F::zero();
                    for o in 0..layer.fan_out {
                        grow[o] += xi * delta[o];
                        acc += row[o] * delta[o];
                    }
                    next[i] = acc;
                }
                upstream = next;
            }
        }
    }

    /// Plain gradient descent: every parameter `p <- p - lr * g`.
    ///
    /// The update is validated before anything is written, so a rejected step
    /// leaves the model untouched.
    pub fn sgd_step(&mut self, grads: &Gradients<F>, lr: F) -> Result<()> {
        if !lr.is_finite() || lr < F::zero() {
            return Err(Error::invalid(format!(
                "learning rate must be finite and >= 0, got {lr}"
            )));
        }
        grads.check_shape(self)?;
        grads.check_finite()?;
        let check = |p: F, g: F, what: &dyn Fn() -> String| -> Result<()> {
            if (p - lr * g).is_finite() {
                Ok(())
            } else {
                Err(Error::NonFinite(what()))
            }
        };
        for (li, (layer, lg)) in self.layers.iter().zip(&grads.layers).enumerate() {
            lg.visit(layer.fan_out, |idx, g| {
                check(layer.weights[idx], g, &|| format!("encoder layer {li} weights"))
            })?;
            for (&b, &g) in layer.bias.iter().zip(&lg.bias) {
                check(b, g, &|| format!("encoder layer {li} bias"))?;
            }
        }
        for (&label, hg) in &grads.heads {
            let head = &self.heads[label];
            hg.visit(2, |idx, g| {
                check(head.weights[idx], g, &|| format!("head {label} weights"))
            })?;
            for (&b, &g) in head.bias.iter().zip(&hg.bias) {
                check(b, g, &|| format!("head {label} bias"))?;
            }
        }

        for (layer, lg) in self.layers.iter_mut().zip(&grads.layers) {
            lg.apply(layer, lr);
        }
        for (&label, hg) in &grads.heads {
            hg.apply(&mut self.heads[label], lr);
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().chain(&self.heads).all(Dense::is_finite)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .chain(&self.heads)
            .map(|d| d.weights.len() + d.bias.len())
            .sum()
    }

    /// Every parameter in canonical order: encoder layers then heads, each as
    /// weights followed by bias.
    pub fn flat_parameters(&self) -> Vec<F> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for d in self.layers.iter().chain(&self.heads) {
            out.extend_from_slice(&d.weights);
            out.extend_from_slice(&d.bias);
        }
        out
    }

    pub fn set_flat_parameters(&mut self, values: &[F]) -> Result<()> {
        if values.len() != self.parameter_count() {
            return Err(Error::DimensionMismatch {
                expected: self.parameter_count(),
                actual: values.len(),
            });
        }
        let mut at = 0;
        for d in self.layers.iter_mut().chain(self.heads.iter_mut()) {
            let w = d.weights.len();
            d.weights.copy_from_slice(&values[at..at + w]);
            at += w;
            let b = d.bias.len();
            d.bias.copy_from_slice(&values[at..at + b]);
            at += b;
        }
        Ok(())
    }
}

/// Temperature softmax over two logits, evaluated in max-shifted form.
pub fn softmax_t<F: Scalar>(logits: [F; 2], temperature: F) -> Result<[F; 2]> {
    let [a, b] = scaled_logits(logits, temperature)?;
    let m = a.max(b);
    let ea = (a - m).exp();
    let eb = (b - m).exp();
    let sum = ea + eb;
    Ok([ea / sum, eb / sum])
}

fn scaled_logits<F: Scalar>(logits: [F; 2], temperature: F) -> Result<[F; 2]> {
    if !(temperature > F::zero()) || !temperature.is_finite() {
        return Err(Error::invalid(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if !(logits[0].is_finite() && logits[1].is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    Ok([logits[0] / temperature, logits[1] / temperature])
}

/// Natural log of [`softmax_t`], computed without forming the probabilities.
pub fn log_softmax_t<F: Scalar>(logits: [F; 2], temperature: F) -> Result<[F; 2]> {
    let [a, b] = scaled_logits(logits, temperature)?;
    let m = a.max(b);
    let lse = m + ((a - m).exp() + (b - m).exp()).ln();
    Ok([a - lse, b - lse])
}

use std::collections::BTreeMap;

use super::{Dense, ModelState};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Weight gradient of one layer. The first encoder layer sees sparse inputs,
/// so only rows of active features are materialized.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightGrad<F> {
    Dense(Vec<F>),
    Rows(BTreeMap<usize, Vec<F>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad<F> {
    pub weights: WeightGrad<F>,
    pub bias: Vec<F>,
}

impl<F: Scalar> LayerGrad<F> {
    fn dense_like(layer: &Dense<F>) -> Self {
        LayerGrad {
            weights: WeightGrad::Dense(vec![F::zero(); layer.weights.len()]),
            bias: vec![F::zero(); layer.fan_out],
        }
    }

    /// Calls `f(flat_index, gradient)` for every stored weight entry.
    pub(crate) fn visit(&self, fan_out: usize, mut f: impl FnMut(usize, F) -> Result<()>) -> Result<()> {
        match &self.weights {
            WeightGrad::Dense(w) => w.iter().enumerate().try_for_each(|(i, &g)| f(i, g)),
            WeightGrad::Rows(rows) => rows
                .iter()
                .try_for_each(|(&r, row)| row.iter().enumerate().try_for_each(|(o, &g)| f(r * fan_out + o, g))),
        }
    }

    pub(crate) fn apply(&self, layer: &mut Dense<F>, lr: F) {
        let fan_out = layer.fan_out;
        match &self.weights {
            WeightGrad::Dense(w) => {
                for (p, &g) in layer.weights.iter_mut().zip(w) {
                    *p -= lr * g;
                }
            }
            WeightGrad::Rows(rows) => {
                for (&r, row) in rows {
                    for (p, &g) in layer.weights[r * fan_out..(r + 1) * fan_out].iter_mut().zip(row) {
                        *p -= lr * g;
                    }
                }
            }
        }
        for (p, &g) in layer.bias.iter_mut().zip(&self.bias) {
            *p -= lr * g;
        }
    }

    fn scale(&mut self, s: F) {
        match &mut self.weights {
            WeightGrad::Dense(w) => w.iter_mut().for_each(|g| *g *= s),
            WeightGrad::Rows(rows) => rows.values_mut().flatten().for_each(|g| *g *= s),
        }
        self.bias.iter_mut().for_each(|g| *g *= s);
    }

    fn all_finite(&self) -> bool {
        let w_ok = match &self.weights {
            WeightGrad::Dense(w) => w.iter().all(|g| g.is_finite()),
            WeightGrad::Rows(rows) => rows.values().flatten().all(|g| g.is_finite()),
        };
        w_ok && self.bias.iter().all(|g| g.is_finite())
    }

    fn check_against(&self, layer: &Dense<F>, what: &str) -> Result<()> {
        let mismatch = |expected, actual| {
            Err(Error::invalid(format!(
                "{what}: gradient shape {actual} != parameter shape {expected}"
            )))
        };
        if self.bias.len() != layer.fan_out {
            return mismatch(layer.fan_out, self.bias.len());
        }
        match &self.weights {
            WeightGrad::Dense(w) if w.len() != layer.weights.len() => mismatch(layer.weights.len(), w.len()),
            WeightGrad::Rows(rows) => {
                for (&r, row) in rows {
                    if r >= layer.fan_in {
                        return mismatch(layer.fan_in, r + 1);
                    }
                    if row.len() != layer.fan_out {
                        return mismatch(layer.fan_out, row.len());
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn write_dense(&self, fan_out: usize, out: &mut [F]) {
        let _ = self.visit(fan_out, |i, g| {
            out[i] += g;
            Ok(())
        });
        let w = out.len() - self.bias.len();
        for (o, &g) in out[w..].iter_mut().zip(&self.bias) {
            *o += g;
        }
    }
}

/// Gradients with the same shape as a [`ModelState`]. Heads without an entry
/// have zero gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F> {
    pub layers: Vec<LayerGrad<F>>,
    pub heads: BTreeMap<usize, LayerGrad<F>>,
}

impl<F: Scalar> Gradients<F> {
    pub fn zeros(model: &ModelState<F>) -> Self {
        let layers = model
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                if i == 0 {
                    LayerGrad {
                        weights: WeightGrad::Rows(BTreeMap::new()),
                        bias: vec![F::zero(); l.fan_out],
                    }
                } else {
                    LayerGrad::dense_like(l)
                }
            })
            .collect();
        Gradients {
            layers,
            heads: BTreeMap::new(),
        }
    }

    pub(crate) fn head_mut(&mut self, label: usize, width: usize) -> &mut LayerGrad<F> {
        self.heads.entry(label).or_insert_with(|| LayerGrad {
            weights: WeightGrad::Dense(vec![F::zero(); width * 2]),
            bias: vec![F::zero(); 2],
        })
    }

    pub fn scale(&mut self, s: F) {
        self.layers.iter_mut().for_each(|l| l.scale(s));
        self.heads.values_mut().for_each(|l| l.scale(s));
    }

    pub(crate) fn check_shape(&self, model: &ModelState<F>) -> Result<()> {
        if self.layers.len() != model.layers.len() {
            return Err(Error::DimensionMismatch {
                expected: model.layers.len(),
                actual: self.layers.len(),
            });
        }
        for (i, (g, l)) in self.layers.iter().zip(&model.layers).enumerate() {
            g.check_against(l, &format!("encoder layer {i}"))?;
        }
        for (&label, g) in &self.heads {
            let head = model
                .heads
                .get(label)
                .ok_or_else(|| Error::invalid(format!("gradient for missing head {label}")))?;
            g.check_against(head, &format!("head {label}"))?;
        }
        Ok(())
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        for (i, g) in self.layers.iter().enumerate() {
            if !g.all_finite() {
                return Err(Error::NonFinite(format!("gradient of encoder layer {i}")));
            }
        }
        for (label, g) in &self.heads {
            if !g.all_finite() {
                return Err(Error::NonFinite(format!("gradient of head {label}")));
            }
        }
        Ok(())
    }

    /// Dense gradient in [`ModelState::flat_parameters`] order.
    pub fn flatten(&self, model: &ModelState<F>) -> Vec<F> {
        let mut out = vec![F::zero(); model.parameter_count()];
        let mut at = 0;
        for (li, layer) in model.layers.iter().enumerate() {
            let len = layer.weights.len() + layer.bias.len();
            self.layers[li].write_dense(layer.fan_out, &mut out[at..at + len]);
            at += len;
        }
        for (label, head) in model.heads.iter().enumerate() {
            let len = head.weights.len() + head.bias.len();
            if let Some(g) = self.heads.get(&label) {
                g.write_dense(head.fan_out, &mut out[at..at + len]);
            }
            at += len;
        }
        out
    }
}

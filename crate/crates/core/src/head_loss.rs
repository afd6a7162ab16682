//! Point-wise keep/delete classifier and the weighted binary cross-entropy.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LayerGroup;
use crate::nn::{self, ModelRng, NamedTensor, NamedTensorMut};

/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const PROB_EPS: f64 = 1e-7;

/// Labels are 1 when the class-1 probability reaches this value.
pub const DECISION_THRESHOLD: f64 = 0.5;

/// Fully connected layer to two logits followed by a softmax.
#[derive(Clone, Debug, PartialEq)]
pub struct Head {
    /// `2h x 2`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Head {
    pub fn new(input: usize, rng: &mut ModelRng) -> Self {
        Head {
            weight: nn::xavier_normal(input, 2, rng),
            bias: Array1::zeros(2),
        }
    }

    /// Class probabilities per row; each row sums to one.
    pub fn classify(&self, x_enc: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x_enc.ncols() != self.weight.nrows() {
            return Err(Error::Shape(format!(
                "encoding has {} features, head expects {}",
                x_enc.ncols(),
                self.weight.nrows()
            )));
        }
        let mut logits = x_enc.dot(&self.weight) + &self.bias;
        nn::softmax_rows(&mut logits);
        Ok(logits)
    }

    pub(crate) fn backward(
        &self,
        x_enc: &Array2<f64>,
        d_logits: &Array2<f64>,
        grads: &mut Head,
    ) -> Array2<f64> {
        grads.weight += &x_enc.t().dot(d_logits);
        grads.bias += &d_logits.sum_axis(Axis(0));
        d_logits.dot(&self.weight.t())
    }

    pub(crate) fn tensors(&self) -> Vec<NamedTensor<'_>> {
        vec![
            NamedTensor { name: "head.weight".into(), group: LayerGroup::Head, value: self.weight.view().into_dyn() },
            NamedTensor { name: "head.bias".into(), group: LayerGroup::Head, value: self.bias.view().into_dyn() },
        ]
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<NamedTensorMut<'_>> {
        vec![
            NamedTensorMut { name: "head.weight".into(), group: LayerGroup::Head, value: self.weight.view_mut().into_dyn() },
            NamedTensorMut { name: "head.bias".into(), group: LayerGroup::Head, value: self.bias.view_mut().into_dyn() },
        ]
    }
}

/// Which label's log term `alpha` multiplies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaTerm {
    /// `alpha` weights class 0 and `beta` weights class 1, so a small `alpha`
    /// up-weights the rare keep label.
    #[default]
    LabelZero,
    /// `alpha` multiplies the `y * ln p` term, as the loss is usually printed.
    LabelOne,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default)]
    pub alpha_term: AlphaTerm,
}

impl LossWeights {
    /// Fine-tuning weights: class 0 at 0.1, class 1 at 0.9.
    pub const FINE_TUNE: LossWeights = LossWeights { alpha: 0.1, beta: 0.9, alpha_term: AlphaTerm::LabelZero };

    /// Equal weights; half the plain binary cross-entropy.
    pub const BALANCED: LossWeights = LossWeights { alpha: 0.5, beta: 0.5, alpha_term: AlphaTerm::LabelZero };

    /// `beta = 1 - alpha`; alpha must lie strictly inside (0, 1).
    pub fn from_alpha(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::ClassWeight(alpha));
        }
        Ok(LossWeights { alpha, beta: 1.0 - alpha, alpha_term: AlphaTerm::LabelZero })
    }

    pub fn with_alpha_term(self, alpha_term: AlphaTerm) -> Self {
        LossWeights { alpha_term, ..self }
    }

    /// `(w1, w0)`: the weights of the label-1 and label-0 log terms.
    pub fn term_weights(&self) -> (f64, f64) {
        match self.alpha_term {
            AlphaTerm::LabelZero => (self.beta, self.alpha),
            AlphaTerm::LabelOne => (self.alpha, self.beta),
        }
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::FINE_TUNE
    }
}

fn check_lengths(probs: &[f64], labels: &[u8], mask: &[bool]) -> Result<usize> {
    if probs.len() != labels.len() || probs.len() != mask.len() {
        return Err(Error::Shape(format!(
            "{} probabilities, {} labels, {} mask entries",
            probs.len(),
            labels.len(),
            mask.len()
        )));
    }
    match mask.iter().filter(|&&m| m).count() {
        0 => Err(Error::EmptyMask),
        n => Ok(n),
    }
}

/// `-(1/N_valid) * sum_i [w1 * y_i * ln p_i + w0 * (1 - y_i) * ln(1 - p_i)]`
/// over unmasked positions, with `p_i` the class-1 probability and
/// `(w1, w0)` from [`LossWeights::term_weights`].
pub fn weighted_bce(probs: &[f64], labels: &[u8], mask: &[bool], weights: LossWeights) -> Result<f64> {
    let n = check_lengths(probs, labels, mask)?;
    let (w1, w0) = weights.term_weights();
    let mut total = 0.0;
    for ((&p, &y), _) in probs.iter().zip(labels).zip(mask).filter(|(_, &m)| m) {
        let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
        let y = f64::from(y);
        total += w1 * y * p.ln() + w0 * (1.0 - y) * (1.0 - p).ln();
    }
    Ok(-total / n as f64)
}

/// Loss over a compact sequence of class-1 probabilities and the gradient
/// with respect to the two logits of each row.
pub(crate) fn weighted_bce_with_grad(
    probs: &Array2<f64>,
    labels: &[u8],
    weights: LossWeights,
) -> (f64, Array2<f64>) {
    let n = probs.nrows() as f64;
    let (w1, w0) = weights.term_weights();
    let mut loss = 0.0;
    let mut grad = Array2::zeros(probs.dim());
    for (i, &label) in labels.iter().enumerate() {
        let p = probs[[i, 1]];
        let pc = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
        let y = f64::from(label);
        loss += w1 * y * pc.ln() + w0 * (1.0 - y) * (1.0 - pc).ln();
        // d/dz1 of the summand; p = sigmoid(z1 - z0)
        let g = -(w1 * y * (1.0 - p) - w0 * (1.0 - y) * p) / n;
        grad[[i, 1]] = g;
        grad[[i, 0]] = -g;
    }
    (-loss / n, grad)
}

/// 1 where the class-1 probability is at least one half; masked positions are 0.
pub fn predict_labels(probs: &[f64], mask: &[bool]) -> Vec<u8> {
    probs
        .iter()
        .zip(mask)
        .map(|(&p, &m)| u8::from(m && p >= DECISION_THRESHOLD))
        .collect()
}

/// Kept tokens in original order, space-joined.
pub fn extract_short_title<S: AsRef<str>>(tokens: &[S], labels: &[u8]) -> String {
    tokens
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == 1)
        .map(|(t, _)| t.as_ref())
        .collect::<Vec<_>>()
        .join(" ")
}

//! The complete labeler: embedder, encoder and head, with a hand-written
//! backward pass.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array2, ArrayD, Axis};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::corpus::EncodedExample;
use crate::embedder::{EmbedCache, Embedder};
use crate::encoder::{Encoder, EncoderCache};
use crate::error::{Error, Result};
use crate::head_loss::{self, Head, LossWeights};
use crate::nn::{ModelRng, NamedTensor, NamedTensorMut};

/// Unit of freezing and unfreezing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerGroup {
    Head,
    Attention,
    /// Zero-based recurrent layer, counted from the bottom.
    Recurrent(usize),
    /// Character CNN and highway stack.
    Embedding,
}

impl fmt::Display for LayerGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerGroup::Head => write!(f, "head"),
            LayerGroup::Attention => write!(f, "attention"),
            LayerGroup::Recurrent(i) => write!(f, "recurrent{}", i + 1),
            LayerGroup::Embedding => write!(f, "embedding"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TitleModel {
    pub config: ModelConfig,
    pub embedder: Embedder,
    pub encoder: Encoder,
    pub head: Head,
}

pub(crate) struct ForwardCache {
    embed: EmbedCache,
    encoder: EncoderCache,
    encoded: Array2<f64>,
}

impl TitleModel {
    /// Initializes every trainable tensor from `seed`.
    pub fn new(
        config: ModelConfig,
        word_table: Arc<Array2<f64>>,
        char_count: usize,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let mut rng = ModelRng::seed_from_u64(seed);
        let embedder = Embedder::new(&config, word_table, char_count, &mut rng)?;
        let encoder = Encoder::new(&config, &mut rng);
        let head = Head::new(config.encoding_dim(), &mut rng);
        Ok(TitleModel {
            config,
            embedder,
            encoder,
            head,
        })
    }

    /// Layer groups from the top of the network down.
    pub fn unfreeze_order(&self) -> Vec<LayerGroup> {
        let mut order = vec![LayerGroup::Head];
        if !self.encoder.attention.weights.is_empty() {
            order.push(LayerGroup::Attention);
        }
        order.extend((0..self.encoder.layers.len()).rev().map(LayerGroup::Recurrent));
        if self.embedder.char_cnn.is_some() || !self.embedder.highway.is_empty() {
            order.push(LayerGroup::Embedding);
        }
        order
    }

    /// Trainable tensors, bottom-up. The word table is not among them.
    pub fn tensors(&self) -> Vec<NamedTensor<'_>> {
        let mut out = self.embedder.tensors();
        out.extend(self.encoder.tensors());
        out.extend(self.head.tensors());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<NamedTensorMut<'_>> {
        let mut out = self.embedder.tensors_mut();
        out.extend(self.encoder.tensors_mut());
        out.extend(self.head.tensors_mut());
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.value.len()).sum()
    }

    /// Same architecture with every trainable tensor zeroed; shares the word table.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            let mut v = t.value;
            v.fill(0.0);
        }
        z
    }

    /// Copies of the trainable tensors, for snapshots.
    pub fn snapshot(&self) -> Vec<ArrayD<f64>> {
        self.tensors().into_iter().map(|t| t.value.to_owned()).collect()
    }

    pub fn restore(&mut self, snapshot: &[ArrayD<f64>]) {
        for (t, saved) in self.tensors_mut().into_iter().zip(snapshot) {
            let mut v = t.value;
            v.assign(saved);
        }
    }

    /// `self += scale * other` over trainable tensors.
    pub fn add_scaled(&mut self, other: &TitleModel, scale: f64) {
        for (t, o) in self.tensors_mut().into_iter().zip(other.tensors()) {
            let mut v = t.value;
            v.scaled_add(scale, &o.value);
        }
    }

    /// Final encodings of all positions; padding rows are zero.
    pub fn encode(&self, ex: &EncodedExample, rng: Option<&mut ModelRng>) -> Result<Array2<f64>> {
        let emb = self.embedder.embed_sequence(ex)?;
        self.encoder.encode(emb.view(), &ex.mask, rng)
    }

    /// Class-1 probability per position (0 at padding).
    pub fn predict(&self, ex: &EncodedExample) -> Result<Vec<f64>> {
        let (probs, _) = self.forward(ex, None)?;
        let mut out = vec![0.0; ex.max_len()];
        for (row, i) in ex.valid_positions().into_iter().enumerate() {
            out[i] = probs[[row, 1]];
        }
        Ok(out)
    }

    pub fn predict_labels(&self, ex: &EncodedExample) -> Result<Vec<u8>> {
        Ok(head_loss::predict_labels(&self.predict(ex)?, &ex.mask))
    }

    /// Decoded short title.
    pub fn compress(&self, ex: &EncodedExample) -> Result<String> {
        let labels = self.predict_labels(ex)?;
        Ok(head_loss::extract_short_title(&ex.tokens, &labels))
    }

    /// Forward pass over the unmasked positions; returns `(L x 2)` probabilities.
    pub(crate) fn forward(
        &self,
        ex: &EncodedExample,
        rng: Option<&mut ModelRng>,
    ) -> Result<(Array2<f64>, ForwardCache)> {
        let positions = ex.valid_positions();
        if positions.is_empty() {
            return Err(Error::EmptyMask);
        }
        if ex.x_c.nrows() != ex.x_w.len() || ex.mask.len() != ex.x_w.len() {
            return Err(Error::Shape("example rows disagree".into()));
        }
        let x_w: Vec<usize> = positions.iter().map(|&i| ex.x_w[i]).collect();
        let x_c = ex.x_c.select(Axis(0), &positions);
        let (emb, embed) = self.embedder.forward(&x_w, x_c.view())?;
        let (encoded, encoder) = self.encoder.forward(emb, rng);
        let probs = self.head.classify(encoded.view())?;
        Ok((
            probs,
            ForwardCache {
                embed,
                encoder,
                encoded,
            },
        ))
    }

    /// Backpropagates `d_logits` down to the lowest group in `trainable` and
    /// accumulates into `grads`. Tensors of frozen groups receive nothing.
    pub(crate) fn backward(
        &self,
        cache: &ForwardCache,
        d_logits: &Array2<f64>,
        grads: &mut TitleModel,
        trainable: &[LayerGroup],
    ) {
        let order = self.unfreeze_order();
        let Some(deepest) = order.iter().rposition(|g| trainable.contains(g)) else {
            return;
        };
        let mut scratch = self.zeros_like_structure_of(grads, trainable);
        let target: &mut TitleModel = scratch.as_mut().unwrap_or(grads);
        let d_enc = self.head.backward(&cache.encoded, d_logits, &mut target.head);
        let encoder_groups = order.len() - 1 - usize::from(order.last() == Some(&LayerGroup::Embedding));
        let d_emb = if deepest > 0 {
            self.encoder
                .backward(&cache.encoder, d_enc, &mut target.encoder, deepest)
        } else {
            None
        };
        if deepest > encoder_groups {
            if let Some(d) = d_emb {
                self.embedder.backward(&cache.embed, d, &mut target.embedder);
            }
        }
        if let Some(scratch) = scratch {
            for (g, s) in grads.tensors_mut().into_iter().zip(scratch.tensors()) {
                if trainable.contains(&g.group) {
                    let mut v = g.value;
                    v += &s.value;
                }
            }
        }
    }

    /// When some traversed group is frozen, gradients go to a scratch buffer
    /// first so that frozen tensors stay untouched in `grads`.
    fn zeros_like_structure_of(&self, grads: &TitleModel, trainable: &[LayerGroup]) -> Option<TitleModel> {
        let order = self.unfreeze_order();
        let deepest = order.iter().rposition(|g| trainable.contains(g))?;
        if order[..=deepest].iter().all(|g| trainable.contains(g)) {
            None
        } else {
            Some(grads.zeros_like())
        }
    }

    /// Loss of one labeled example; accumulates its gradient into `grads`.
    pub fn accumulate_gradients(
        &self,
        ex: &EncodedExample,
        weights: LossWeights,
        rng: Option<&mut ModelRng>,
        trainable: &[LayerGroup],
        grads: &mut TitleModel,
        scale: f64,
    ) -> Result<f64> {
        let labels = ex
            .labels
            .as_ref()
            .ok_or_else(|| Error::Shape("example has no labels".into()))?;
        let (probs, cache) = self.forward(ex, rng)?;
        let compact: Vec<u8> = ex.valid_positions().iter().map(|&i| labels[i]).collect();
        let (loss, mut d_logits) = head_loss::weighted_bce_with_grad(&probs, &compact, weights);
        d_logits *= scale;
        self.backward(&cache, &d_logits, grads, trainable);
        Ok(loss)
    }

    /// Loss and gradients of every trainable tensor for one example.
    pub fn loss_and_gradients(
        &self,
        ex: &EncodedExample,
        weights: LossWeights,
        rng: Option<&mut ModelRng>,
    ) -> Result<(f64, TitleModel)> {
        let mut grads = self.zeros_like();
        let all = self.unfreeze_order();
        let loss = self.accumulate_gradients(ex, weights, rng, &all, &mut grads, 1.0)?;
        Ok((loss, grads))
    }

    /// Weighted cross-entropy of one labeled example.
    pub fn loss(&self, ex: &EncodedExample, weights: LossWeights, rng: Option<&mut ModelRng>) -> Result<f64> {
        let labels = ex
            .labels
            .as_ref()
            .ok_or_else(|| Error::Shape("example has no labels".into()))?;
        let (probs, _) = self.forward(ex, rng)?;
        let mut full = vec![0.0; ex.max_len()];
        for (row, i) in ex.valid_positions().into_iter().enumerate() {
            full[i] = probs[[row, 1]];
        }
        head_loss::weighted_bce(&full, labels, &ex.mask, weights)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::AttentionKind;
    use crate::corpus::{encode_tokens, tokenize, Vocabulary};
    use crate::embedder::build_word_table;

    fn toy(config: ModelConfig) -> (TitleModel, EncodedExample) {
        let vocab = Vocabulary::build([tokenize("ab cd ef gh")]).unwrap();
        let mut rng = ModelRng::seed_from_u64(0);
        let (table, _) = build_word_table(&vocab, None, config.word_dim, &mut rng).unwrap();
        let model = TitleModel::new(config.clone(), Arc::new(table), vocab.char_count(), 11).unwrap();
        let ex = encode_tokens(&["ab", "gh", "zz"], Some(&[1, 0, 1]), &vocab, &config).unwrap();
        (model, ex)
    }

    #[test]
    fn unfreeze_order_follows_architecture() {
        let (m, _) = toy(ModelConfig::toy());
        assert_eq!(
            m.unfreeze_order(),
            vec![
                LayerGroup::Head,
                LayerGroup::Attention,
                LayerGroup::Recurrent(2),
                LayerGroup::Recurrent(1),
                LayerGroup::Recurrent(0),
                LayerGroup::Embedding
            ]
        );
        let (m, _) = toy(ModelConfig {
            attention: AttentionKind::None,
            recurrent_layers: 2,
            ..ModelConfig::toy()
        });
        assert_eq!(
            m.unfreeze_order(),
            vec![LayerGroup::Head, LayerGroup::Recurrent(1), LayerGroup::Recurrent(0), LayerGroup::Embedding]
        );
    }

    #[test]
    fn default_parameter_budget() {
        let vocab = Vocabulary::build([tokenize("a b")]).unwrap();
        let table = Arc::new(Array2::zeros((vocab.word_count(), 100)));
        let m = TitleModel::new(ModelConfig::default(), table, 69, 0).unwrap();
        // char table 69x16, conv 80x100+100, highway 2x2x(200x200+200),
        // LSTMs 2x(200x512+128x512+512) + 2x2x(256x512+128x512+512), W_s 256x256, head 256x2+2
        assert_eq!(m.parameter_count(), 1_361_430);
    }

    #[test]
    fn frozen_groups_get_no_gradient() {
        let (m, ex) = toy(ModelConfig::toy());
        let mut grads = m.zeros_like();
        m.accumulate_gradients(&ex, LossWeights::FINE_TUNE, None, &[LayerGroup::Head], &mut grads, 1.0)
            .unwrap();
        for t in grads.tensors() {
            let nonzero = t.value.iter().any(|&v| v != 0.0);
            assert_eq!(nonzero, t.group == LayerGroup::Head, "{}", t.name);
        }
        let mut grads = m.zeros_like();
        m.accumulate_gradients(&ex, LossWeights::FINE_TUNE, None, &[LayerGroup::Recurrent(0)], &mut grads, 1.0)
            .unwrap();
        for t in grads.tensors() {
            let nonzero = t.value.iter().any(|&v| v != 0.0);
            assert_eq!(nonzero, t.group == LayerGroup::Recurrent(0), "{}", t.name);
        }
    }

    #[test]
    fn all_tensors_receive_gradient_when_unfrozen() {
        let (m, ex) = toy(ModelConfig::toy());
        let (_, grads) = m.loss_and_gradients(&ex, LossWeights::FINE_TUNE, None).unwrap();
        for t in grads.tensors() {
            assert!(t.value.iter().any(|&v| v != 0.0), "{}", t.name);
        }
    }

    #[test]
    fn loss_agrees_with_gradient_path() {
        let (m, ex) = toy(ModelConfig::toy());
        let (l1, _) = m.loss_and_gradients(&ex, LossWeights::FINE_TUNE, None).unwrap();
        let l2 = m.loss(&ex, LossWeights::FINE_TUNE, None).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
    }

    #[test]
    fn predictions_are_zero_at_padding() {
        let (m, mut ex) = toy(ModelConfig::toy());
        ex.mask[2] = false;
        let p = m.predict(&ex).unwrap();
        assert_eq!(p[2], 0.0);
        assert!(p[0] > 0.0 && p[0] < 1.0);
    }

    /// Central differences over every trainable entry, compared per tensor
    /// by `|a - n| / max(|a|, |n|)` in the Euclidean norm.
    fn max_relative_error(config: ModelConfig, dropout_seed: Option<u64>) -> f64 {
        let (mut m, ex) = toy(config);
        // Spread the parameters so that every gradient is well above round-off.
        let mut init = ModelRng::seed_from_u64(17);
        for t in m.tensors_mut() {
            let mut v = t.value;
            v.mapv_inplace(|_| rand::Rng::random_range(&mut init, -1.0..1.0));
        }
        let w = LossWeights { alpha: 0.3, beta: 0.7, alpha_term: crate::head_loss::AlphaTerm::LabelOne };
        let rng = |seed: Option<u64>| seed.map(ModelRng::seed_from_u64);
        let mut r = rng(dropout_seed);
        let (_, grads) = m.loss_and_gradients(&ex, w, r.as_mut()).unwrap();
        let analytic: Vec<(String, Vec<f64>)> = grads
            .tensors()
            .into_iter()
            .map(|t| (t.name, t.value.iter().copied().collect()))
            .collect();
        let eps = 1e-6;
        let mut worst: f64 = 0.0;
        for (k, (name, a)) in analytic.iter().enumerate() {
            let mut numeric = Vec::with_capacity(a.len());
            for idx in 0..a.len() {
                let mut eval = |delta: f64| {
                    {
                        let mut ts = m.tensors_mut();
                        let v = ts[k].value.as_slice_mut().unwrap();
                        v[idx] += delta;
                    }
                    let mut r = rng(dropout_seed);
                    let l = m.loss(&ex, w, r.as_mut()).unwrap();
                    let mut ts = m.tensors_mut();
                    ts[k].value.as_slice_mut().unwrap()[idx] -= delta;
                    l
                };
                numeric.push((eval(eps) - eval(-eps)) / (2.0 * eps));
            }
            let diff: f64 = a.iter().zip(&numeric).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(numeric.iter().map(|x| x * x).sum::<f64>().sqrt());
            assert!(scale > 0.0, "{name} has a zero gradient");
            worst = worst.max(diff / scale);
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences_for_every_variant() {
        let variants = [
            ModelConfig::toy(),
            ModelConfig { attention: AttentionKind::Narrow { width: 3 }, ..ModelConfig::toy() },
            ModelConfig { attention: AttentionKind::MultiHead { heads: 2 }, ..ModelConfig::toy() },
            ModelConfig { attention: AttentionKind::None, recurrent_layers: 2, ..ModelConfig::toy() },
            ModelConfig { use_char_cnn: false, ..ModelConfig::toy() },
        ];
        for config in variants {
            let err = max_relative_error(config.clone(), None);
            assert!(err < 1e-4, "{config:?}: {err}");
        }
        assert!(max_relative_error(ModelConfig::toy(), Some(5)) < 1e-4);
    }
}

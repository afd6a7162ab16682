//! Stacked bidirectional LSTMs followed by multiplicative self-attention.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use crate::config::{AttentionKind, ModelConfig};
use crate::error::{Error, Result};
use crate::model::LayerGroup;
use crate::nn::{self, ModelRng, NamedTensor, NamedTensorMut};

/// One direction of an LSTM. Gate columns are ordered input, forget, cell, output.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmDirection {
    /// `in x 4h`
    pub w_input: Array2<f64>,
    /// `h x 4h`
    pub w_hidden: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Clone, Debug)]
pub(crate) struct LstmCache {
    x: Array2<f64>,
    /// Activated gates per step.
    gates: Array2<f64>,
    cells: Array2<f64>,
    hidden: Array2<f64>,
}

impl LstmDirection {
    pub fn new(input: usize, hidden: usize, rng: &mut ModelRng) -> Self {
        LstmDirection {
            w_input: nn::xavier_normal(input, 4 * hidden, rng),
            w_hidden: nn::xavier_normal(hidden, 4 * hidden, rng),
            bias: Array1::zeros(4 * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hidden.nrows()
    }

    /// Runs over the rows of `x` in order.
    pub(crate) fn forward(&self, x: Array2<f64>) -> (Array2<f64>, LstmCache) {
        let h = self.hidden();
        let steps = x.nrows();
        let projected = x.dot(&self.w_input) + &self.bias;
        let mut gates = Array2::<f64>::zeros((steps, 4 * h));
        let mut cells = Array2::zeros((steps, h));
        let mut hidden = Array2::zeros((steps, h));
        let mut h_prev = Array1::<f64>::zeros(h);
        let mut c_prev = Array1::<f64>::zeros(h);
        for t in 0..steps {
            let mut pre = projected.row(t).to_owned();
            pre += &h_prev.dot(&self.w_hidden);
            let mut g = gates.row_mut(t);
            for j in 0..h {
                g[j] = nn::sigmoid(pre[j]);
                g[h + j] = nn::sigmoid(pre[h + j]);
                g[2 * h + j] = pre[2 * h + j].tanh();
                g[3 * h + j] = nn::sigmoid(pre[3 * h + j]);
            }
            for j in 0..h {
                let c = g[h + j] * c_prev[j] + g[j] * g[2 * h + j];
                cells[[t, j]] = c;
                hidden[[t, j]] = g[3 * h + j] * c.tanh();
            }
            h_prev = hidden.row(t).to_owned();
            c_prev = cells.row(t).to_owned();
        }
        let out = hidden.clone();
        (
            out,
            LstmCache {
                x,
                gates,
                cells,
                hidden,
            },
        )
    }

    pub(crate) fn backward(
        &self,
        cache: &LstmCache,
        d_hidden: ArrayView2<f64>,
        grads: &mut LstmDirection,
    ) -> Array2<f64> {
        let h = self.hidden();
        let steps = cache.x.nrows();
        let mut d_pre = Array2::zeros((steps, 4 * h));
        let mut dh_next = Array1::<f64>::zeros(h);
        let mut dc_next = Array1::<f64>::zeros(h);
        for t in (0..steps).rev() {
            let g = cache.gates.row(t);
            let mut row = d_pre.row_mut(t);
            for j in 0..h {
                let (i, f, gg, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                let c = cache.cells[[t, j]];
                let c_prev = if t > 0 { cache.cells[[t - 1, j]] } else { 0.0 };
                let tc = c.tanh();
                let dh = d_hidden[[t, j]] + dh_next[j];
                let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
                row[j] = dc * gg * i * (1.0 - i);
                row[h + j] = dc * c_prev * f * (1.0 - f);
                row[2 * h + j] = dc * i * (1.0 - gg * gg);
                row[3 * h + j] = dh * tc * o * (1.0 - o);
                dc_next[j] = dc * f;
            }
            dh_next = self.w_hidden.dot(&row.view());
        }
        let mut h_prev = Array2::zeros((steps, h));
        if steps > 1 {
            h_prev
                .slice_mut(s![1.., ..])
                .assign(&cache.hidden.slice(s![..steps - 1, ..]));
        }
        grads.w_input += &cache.x.t().dot(&d_pre);
        grads.w_hidden += &h_prev.t().dot(&d_pre);
        grads.bias += &d_pre.sum_axis(Axis(0));
        d_pre.dot(&self.w_input.t())
    }
}

fn reversed(x: &Array2<f64>) -> Array2<f64> {
    x.slice(s![..;-1, ..]).to_owned()
}

/// Forward and backward LSTMs whose outputs are concatenated as `[h_f; h_b]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BiLstmLayer {
    pub forward: LstmDirection,
    pub backward: LstmDirection,
}

#[derive(Clone, Debug)]
pub(crate) struct BiLstmCache {
    forward: LstmCache,
    backward: LstmCache,
}

impl BiLstmLayer {
    pub fn new(input: usize, hidden: usize, rng: &mut ModelRng) -> Self {
        BiLstmLayer {
            forward: LstmDirection::new(input, hidden, rng),
            backward: LstmDirection::new(input, hidden, rng),
        }
    }

    pub(crate) fn run(&self, x: Array2<f64>) -> (Array2<f64>, BiLstmCache) {
        let x_rev = reversed(&x);
        let (hf, cf) = self.forward.forward(x);
        let (hb, cb) = self.backward.forward(x_rev);
        let out = ndarray::concatenate(Axis(1), &[hf.view(), hb.slice(s![..;-1, ..])])
            .expect("rows agree");
        (
            out,
            BiLstmCache {
                forward: cf,
                backward: cb,
            },
        )
    }

    pub(crate) fn backprop(
        &self,
        cache: &BiLstmCache,
        d_out: &Array2<f64>,
        grads: &mut BiLstmLayer,
    ) -> Array2<f64> {
        let h = self.forward.hidden();
        let d_f = d_out.slice(s![.., ..h]);
        let d_b = d_out.slice(s![..;-1, h..]);
        let dx_f = self.forward.backward(&cache.forward, d_f, &mut grads.forward);
        let dx_b = self.backward.backward(&cache.backward, d_b, &mut grads.backward);
        dx_f + dx_b.slice(s![..;-1, ..])
    }
}

/// Multiplicative self-attention `e_ij = x_i W x_j^T`, softmax over `j`,
/// readout `sum_j a_ij x_j`. Multi-head splits the features into equal slices
/// with one `W` per slice.
#[derive(Clone, Debug, PartialEq)]
pub struct SelfAttention {
    pub kind: AttentionKind,
    /// One square matrix per head; empty for [`AttentionKind::None`].
    pub weights: Vec<Array2<f64>>,
}

#[derive(Clone, Debug)]
pub(crate) struct AttentionCache {
    x: Array2<f64>,
    /// Attention weights per head.
    alphas: Vec<Array2<f64>>,
}

impl SelfAttention {
    pub fn new(kind: AttentionKind, dim: usize, rng: &mut ModelRng) -> Self {
        let heads = match kind {
            AttentionKind::None => 0,
            AttentionKind::Global | AttentionKind::Narrow { .. } => 1,
            AttentionKind::MultiHead { heads } => heads,
        };
        let head_dim = dim.checked_div(heads).unwrap_or(0);
        SelfAttention {
            kind,
            weights: (0..heads)
                .map(|_| nn::xavier_normal(head_dim, head_dim, rng))
                .collect(),
        }
    }

    fn allowed(&self, i: usize, j: usize) -> bool {
        match self.kind {
            AttentionKind::Narrow { width } => i.abs_diff(j) <= width / 2,
            _ => true,
        }
    }

    /// Attends over rows of `x`; masked rows neither attend nor are attended.
    /// Returns the encoding and the attention weights of every head.
    pub fn attend(&self, x: ArrayView2<f64>, mask: &[bool]) -> Result<(Array2<f64>, Vec<Array2<f64>>)> {
        let (n, dim) = x.dim();
        if mask.len() != n {
            return Err(Error::Shape(format!("{} mask entries for {n} rows", mask.len())));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::EmptyMask);
        }
        if self.weights.is_empty() {
            let mut out = x.to_owned();
            for (i, &m) in mask.iter().enumerate() {
                if !m {
                    out.row_mut(i).fill(0.0);
                }
            }
            return Ok((out, Vec::new()));
        }
        let head_dim = dim / self.weights.len();
        let mut out = Array2::zeros((n, dim));
        let mut alphas = Vec::with_capacity(self.weights.len());
        for (k, w) in self.weights.iter().enumerate() {
            if w.nrows() != head_dim {
                return Err(Error::Shape(format!("{dim} features do not fit head size {}", w.nrows())));
            }
            let cols = s![.., k * head_dim..(k + 1) * head_dim];
            let xk = x.slice(cols);
            let mut logits = xk.dot(w).dot(&xk.t());
            for i in 0..n {
                for j in 0..n {
                    if !mask[i] || !mask[j] || !self.allowed(i, j) {
                        logits[[i, j]] = f64::NEG_INFINITY;
                    }
                }
            }
            nn::softmax_rows(&mut logits);
            out.slice_mut(cols).assign(&logits.dot(&xk));
            alphas.push(logits);
        }
        Ok((out, alphas))
    }

    pub(crate) fn forward(&self, x: Array2<f64>) -> (Array2<f64>, AttentionCache) {
        let mask = vec![true; x.nrows()];
        let (out, alphas) = self.attend(x.view(), &mask).expect("unmasked input");
        (out, AttentionCache { x, alphas })
    }

    pub(crate) fn backward(
        &self,
        cache: &AttentionCache,
        d_out: &Array2<f64>,
        grads: &mut SelfAttention,
    ) -> Array2<f64> {
        if self.weights.is_empty() {
            return d_out.clone();
        }
        let dim = cache.x.ncols();
        let head_dim = dim / self.weights.len();
        let mut d_x = Array2::zeros(cache.x.dim());
        for (k, (w, alpha)) in self.weights.iter().zip(&cache.alphas).enumerate() {
            let cols = s![.., k * head_dim..(k + 1) * head_dim];
            let xk = cache.x.slice(cols);
            let d_o = d_out.slice(cols);
            let d_alpha = d_o.dot(&xk.t());
            let row_dot = (&d_alpha * alpha).sum_axis(Axis(1)).insert_axis(Axis(1));
            let d_logits = alpha * &(&d_alpha - &row_dot);
            grads.weights[k] += &xk.t().dot(&d_logits).dot(&xk);
            let mut d_xk = alpha.t().dot(&d_o);
            d_xk += &d_logits.dot(&xk).dot(&w.t());
            d_xk += &d_logits.t().dot(&xk).dot(w);
            d_x.slice_mut(cols).assign(&d_xk);
        }
        d_x
    }
}

/// Recurrent stack plus attention.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    pub layers: Vec<BiLstmLayer>,
    pub attention: SelfAttention,
    pub dropout: f64,
}

#[derive(Clone, Debug)]
pub(crate) struct EncoderCache {
    input_dropout: Option<Array2<f64>>,
    layers: Vec<(BiLstmCache, Option<Array2<f64>>)>,
    attention: AttentionCache,
    output_dropout: Option<Array2<f64>>,
}

impl Encoder {
    pub fn new(config: &ModelConfig, rng: &mut ModelRng) -> Self {
        let mut input = config.embedding_dim();
        let mut layers = Vec::with_capacity(config.recurrent_layers);
        for _ in 0..config.recurrent_layers {
            layers.push(BiLstmLayer::new(input, config.hidden, rng));
            input = 2 * config.hidden;
        }
        Encoder {
            layers,
            attention: SelfAttention::new(config.attention, config.encoding_dim(), rng),
            dropout: config.dropout,
        }
    }

    /// Runs the recurrent stack over the unmasked rows only; masked rows of
    /// the output are zero and do not influence the recurrence.
    pub fn bilstm_stack(&self, x_emb: ArrayView2<f64>, mask: &[bool]) -> Result<Array2<f64>> {
        if mask.len() != x_emb.nrows() {
            return Err(Error::Shape(format!("{} mask entries for {} rows", mask.len(), x_emb.nrows())));
        }
        let keep: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        let mut x = x_emb.select(Axis(0), &keep);
        for layer in &self.layers {
            x = layer.run(x).0;
        }
        let mut out = Array2::zeros((mask.len(), x.ncols()));
        for (row, &i) in keep.iter().enumerate() {
            out.row_mut(i).assign(&x.row(row));
        }
        Ok(out)
    }

    pub fn self_attention(&self, x_b: ArrayView2<f64>, mask: &[bool]) -> Result<Array2<f64>> {
        Ok(self.attention.attend(x_b, mask)?.0)
    }

    /// Full encoder over the unmasked rows of an embedded sequence. Dropout is
    /// applied only when `rng` is given.
    pub fn encode(
        &self,
        x_emb: ArrayView2<f64>,
        mask: &[bool],
        rng: Option<&mut ModelRng>,
    ) -> Result<Array2<f64>> {
        if !mask.iter().any(|&m| m) {
            return Err(Error::EmptyMask);
        }
        if mask.len() != x_emb.nrows() {
            return Err(Error::Shape(format!("{} mask entries for {} rows", mask.len(), x_emb.nrows())));
        }
        let keep: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        let (enc, _) = self.forward(x_emb.select(Axis(0), &keep), rng);
        let mut out = Array2::zeros((mask.len(), enc.ncols()));
        for (row, &i) in keep.iter().enumerate() {
            out.row_mut(i).assign(&enc.row(row));
        }
        Ok(out)
    }

    /// Encodes a compact (all-valid) sequence.
    pub(crate) fn forward(
        &self,
        x: Array2<f64>,
        mut rng: Option<&mut ModelRng>,
    ) -> (Array2<f64>, EncoderCache) {
        let (mut x, input_dropout) = nn::maybe_dropout(x, self.dropout, rng.as_deref_mut());
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, cache) = layer.run(x);
            let (y, drop) = nn::maybe_dropout(y, self.dropout, rng.as_deref_mut());
            layers.push((cache, drop));
            x = y;
        }
        let (y, attention) = self.attention.forward(x);
        let (y, output_dropout) = if self.attention.weights.is_empty() {
            (y, None)
        } else {
            nn::maybe_dropout(y, self.dropout, rng)
        };
        (
            y,
            EncoderCache {
                input_dropout,
                layers,
                attention,
                output_dropout,
            },
        )
    }

    /// Backpropagates through the attention and the top `depth` groups
    /// (attention counts as one when present). Returns the gradient w.r.t. the
    /// embedding when every recurrent layer was traversed.
    pub(crate) fn backward(
        &self,
        cache: &EncoderCache,
        d_out: Array2<f64>,
        grads: &mut Encoder,
        mut depth: usize,
    ) -> Option<Array2<f64>> {
        let mut d = nn::apply_mask(d_out, &cache.output_dropout);
        if !self.attention.weights.is_empty() {
            if depth == 0 {
                return None;
            }
            depth -= 1;
        }
        d = self.attention.backward(&cache.attention, &d, &mut grads.attention);
        for ((layer, (c, drop)), g) in self
            .layers
            .iter()
            .zip(&cache.layers)
            .zip(grads.layers.iter_mut())
            .rev()
        {
            if depth == 0 {
                return None;
            }
            depth -= 1;
            d = nn::apply_mask(d, drop);
            d = layer.backprop(c, &d, g);
        }
        Some(nn::apply_mask(d, &cache.input_dropout))
    }

    pub(crate) fn tensors(&self) -> Vec<NamedTensor<'_>> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let group = LayerGroup::Recurrent(i);
            for (dir, d) in [("forward", &layer.forward), ("backward", &layer.backward)] {
                out.push(NamedTensor { name: format!("recurrent.{i}.{dir}.w_input"), group, value: d.w_input.view().into_dyn() });
                out.push(NamedTensor { name: format!("recurrent.{i}.{dir}.w_hidden"), group, value: d.w_hidden.view().into_dyn() });
                out.push(NamedTensor { name: format!("recurrent.{i}.{dir}.bias"), group, value: d.bias.view().into_dyn() });
            }
        }
        for (k, w) in self.attention.weights.iter().enumerate() {
            out.push(NamedTensor { name: format!("attention.{k}.w_s"), group: LayerGroup::Attention, value: w.view().into_dyn() });
        }
        out
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<NamedTensorMut<'_>> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let group = LayerGroup::Recurrent(i);
            for (dir, d) in [("forward", &mut layer.forward), ("backward", &mut layer.backward)] {
                out.push(NamedTensorMut { name: format!("recurrent.{i}.{dir}.w_input"), group, value: d.w_input.view_mut().into_dyn() });
                out.push(NamedTensorMut { name: format!("recurrent.{i}.{dir}.w_hidden"), group, value: d.w_hidden.view_mut().into_dyn() });
                out.push(NamedTensorMut { name: format!("recurrent.{i}.{dir}.bias"), group, value: d.bias.view_mut().into_dyn() });
            }
        }
        for (k, w) in self.attention.weights.iter_mut().enumerate() {
            out.push(NamedTensorMut { name: format!("attention.{k}.w_s"), group: LayerGroup::Attention, value: w.view_mut().into_dyn() });
        }
        out
    }
}

//! Hybrid token embedding: frozen word vectors and a character CNN, fused by
//! a highway stack.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand_distr::{Distribution, Normal};

use crate::config::ModelConfig;
use crate::corpus::{EncodedExample, Vocabulary, PAD, UNK};
use crate::error::{Error, Result};
use crate::model::LayerGroup;
use crate::nn::{self, ModelRng, NamedTensor, NamedTensorMut};

/// Character-level convolution with max-pooling over character positions.
#[derive(Clone, Debug, PartialEq)]
pub struct CharCnn {
    /// `|V_char| x char_in_dim`
    pub char_table: Array2<f64>,
    /// `(conv_width * char_in_dim) x char_dim`
    pub filters: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Clone, Debug)]
pub(crate) struct CharCnnCache {
    ids: Array2<usize>,
    windows: Array2<f64>,
    activations: Array2<f64>,
    /// Row of `activations` that won the max for each (word, filter).
    argmax: Array2<usize>,
}

impl CharCnn {
    pub fn new(char_count: usize, config: &ModelConfig, rng: &mut ModelRng) -> Self {
        CharCnn {
            char_table: nn::uniform(char_count, config.char_in_dim, nn::UNIFORM_INIT, rng),
            filters: nn::xavier_normal(config.conv_width * config.char_in_dim, config.char_dim, rng),
            bias: Array1::zeros(config.char_dim),
        }
    }

    fn width(&self) -> usize {
        self.filters.nrows() / self.char_table.ncols()
    }

    pub(crate) fn forward(&self, ids: ArrayView2<usize>) -> Result<(Array2<f64>, CharCnnCache)> {
        let rows = self.char_table.nrows();
        if let Some(&id) = ids.iter().find(|&&id| id >= rows) {
            return Err(Error::IdOutOfRange { id, rows });
        }
        let (words, chars) = ids.dim();
        let e = self.char_table.ncols();
        let width = self.width();
        if chars < width {
            return Err(Error::Shape(format!("{chars} characters shorter than filter width {width}")));
        }
        let positions = chars - width + 1;
        let mut windows = Array2::zeros((words * positions, width * e));
        for w in 0..words {
            for p in 0..positions {
                let mut row = windows.row_mut(w * positions + p);
                for k in 0..width {
                    row.slice_mut(s![k * e..(k + 1) * e])
                        .assign(&self.char_table.row(ids[[w, p + k]]));
                }
            }
        }
        let mut activations = windows.dot(&self.filters) + &self.bias;
        activations.mapv_inplace(f64::tanh);
        let filters = self.filters.ncols();
        let mut out = Array2::zeros((words, filters));
        let mut argmax = Array2::zeros((words, filters));
        for w in 0..words {
            for f in 0..filters {
                let mut best = w * positions;
                for p in 1..positions {
                    if activations[[w * positions + p, f]] > activations[[best, f]] {
                        best = w * positions + p;
                    }
                }
                out[[w, f]] = activations[[best, f]];
                argmax[[w, f]] = best;
            }
        }
        let cache = CharCnnCache {
            ids: ids.to_owned(),
            windows,
            activations,
            argmax,
        };
        Ok((out, cache))
    }

    pub(crate) fn backward(&self, cache: &CharCnnCache, d_out: &Array2<f64>, grads: &mut CharCnn) {
        let mut d_pre = Array2::zeros(cache.activations.dim());
        for ((w, f), &row) in cache.argmax.indexed_iter() {
            let a = cache.activations[[row, f]];
            d_pre[[row, f]] += d_out[[w, f]] * (1.0 - a * a);
        }
        grads.filters += &cache.windows.t().dot(&d_pre);
        grads.bias += &d_pre.sum_axis(Axis(0));
        let d_windows = d_pre.dot(&self.filters.t());
        let e = self.char_table.ncols();
        let width = self.width();
        let positions = cache.ids.ncols() - width + 1;
        for (r, d_row) in d_windows.rows().into_iter().enumerate() {
            let (w, p) = (r / positions, r % positions);
            for k in 0..width {
                let id = cache.ids[[w, p + k]];
                let mut target = grads.char_table.row_mut(id);
                target += &d_row.slice(s![k * e..(k + 1) * e]);
            }
        }
    }
}

/// `y = g * relu(x W_t + b_t) + (1 - g) * x` with `g = sigmoid(x W_g + b_g)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HighwayLayer {
    pub transform_w: Array2<f64>,
    pub transform_b: Array1<f64>,
    pub gate_w: Array2<f64>,
    pub gate_b: Array1<f64>,
}

#[derive(Clone, Debug)]
pub(crate) struct HighwayCache {
    x: Array2<f64>,
    transform: Array2<f64>,
    gate: Array2<f64>,
}

impl HighwayLayer {
    pub fn new(dim: usize, rng: &mut ModelRng) -> Self {
        HighwayLayer {
            transform_w: nn::uniform(dim, dim, nn::UNIFORM_INIT, rng),
            transform_b: Array1::zeros(dim),
            gate_w: nn::uniform(dim, dim, nn::UNIFORM_INIT, rng),
            gate_b: Array1::zeros(dim),
        }
    }

    pub(crate) fn forward(&self, x: Array2<f64>) -> (Array2<f64>, HighwayCache) {
        let transform = (x.dot(&self.transform_w) + &self.transform_b).mapv(|v| v.max(0.0));
        let gate = (x.dot(&self.gate_w) + &self.gate_b).mapv(nn::sigmoid);
        let y = &gate * &transform + &(1.0 - &gate) * &x;
        (y, HighwayCache { x, transform, gate })
    }

    pub(crate) fn backward(
        &self,
        cache: &HighwayCache,
        d_y: &Array2<f64>,
        grads: &mut HighwayLayer,
    ) -> Array2<f64> {
        let HighwayCache { x, transform, gate } = cache;
        let d_transform_pre = (d_y * gate) * transform.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let d_gate_pre = (d_y * &(transform - x)) * gate.mapv(|g| g * (1.0 - g));
        grads.transform_w += &x.t().dot(&d_transform_pre);
        grads.transform_b += &d_transform_pre.sum_axis(Axis(0));
        grads.gate_w += &x.t().dot(&d_gate_pre);
        grads.gate_b += &d_gate_pre.sum_axis(Axis(0));
        d_y * &(1.0 - gate)
            + d_transform_pre.dot(&self.transform_w.t())
            + d_gate_pre.dot(&self.gate_w.t())
    }
}

/// Embedding layer. The word table is shared and never trained.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedder {
    pub word_table: Arc<Array2<f64>>,
    pub char_cnn: Option<CharCnn>,
    pub highway: Vec<HighwayLayer>,
}

#[derive(Clone, Debug)]
pub(crate) struct EmbedCache {
    char_cnn: Option<CharCnnCache>,
    highway: Vec<HighwayCache>,
}

impl Embedder {
    pub fn new(
        config: &ModelConfig,
        word_table: Arc<Array2<f64>>,
        char_count: usize,
        rng: &mut ModelRng,
    ) -> Result<Self> {
        if word_table.ncols() != config.word_dim {
            return Err(Error::Shape(format!(
                "word table has {} columns, config expects {}",
                word_table.ncols(),
                config.word_dim
            )));
        }
        let char_cnn = config
            .use_char_cnn
            .then(|| CharCnn::new(char_count, config, rng));
        let highway = (0..config.highway_layers)
            .map(|_| HighwayLayer::new(config.embedding_dim(), rng))
            .collect();
        Ok(Embedder {
            word_table,
            char_cnn,
            highway,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.word_table.ncols() + self.char_cnn.as_ref().map_or(0, |c| c.filters.ncols())
    }

    /// Row `i` is the word vector of `x_w[i]`.
    pub fn word_embed(&self, x_w: &[usize]) -> Result<Array2<f64>> {
        let rows = self.word_table.nrows();
        let mut out = Array2::zeros((x_w.len(), self.word_table.ncols()));
        for (i, &id) in x_w.iter().enumerate() {
            if id >= rows {
                return Err(Error::IdOutOfRange { id, rows });
            }
            out.row_mut(i).assign(&self.word_table.row(id));
        }
        Ok(out)
    }

    /// Character-level vector of every row of `x_c`.
    pub fn char_cnn_embed(&self, x_c: ArrayView2<usize>) -> Result<Array2<f64>> {
        let cnn = self
            .char_cnn
            .as_ref()
            .ok_or_else(|| Error::Config("model has no character CNN".into()))?;
        Ok(cnn.forward(x_c)?.0)
    }

    /// Runs the highway stack on `[c; w]`.
    pub fn highway_combine(&self, c: ArrayView1<f64>, w: ArrayView1<f64>) -> Result<Array1<f64>> {
        let joined = nn::concat_cols(c, w);
        if joined.len() != self.output_dim() {
            return Err(Error::Shape(format!(
                "highway input has {} features, expected {}",
                joined.len(),
                self.output_dim()
            )));
        }
        let mut x = joined.insert_axis(Axis(0));
        for layer in &self.highway {
            x = layer.forward(x).0;
        }
        Ok(x.row(0).to_owned())
    }

    /// Embeds all `max_len` positions, padding included.
    pub fn embed_sequence(&self, ex: &EncodedExample) -> Result<Array2<f64>> {
        if ex.x_c.nrows() != ex.x_w.len() || ex.mask.len() != ex.x_w.len() {
            return Err(Error::Shape(format!(
                "x_w has {} rows, x_c {}, mask {}",
                ex.x_w.len(),
                ex.x_c.nrows(),
                ex.mask.len()
            )));
        }
        Ok(self.forward(&ex.x_w, ex.x_c.view())?.0)
    }

    pub(crate) fn forward(
        &self,
        x_w: &[usize],
        x_c: ArrayView2<usize>,
    ) -> Result<(Array2<f64>, EmbedCache)> {
        let words = self.word_embed(x_w)?;
        let (mut x, char_cache) = match &self.char_cnn {
            Some(cnn) => {
                let (chars, cache) = cnn.forward(x_c)?;
                let joined = ndarray::concatenate(Axis(1), &[chars.view(), words.view()])
                    .expect("rows agree");
                (joined, Some(cache))
            }
            None => (words, None),
        };
        let mut highway = Vec::with_capacity(self.highway.len());
        for layer in &self.highway {
            let (y, cache) = layer.forward(x);
            highway.push(cache);
            x = y;
        }
        Ok((
            x,
            EmbedCache {
                char_cnn: char_cache,
                highway,
            },
        ))
    }

    pub(crate) fn backward(&self, cache: &EmbedCache, d_out: Array2<f64>, grads: &mut Embedder) {
        let mut d = d_out;
        for ((layer, c), g) in self
            .highway
            .iter()
            .zip(&cache.highway)
            .zip(grads.highway.iter_mut())
            .rev()
        {
            d = layer.backward(c, &d, g);
        }
        if let (Some(cnn), Some(c), Some(g)) = (&self.char_cnn, &cache.char_cnn, grads.char_cnn.as_mut())
        {
            let char_dim = cnn.filters.ncols();
            let d_chars = d.slice(s![.., ..char_dim]).to_owned();
            cnn.backward(c, &d_chars, g);
        }
        // The word half of `d` stops here: the word table is frozen.
    }

    pub(crate) fn tensors(&self) -> Vec<NamedTensor<'_>> {
        let g = LayerGroup::Embedding;
        let mut out = Vec::new();
        if let Some(cnn) = &self.char_cnn {
            out.push(NamedTensor { name: "char_cnn.char_table".into(), group: g, value: cnn.char_table.view().into_dyn() });
            out.push(NamedTensor { name: "char_cnn.filters".into(), group: g, value: cnn.filters.view().into_dyn() });
            out.push(NamedTensor { name: "char_cnn.bias".into(), group: g, value: cnn.bias.view().into_dyn() });
        }
        for (i, h) in self.highway.iter().enumerate() {
            out.push(NamedTensor { name: format!("highway.{i}.transform_w"), group: g, value: h.transform_w.view().into_dyn() });
            out.push(NamedTensor { name: format!("highway.{i}.transform_b"), group: g, value: h.transform_b.view().into_dyn() });
            out.push(NamedTensor { name: format!("highway.{i}.gate_w"), group: g, value: h.gate_w.view().into_dyn() });
            out.push(NamedTensor { name: format!("highway.{i}.gate_b"), group: g, value: h.gate_b.view().into_dyn() });
        }
        out
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<NamedTensorMut<'_>> {
        let g = LayerGroup::Embedding;
        let mut out = Vec::new();
        if let Some(cnn) = &mut self.char_cnn {
            out.push(NamedTensorMut { name: "char_cnn.char_table".into(), group: g, value: cnn.char_table.view_mut().into_dyn() });
            out.push(NamedTensorMut { name: "char_cnn.filters".into(), group: g, value: cnn.filters.view_mut().into_dyn() });
            out.push(NamedTensorMut { name: "char_cnn.bias".into(), group: g, value: cnn.bias.view_mut().into_dyn() });
        }
        for (i, h) in self.highway.iter_mut().enumerate() {
            out.push(NamedTensorMut { name: format!("highway.{i}.transform_w"), group: g, value: h.transform_w.view_mut().into_dyn() });
            out.push(NamedTensorMut { name: format!("highway.{i}.transform_b"), group: g, value: h.transform_b.view_mut().into_dyn() });
            out.push(NamedTensorMut { name: format!("highway.{i}.gate_w"), group: g, value: h.gate_w.view_mut().into_dyn() });
            out.push(NamedTensorMut { name: format!("highway.{i}.gate_b"), group: g, value: h.gate_b.view_mut().into_dyn() });
        }
        out
    }
}

/// Pre-trained vectors in the plain text format `word v1 ... vd`.
#[derive(Clone, Debug, Default)]
pub struct WordVectors {
    pub dim: usize,
    pub vectors: HashMap<String, Vec<f64>>,
}

impl WordVectors {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(BufReader::new(File::open(path)?))
    }

    /// Writes the text format, words sorted, without a header line.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        let mut words: Vec<&String> = self.vectors.keys().collect();
        words.sort();
        for w in words {
            write!(out, "{w}")?;
            for v in &self.vectors[w] {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Parses the text format. A leading `count dim` header line is skipped.
    pub fn parse(reader: impl BufRead) -> Result<Self> {
        let mut out = WordVectors::default();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let mut fields = line.split_whitespace();
            let Some(word) = fields.next() else { continue };
            let values: Vec<&str> = fields.collect();
            if idx == 0 && values.len() == 1 && word.parse::<usize>().is_ok() && values[0].parse::<usize>().is_ok() {
                continue;
            }
            let vector = values
                .iter()
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Shape(format!("line {}: {e}", idx + 1)))?;
            if out.dim == 0 {
                out.dim = vector.len();
            } else if vector.len() != out.dim {
                return Err(Error::Shape(format!(
                    "line {}: {} values, expected {}",
                    idx + 1,
                    vector.len(),
                    out.dim
                )));
            }
            out.vectors.insert(word.to_owned(), vector);
        }
        Ok(out)
    }
}

/// Coverage of the vocabulary by the pre-trained vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Coverage {
    pub present: usize,
    pub missing: usize,
}

/// Builds the frozen `|V| x dim` table. PAD is all zeros; words without a
/// vector share the UNK row, which is the mean of the present vectors. With
/// no vectors at all, every word receives a seeded random vector.
pub fn build_word_table(
    vocab: &Vocabulary,
    vectors: Option<&WordVectors>,
    dim: usize,
    rng: &mut ModelRng,
) -> Result<(Array2<f64>, Coverage)> {
    if let Some(v) = vectors {
        if v.dim != dim && !v.vectors.is_empty() {
            return Err(Error::Shape(format!("vectors have {} dims, config expects {dim}", v.dim)));
        }
    }
    let mut table = Array2::zeros((vocab.word_count(), dim));
    let mut present = vec![false; vocab.word_count()];
    let normal = Normal::new(0.0, 1.0 / (dim as f64).sqrt()).expect("finite std");
    for (id, word) in vocab.words() {
        match vectors {
            Some(v) => {
                if let Some(vec) = v.vectors.get(word) {
                    table.row_mut(id).assign(&ArrayView1::from(vec.as_slice()));
                    present[id] = true;
                }
            }
            None => {
                table.row_mut(id).mapv_inplace(|_| normal.sample(rng));
                present[id] = true;
            }
        }
    }
    let n_present = present.iter().filter(|&&p| p).count();
    let mut unk = Array1::zeros(dim);
    for (id, _) in vocab.words().filter(|(id, _)| present[*id]) {
        unk += &table.row(id);
    }
    if n_present > 0 {
        unk /= n_present as f64;
    }
    table.row_mut(UNK).assign(&unk);
    for (id, _) in vocab.words().filter(|(id, _)| !present[*id]) {
        table.row_mut(id).assign(&unk);
    }
    table.row_mut(PAD).fill(0.0);
    let regular = vocab.word_count() - 2;
    Ok((
        table,
        Coverage {
            present: n_present,
            missing: regular - n_present,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{encode_tokens, tokenize};
    use rand::SeedableRng;

    fn setup(config: &ModelConfig) -> (Vocabulary, Embedder) {
        let vocab = Vocabulary::build([tokenize("fruit cake , 13 oz"), tokenize("greek yogurt")]).unwrap();
        let mut rng = ModelRng::seed_from_u64(1);
        let (table, _) = build_word_table(&vocab, None, config.word_dim, &mut rng).unwrap();
        let emb = Embedder::new(config, Arc::new(table), vocab.char_count(), &mut rng).unwrap();
        (vocab, emb)
    }

    fn config() -> ModelConfig {
        ModelConfig {
            max_len: 5,
            max_word_len: 6,
            word_dim: 4,
            char_in_dim: 3,
            char_dim: 5,
            conv_width: 3,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn word_lookup() {
        let (vocab, emb) = setup(&config());
        let id = vocab.word_id("cake");
        let out = emb.word_embed(&[PAD, id, id]).unwrap();
        assert!(out.row(0).iter().all(|&v| v == 0.0));
        assert_eq!(out.row(1), out.row(2));
        assert_eq!(out.row(1), emb.word_table.row(id));
        assert!(matches!(emb.word_embed(&[999]), Err(Error::IdOutOfRange { id: 999, .. })));
    }

    #[test]
    fn all_pad_words_share_one_char_vector() {
        let (_, emb) = setup(&config());
        let ids = Array2::from_elem((2, 6), PAD);
        let out = emb.char_cnn_embed(ids.view()).unwrap();
        assert_eq!(out.row(0), out.row(1));
        assert_eq!(out.ncols(), 5);
    }

    #[test]
    fn char_permutation_beyond_filter_width_changes_output() {
        let (vocab, emb) = setup(&config());
        let a = encode_tokens(&["yogurt"], None, &vocab, &config()).unwrap();
        let b = encode_tokens(&["tyogur"], None, &vocab, &config()).unwrap();
        let ea = emb.char_cnn_embed(a.x_c.slice(s![0..1, ..])).unwrap();
        let eb = emb.char_cnn_embed(b.x_c.slice(s![0..1, ..])).unwrap();
        assert_ne!(ea, eb);
    }

    #[test]
    fn highway_gate_limits() {
        let (_, mut emb) = setup(&config());
        let c = Array1::from(vec![0.3, -0.2, 0.1, 0.5, -0.4]);
        let w = Array1::from(vec![0.7, -0.1, 0.2, 0.9]);
        let joined = nn::concat_cols(c.view(), w.view());
        for layer in &mut emb.highway {
            layer.gate_b.fill(-1e4);
        }
        assert_eq!(emb.highway_combine(c.view(), w.view()).unwrap(), joined);

        // single layer with the gate fully open outputs relu(x W + b)
        emb.highway.truncate(1);
        emb.highway[0].gate_b.fill(1e4);
        let expected = (joined.dot(&emb.highway[0].transform_w) + &emb.highway[0].transform_b)
            .mapv(|v| v.max(0.0));
        let got = emb.highway_combine(c.view(), w.view()).unwrap();
        for (a, b) in got.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sequence_shape_and_padding_rows() {
        let cfg = config();
        let (vocab, emb) = setup(&cfg);
        let a = encode_tokens(&["fruit", "cake"], None, &vocab, &cfg).unwrap();
        let b = encode_tokens(&["greek", "yogurt", ",", "13"], None, &vocab, &cfg).unwrap();
        let ea = emb.embed_sequence(&a).unwrap();
        let eb = emb.embed_sequence(&b).unwrap();
        assert_eq!(ea.dim(), (5, 9));
        assert_eq!(ea.row(4), eb.row(4));
        assert_ne!(ea.row(0), eb.row(0));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let cfg = config();
        let (vocab, emb) = setup(&cfg);
        let mut ex = encode_tokens(&["cake"], None, &vocab, &cfg).unwrap();
        ex.mask.pop();
        assert!(matches!(emb.embed_sequence(&ex), Err(Error::Shape(_))));
    }

    #[test]
    fn word_table_from_vectors() {
        let vocab = Vocabulary::build([tokenize("a b c")]).unwrap();
        let text = "2 2\na 1 2\nb 3 4\nzz 9 9\n";
        let vectors = WordVectors::parse(text.as_bytes()).unwrap();
        let mut rng = ModelRng::seed_from_u64(0);
        let (table, coverage) = build_word_table(&vocab, Some(&vectors), 2, &mut rng).unwrap();
        assert_eq!(coverage, Coverage { present: 2, missing: 1 });
        assert_eq!(table.row(PAD).to_vec(), vec![0.0, 0.0]);
        assert_eq!(table.row(UNK).to_vec(), vec![2.0, 3.0]);
        assert_eq!(table.row(vocab.word_id("c")).to_vec(), vec![2.0, 3.0]);
        assert_eq!(table.row(vocab.word_id("b")).to_vec(), vec![3.0, 4.0]);
        assert!(build_word_table(&vocab, Some(&vectors), 3, &mut rng).is_err());
        assert!(WordVectors::parse("a 1 2\nb 1\n".as_bytes()).is_err());
    }

    #[test]
    fn vectors_save_and_parse_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.txt");
        let mut v = WordVectors { dim: 2, ..Default::default() };
        v.vectors.insert("oz".into(), vec![0.1, -1.0 / 3.0]);
        v.vectors.insert("13".into(), vec![2.5e-300, 7.0]);
        v.save(&path).unwrap();
        let back = WordVectors::load(&path).unwrap();
        assert_eq!(back.dim, 2);
        assert_eq!(back.vectors, v.vectors);
    }
}

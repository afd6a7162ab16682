//! Skip-gram context model trained with negative sampling.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn;

/// Anything that yields `log P(w | c)` over a fixed token alphabet whose ids
/// are ordered by decreasing corpus frequency.
pub trait ContextModel {
    fn vocab_len(&self) -> usize;
    /// Context radius `n` the model was trained with.
    fn window(&self) -> usize;
    fn id_of(&self, token: &str) -> Option<usize>;
    fn token(&self, id: usize) -> &str;
    /// `log P(w | context)` for every `w`.
    fn log_probs(&self, context: usize) -> Vec<f64>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkipGramConfig {
    /// Context radius `n`; the window holds `2n + 1` tokens.
    pub window: usize,
    pub dim: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            window: 2,
            dim: 64,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkipGramModel {
    pub words: Vec<String>,
    pub counts: Vec<u64>,
    pub window: usize,
    /// Center-word vectors, `|V| x dim`.
    pub input: Array2<f64>,
    /// Context-word vectors, `|V| x dim`.
    pub output: Array2<f64>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

/// Cumulative unigram^0.75 distribution for drawing negatives.
struct NoiseTable {
    cumulative: Vec<f64>,
}

impl NoiseTable {
    fn new(counts: &[u64]) -> Self {
        let mut acc = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(0.75);
                acc
            })
            .collect();
        NoiseTable { cumulative }
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        let total = *self.cumulative.last().expect("non-empty vocabulary");
        let u = rng.random::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }
}

impl SkipGramModel {
    /// Trains on tokenized titles. Windows never cross title boundaries.
    pub fn train<T: AsRef<[String]>>(titles: &[T], config: &SkipGramConfig) -> Result<Self> {
        if config.window == 0 || config.dim == 0 {
            return Err(Error::Config("skip-gram window and dim must be positive".into()));
        }
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for title in titles {
            for tok in title.as_ref() {
                *counts.entry(tok.as_str()).or_default() += 1;
            }
        }
        if counts.is_empty() {
            return Err(Error::EmptyCorpus("no tokens to train the skip-gram model on".into()));
        }
        let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let words: Vec<String> = ranked.iter().map(|(w, _)| (*w).to_owned()).collect();
        let counts: Vec<u64> = ranked.iter().map(|(_, c)| *c).collect();
        let index: HashMap<String, usize> = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let v = words.len();
        let dim = config.dim;
        let mut input = nn::uniform(v, dim, 0.5 / dim as f64, &mut rng);
        let mut output = Array2::zeros((v, dim));
        let noise = NoiseTable::new(&counts);

        let encoded: Vec<Vec<usize>> = titles
            .iter()
            .map(|t| t.as_ref().iter().map(|w| index[w.as_str()]).collect())
            .collect();
        let pairs_per_epoch: usize = encoded
            .iter()
            .map(|t| {
                (0..t.len())
                    .map(|i| i.min(config.window) + (t.len() - 1 - i).min(config.window))
                    .sum::<usize>()
            })
            .sum();
        let total = (pairs_per_epoch * config.epochs).max(1) as f64;
        let mut seen = 0usize;
        let mut grad_center = Array1::<f64>::zeros(dim);
        for _ in 0..config.epochs {
            for title in &encoded {
                for (i, &center) in title.iter().enumerate() {
                    let lo = i.saturating_sub(config.window);
                    let hi = (i + config.window).min(title.len() - 1);
                    for (j, &context) in title.iter().enumerate().take(hi + 1).skip(lo) {
                        if j == i {
                            continue;
                        }
                        let lr = (config.learning_rate * (1.0 - seen as f64 / total))
                            .max(config.learning_rate * 1e-4);
                        seen += 1;
                        grad_center.fill(0.0);
                        for k in 0..=config.negatives {
                            let (target, label) = if k == 0 {
                                (context, 1.0)
                            } else {
                                let t = noise.sample(&mut rng);
                                if t == context {
                                    continue;
                                }
                                (t, 0.0)
                            };
                            let score = input.row(center).dot(&output.row(target));
                            let g = (label - nn::sigmoid(score)) * lr;
                            grad_center.scaled_add(g, &output.row(target));
                            let center_row = input.row(center).to_owned();
                            output.row_mut(target).scaled_add(g, &center_row);
                        }
                        input.row_mut(center).scaled_add(1.0, &grad_center);
                    }
                }
            }
        }
        Ok(SkipGramModel {
            words,
            counts,
            window: config.window,
            input,
            output,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.input.ncols()
    }

    fn rebuild_index(&mut self) {
        self.index = self.words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut model: SkipGramModel = serde_json::from_str(&fs::read_to_string(path)?)?;
        model.rebuild_index();
        Ok(model)
    }

    /// Center-word vectors as pre-trained word vectors.
    pub fn word_vectors(&self) -> crate::embedder::WordVectors {
        crate::embedder::WordVectors {
            dim: self.dim(),
            vectors: self
                .words
                .iter()
                .enumerate()
                .map(|(i, w)| (w.clone(), self.input.row(i).to_vec()))
                .collect(),
        }
    }
}

impl ContextModel for SkipGramModel {
    fn vocab_len(&self) -> usize {
        self.words.len()
    }

    fn window(&self) -> usize {
        self.window
    }

    fn id_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    fn token(&self, id: usize) -> &str {
        &self.words[id]
    }

    /// Full softmax of `output[w] . input[c]` over the vocabulary.
    fn log_probs(&self, context: usize) -> Vec<f64> {
        let scores = self.output.dot(&self.input.row(context));
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        scores.iter().map(|s| s - log_z).collect()
    }
}

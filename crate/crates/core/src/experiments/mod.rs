//! Ablations, the low-resource sweep, checkpoints and reports.

pub mod ablation;
pub mod checkpoint;
pub mod report;
pub mod sweep;

use std::sync::Arc;

use ndarray::Array2;
use rand::SeedableRng;

pub use ablation::{run_ablation, run_ablation_by_name, AblationResult, AblationSpec};
pub use checkpoint::{load_checkpoint, load_into, save_checkpoint, LoadedCheckpoint};
pub use report::{emit_report, plot_sweep};
pub use sweep::{low_resource_sweep, nested_subsample, SweepRecord, DEFAULT_FRACTIONS};

use crate::config::ModelConfig;
use crate::corpus::{encode_example, encode_tokens, normalize_text, tokenize, EncodedExample, RawTitlePair, Split, Vocabulary};
use crate::embedder::{build_word_table, Coverage, WordVectors};
use crate::error::Result;
use crate::model::TitleModel;
use crate::nn::ModelRng;
use crate::pretrain::PretrainExample;
use crate::train_eval::{train, Selection, TrainReport, TrainingConfig, Unfreezing};

/// Encoded splits sharing one vocabulary and one frozen word table.
#[derive(Clone, Debug)]
pub struct Datasets {
    pub vocab: Vocabulary,
    pub word_table: Arc<Array2<f64>>,
    pub coverage: Coverage,
    pub train: Vec<EncodedExample>,
    pub val: Vec<EncodedExample>,
    pub test: Vec<EncodedExample>,
}

impl Datasets {
    /// The vocabulary comes from the training long titles only.
    pub fn from_split(
        split: &Split<RawTitlePair>,
        vectors: Option<&WordVectors>,
        config: &ModelConfig,
        seed: u64,
    ) -> Result<Self> {
        let vocab = Vocabulary::build(split.train.iter().map(|p| tokenize(&normalize_text(&p.long))))?;
        Self::with_vocab(vocab, split, vectors, config, seed)
    }

    /// Like [`Datasets::from_split`] with a vocabulary built elsewhere.
    pub fn with_vocab(
        vocab: Vocabulary,
        split: &Split<RawTitlePair>,
        vectors: Option<&WordVectors>,
        config: &ModelConfig,
        seed: u64,
    ) -> Result<Self> {
        let (table, coverage) = build_word_table(&vocab, vectors, config.word_dim, &mut ModelRng::seed_from_u64(seed))?;
        let encode = |pairs: &[RawTitlePair]| -> Result<Vec<EncodedExample>> {
            pairs.iter().map(|p| encode_example(p, &vocab, config)).collect()
        };
        Ok(Datasets {
            train: encode(&split.train)?,
            val: encode(&split.val)?,
            test: encode(&split.test)?,
            vocab,
            word_table: Arc::new(table),
            coverage,
        })
    }

    /// A freshly initialized model over this vocabulary and word table.
    pub fn new_model(&self, config: ModelConfig, seed: u64) -> Result<TitleModel> {
        TitleModel::new(config, self.word_table.clone(), self.vocab.char_count(), seed)
    }
}

pub fn encode_pretraining(corpus: &[PretrainExample], vocab: &Vocabulary, config: &ModelConfig) -> Result<Vec<EncodedExample>> {
    corpus
        .iter()
        .map(|ex| encode_tokens(&ex.tokens, Some(&ex.labels), vocab, config))
        .collect()
}

/// Trains the whole network as a replaced-token detector, selecting on
/// validation token accuracy.
pub fn pretrain_network(
    model: &mut TitleModel,
    train_set: &[EncodedExample],
    val_set: &[EncodedExample],
    training: &TrainingConfig,
) -> Result<TrainReport> {
    let config = TrainingConfig {
        selection: Selection::TokenAccuracy,
        unfreezing: Unfreezing::All,
        ..training.clone()
    };
    train(model, train_set, val_set, &config)
}

//! Extractive product-title compression as binary sequence labeling.
//!
//! A title is embedded with frozen word vectors fused with a character CNN
//! through a highway stack, encoded by stacked bidirectional LSTMs and
//! multiplicative self-attention, and labeled keep/delete per token. The same
//! network is pre-trained as a replaced-token detector on unlabeled titles,
//! with replacements chosen by a skip-gram context model.

pub mod config;
pub mod corpus;
pub mod embedder;
pub mod encoder;
pub mod experiments;
pub mod error;
pub mod head_loss;
pub mod model;
pub mod nn;
pub mod pretrain;
pub mod synthetic;
pub mod train_eval;

pub use config::{AttentionKind, ModelConfig};
pub use error::{Error, Result};
pub use head_loss::{AlphaTerm, LossWeights};
pub use model::{LayerGroup, TitleModel};

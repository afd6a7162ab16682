//! Replaced-token-detection pre-training data.

pub mod corruption;
pub mod skipgram;

pub use corruption::{
    build_pretraining_corpus, context_window, plan_corruption, replacement_score, round_count,
    select_replacement, CorruptionConfig, CorruptionPlan, PretrainExample, Replacer,
};
pub use skipgram::{ContextModel, SkipGramConfig, SkipGramModel};

use crate::error::Result;
use crate::head_loss::LossWeights;

/// `alpha = median_len * f / N`, `beta = 1 - alpha`: the expected share of
/// replaced positions in a padded corrupted sequence.
pub fn pretrain_class_weights(median_len: f64, fraction: f64, max_len: usize) -> Result<LossWeights> {
    LossWeights::from_alpha(median_len * fraction / max_len as f64)
}

/// Median token count; the mean of the middle pair for even counts.
pub fn median_length<T: AsRef<[String]>>(titles: &[T]) -> Option<f64> {
    let mut lens: Vec<usize> = titles.iter().map(|t| t.as_ref().len()).collect();
    if lens.is_empty() {
        return None;
    }
    lens.sort_unstable();
    let mid = lens.len() / 2;
    Some(if lens.len() % 2 == 1 {
        lens[mid] as f64
    } else {
        (lens[mid - 1] + lens[mid]) as f64 / 2.0
    })
}

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::vocab::{Vocabulary, PAD};
use super::{normalize_text, tokenize, RawTitlePair};
use crate::config::ModelConfig;
use crate::error::{Error, Result};

/// A title turned into fixed-size id tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodedExample {
    /// Surface tokens of the unpadded prefix (at most `max_len`).
    pub tokens: Vec<String>,
    /// Word ids, length `max_len`.
    pub x_w: Vec<usize>,
    /// Character ids, `max_len x max_word_len`.
    pub x_c: Array2<usize>,
    /// `true` for real tokens.
    pub mask: Vec<bool>,
    /// Per-position 0/1 labels, zero wherever the mask is off.
    pub labels: Option<Vec<u8>>,
}

impl EncodedExample {
    pub fn max_len(&self) -> usize {
        self.x_w.len()
    }

    /// Indices of the unmasked positions, ascending.
    pub fn valid_positions(&self) -> Vec<usize> {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }

    pub fn valid_len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Maps word ids back to tokens, dropping padding.
    pub fn decode(&self, vocab: &Vocabulary) -> Vec<String> {
        self.x_w
            .iter()
            .zip(&self.mask)
            .filter(|(_, &m)| m)
            .map(|(&id, _)| vocab.word(id).unwrap_or_default().to_owned())
            .collect()
    }

    /// Tokens whose gold label is 1, space-joined.
    pub fn gold_summary(&self) -> Option<String> {
        self.labels
            .as_ref()
            .map(|labels| crate::head_loss::extract_short_title(&self.tokens, labels))
    }
}

/// Labels each long-title token 1 if it is consumed by a greedy, in-order
/// match of the short-title tokens (earliest unused position wins).
pub fn align_labels<S: AsRef<str>>(long: &[S], short: &[S]) -> Result<Vec<u8>> {
    let mut labels = vec![0u8; long.len()];
    let mut cursor = 0;
    for token in short {
        let token = token.as_ref();
        let found = long[cursor..]
            .iter()
            .position(|t| t.as_ref() == token)
            .ok_or_else(|| Error::Alignment {
                token: token.to_owned(),
            })?;
        labels[cursor + found] = 1;
        cursor += found + 1;
    }
    Ok(labels)
}

/// Encodes an already tokenized title with optional labels of the same length.
pub fn encode_tokens<S: AsRef<str>>(
    tokens: &[S],
    labels: Option<&[u8]>,
    vocab: &Vocabulary,
    config: &ModelConfig,
) -> Result<EncodedExample> {
    if tokens.is_empty() {
        return Err(Error::EmptyTitle);
    }
    if let Some(labels) = labels {
        if labels.len() != tokens.len() {
            return Err(Error::Shape(format!(
                "{} labels for {} tokens",
                labels.len(),
                tokens.len()
            )));
        }
    }
    let n = config.max_len;
    let c = config.max_word_len;
    let kept = tokens.len().min(n);
    let mut x_w = vec![PAD; n];
    let mut x_c = Array2::from_elem((n, c), PAD);
    let mut mask = vec![false; n];
    for (i, token) in tokens[..kept].iter().enumerate() {
        let token = token.as_ref();
        x_w[i] = vocab.word_id(token);
        mask[i] = true;
        for (j, ch) in token.chars().take(c).enumerate() {
            x_c[[i, j]] = vocab.char_id(ch);
        }
    }
    let labels = labels.map(|l| {
        let mut padded = vec![0u8; n];
        padded[..kept].copy_from_slice(&l[..kept]);
        padded
    });
    Ok(EncodedExample {
        tokens: tokens[..kept].iter().map(|t| t.as_ref().to_owned()).collect(),
        x_w,
        x_c,
        mask,
        labels,
    })
}

/// Encodes a long/short pair; labels come from aligning the short title.
pub fn encode_example(
    pair: &RawTitlePair,
    vocab: &Vocabulary,
    config: &ModelConfig,
) -> Result<EncodedExample> {
    let long = tokenize(&normalize_text(&pair.long));
    if long.is_empty() {
        return Err(Error::EmptyTitle);
    }
    let labels = match &pair.short {
        Some(short) => Some(align_labels(&long, &tokenize(&normalize_text(short)))?),
        None => None,
    };
    encode_tokens(&long, labels.as_deref(), vocab, config)
}

//! Title normalization, tokenization, vocabularies, encoding and dataset files.

mod encode;
mod jsonl;
mod vocab;

pub use encode::{align_labels, encode_example, encode_tokens, EncodedExample};
pub use jsonl::{read_jsonl, write_jsonl};
pub use vocab::{Vocabulary, PAD, PAD_TOKEN, UNK, UNK_TOKEN};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A long product title with its optional human-written compression.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTitlePair {
    pub long: String,
    pub short: Option<String>,
}

impl RawTitlePair {
    pub fn new(long: impl Into<String>, short: Option<&str>) -> Self {
        RawTitlePair {
            long: long.into(),
            short: short.map(str::to_owned),
        }
    }

    /// Checks that the short title is an in-order subsequence of the long one.
    pub fn validate(&self) -> Result<()> {
        if let Some(short) = &self.short {
            let long = tokenize(&normalize_text(&self.long));
            align_labels(&long, &tokenize(&normalize_text(short)))?;
        }
        Ok(())
    }
}

/// Lowercases, rewrites `&` as `and`, pads commas with spaces and squeezes
/// whitespace runs into single spaces.
pub fn normalize_text(raw: &str) -> String {
    let mut expanded = String::with_capacity(raw.len() + 8);
    for c in raw.chars() {
        match c {
            '&' => expanded.push_str("and"),
            ',' => expanded.push_str(" , "),
            _ => expanded.push(c),
        }
    }
    expanded
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn tokenize(normalized: &str) -> Vec<String> {
    normalized.split_whitespace().map(str::to_owned).collect()
}

/// Train/validation/test partition.
#[derive(Clone, Debug, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

pub const MIN_SPLIT_SIZE: usize = 10;
const TEST_FRACTION: f64 = 0.20;
const VAL_FRACTION: f64 = 0.08;

/// Seeded 72/8/20 split.
pub fn split_dataset<T: Clone>(items: &[T], seed: u64) -> Result<Split<T>> {
    if items.len() < MIN_SPLIT_SIZE {
        return Err(Error::TooFewPairs {
            min: MIN_SPLIT_SIZE,
            got: items.len(),
        });
    }
    let n = items.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = (n as f64 * TEST_FRACTION).round() as usize;
    let n_val = (n as f64 * VAL_FRACTION).round() as usize;
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect::<Vec<_>>();
    Ok(Split {
        test: pick(&order[..n_test]),
        val: pick(&order[n_test..n_test + n_val]),
        train: pick(&order[n_test + n_val..]),
    })
}

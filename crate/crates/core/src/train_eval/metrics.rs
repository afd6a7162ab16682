//! ROUGE-1 F1, exact match and token accuracy.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::EncodedExample;
use crate::error::{Error, Result};
use crate::head_loss::extract_short_title;
use crate::model::TitleModel;

fn counts(text: &str) -> HashMap<&str, usize> {
    let mut out = HashMap::new();
    for tok in text.split_whitespace() {
        *out.entry(tok).or_insert(0) += 1;
    }
    out
}

/// Unigram F1 with clipped counts. Both empty scores 1, one empty scores 0.
pub fn rouge1_f1(predicted: &str, reference: &str) -> f64 {
    let p = counts(predicted);
    let r = counts(reference);
    let np: usize = p.values().sum();
    let nr: usize = r.values().sum();
    if np == 0 && nr == 0 {
        return 1.0;
    }
    if np == 0 || nr == 0 {
        return 0.0;
    }
    let overlap: usize = p.iter().map(|(t, &c)| c.min(r.get(t).copied().unwrap_or(0))).sum();
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / np as f64;
    let recall = overlap as f64 / nr as f64;
    2.0 * precision * recall / (precision + recall)
}

/// String equality after squeezing whitespace.
pub fn exact_match(predicted: &str, reference: &str) -> bool {
    predicted.split_whitespace().eq(reference.split_whitespace())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub predicted: String,
    pub reference: String,
    pub rouge1_f1: f64,
    pub exact: bool,
}

/// Mean ROUGE-1 F1 and exact-match percentage over a labeled set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rouge1_f1: f64,
    /// Percentage in `[0, 100]`.
    pub em: f64,
    pub n: usize,
    #[serde(skip)]
    pub records: Vec<ExampleRecord>,
}

impl MetricsReport {
    pub fn from_pairs<P: AsRef<str>, R: AsRef<str>>(pairs: &[(P, R)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyDataset("evaluation set"));
        }
        let records: Vec<ExampleRecord> = pairs
            .iter()
            .map(|(p, r)| ExampleRecord {
                predicted: p.as_ref().to_owned(),
                reference: r.as_ref().to_owned(),
                rouge1_f1: rouge1_f1(p.as_ref(), r.as_ref()),
                exact: exact_match(p.as_ref(), r.as_ref()),
            })
            .collect();
        let n = records.len();
        Ok(MetricsReport {
            rouge1_f1: records.iter().map(|r| r.rouge1_f1).sum::<f64>() / n as f64,
            em: 100.0 * records.iter().filter(|r| r.exact).count() as f64 / n as f64,
            n,
            records,
        })
    }
}

fn gold_labels(ex: &EncodedExample) -> Result<&[u8]> {
    ex.labels
        .as_deref()
        .ok_or_else(|| Error::Shape("evaluation example has no labels".into()))
}

/// Decodes every example and compares with its gold short title.
pub fn evaluate(model: &TitleModel, dataset: &[EncodedExample]) -> Result<MetricsReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("evaluation set"));
    }
    let pairs: Vec<(String, String)> = dataset
        .par_iter()
        .map(|ex| {
            let gold = extract_short_title(&ex.tokens, gold_labels(ex)?);
            Ok((model.compress(ex)?, gold))
        })
        .collect::<Result<_>>()?;
    MetricsReport::from_pairs(&pairs)
}

/// Per-token accuracy against the gold labels, with the majority-class rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenAccuracy {
    pub accuracy: f64,
    /// Accuracy of always predicting the more frequent label.
    pub majority: f64,
    pub tokens: usize,
}

pub fn token_accuracy(model: &TitleModel, dataset: &[EncodedExample]) -> Result<TokenAccuracy> {
    let per_example: Vec<(usize, usize, usize)> = dataset
        .par_iter()
        .map(|ex| {
            let gold = gold_labels(ex)?;
            let pred = model.predict_labels(ex)?;
            let mut correct = 0;
            let mut ones = 0;
            for i in ex.valid_positions() {
                correct += usize::from(pred[i] == gold[i]);
                ones += usize::from(gold[i] == 1);
            }
            Ok((correct, ones, ex.valid_len()))
        })
        .collect::<Result<_>>()?;
    let (correct, ones, tokens) = per_example
        .iter()
        .fold((0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    if tokens == 0 {
        return Err(Error::EmptyDataset("token accuracy set"));
    }
    Ok(TokenAccuracy {
        accuracy: correct as f64 / tokens as f64,
        majority: ones.max(tokens - ones) as f64 / tokens as f64,
        tokens,
    })
}

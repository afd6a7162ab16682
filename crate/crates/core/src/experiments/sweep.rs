//! Low-resource sweep: pre-trained versus from-scratch on nested subsamples.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Datasets;
use crate::error::{Error, Result};
use crate::model::TitleModel;
use crate::train_eval::{evaluate, fine_tune, train, TrainingConfig};

pub const DEFAULT_FRACTIONS: [f64; 6] = [0.05, 0.1, 0.2, 0.4, 0.7, 1.0];

pub const PRETRAINED: &str = "pretrained";
pub const SCRATCH: &str = "scratch";

/// The first `floor(fraction * n)` indices of one seeded permutation of
/// `0..n`, so smaller fractions are prefixes of larger ones.
pub fn nested_subsample(n: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("sweep fraction {fraction} is outside (0, 1]")));
    }
    let take = (fraction * n as f64).floor() as usize;
    if take == 0 {
        return Err(Error::EmptySubsample { fraction, available: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.truncate(take);
    Ok(order)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub fraction: f64,
    pub variant: String,
    pub train_size: usize,
    pub rouge1_f1: f64,
    pub em: f64,
}

/// For each fraction, fine-tunes a copy of `pretrained` and trains a fresh
/// model of the same architecture on the same subsample; both are scored on
/// the full test split.
pub fn low_resource_sweep(
    fractions: &[f64],
    data: &Datasets,
    pretrained: &TitleModel,
    training: &TrainingConfig,
    seed: u64,
) -> Result<Vec<SweepRecord>> {
    let mut out = Vec::new();
    for &fraction in fractions {
        let idx = nested_subsample(data.train.len(), fraction, seed)?;
        let subset: Vec<_> = idx.iter().map(|&i| data.train[i].clone()).collect();

        let mut tuned = pretrained.clone();
        fine_tune(&mut tuned, &subset, &data.val, training)?;
        let report = evaluate(&tuned, &data.test)?;
        out.push(SweepRecord {
            fraction,
            variant: PRETRAINED.into(),
            train_size: subset.len(),
            rouge1_f1: report.rouge1_f1,
            em: report.em,
        });

        let mut scratch = data.new_model(pretrained.config.clone(), seed)?;
        train(&mut scratch, &subset, &data.val, training)?;
        let report = evaluate(&scratch, &data.test)?;
        out.push(SweepRecord {
            fraction,
            variant: SCRATCH.into(),
            train_size: subset.len(),
            rouge1_f1: report.rouge1_f1,
            em: report.em,
        });
        log::info!("fraction {fraction}: {:?}", &out[out.len() - 2..]);
    }
    Ok(out)
}

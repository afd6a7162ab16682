//! TOML run configuration.

use std::fs;
use std::path::Path;

use serde::Deserialize;
use titlepress::experiments::DEFAULT_FRACTIONS;
use titlepress::pretrain::{CorruptionConfig, SkipGramConfig};
use titlepress::train_eval::{Selection, TrainingConfig};
use titlepress::{Error, ModelConfig, Result};

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub seed: u64,
    pub model: ModelConfig,
    /// Fine-tuning and from-scratch training.
    pub training: TrainingConfig,
    /// Replaced-token-detection training. Its loss weights are derived from
    /// the corpus unless `[pretraining.loss_weights]` is given.
    pub pretraining: TrainingConfig,
    /// Share of pre-training titles held out for validation when no
    /// validation corpus is supplied.
    pub holdout: f64,
    pub skipgram: SkipGramConfig,
    pub corruption: CorruptionConfig,
    pub sweep: SweepConfig,
    #[serde(skip)]
    pub pretrain_weights_given: bool,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub fractions: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { fractions: DEFAULT_FRACTIONS.to_vec() }
    }
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            seed: 0,
            model: ModelConfig::default(),
            training: TrainingConfig::default(),
            pretraining: TrainingConfig { selection: Selection::TokenAccuracy, ..TrainingConfig::default() },
            holdout: 0.05,
            skipgram: SkipGramConfig::default(),
            corruption: CorruptionConfig::default(),
            sweep: SweepConfig::default(),
            pretrain_weights_given: false,
        }
    }
}

impl AppConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let given = raw
            .get("pretraining")
            .and_then(|p| p.get("loss_weights"))
            .is_some();
        let mut config: AppConfig = raw.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.pretrain_weights_given = given;
        Ok(config)
    }

    /// Reads `path` if given, then applies a `--seed` override to every seeded stage.
    pub fn load(path: Option<&Path>, seed: Option<u64>) -> Result<Self> {
        let mut config = match path {
            Some(p) => Self::parse(&fs::read_to_string(p)?)?,
            None => Self::default(),
        };
        if let Some(s) = seed {
            config.seed = s;
        }
        let s = config.seed;
        config.training.seed = s;
        config.pretraining.seed = s;
        config.skipgram.seed = s;
        config.corruption.seed = s;
        config.model.validate()?;
        config.training.validate()?;
        config.pretraining.validate()?;
        if !(0.0..1.0).contains(&config.holdout) {
            return Err(Error::Config(format!("holdout {} is outside [0, 1)", config.holdout)));
        }
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use titlepress::{AlphaTerm, LossWeights};

    #[test]
    fn empty_file_gives_defaults() {
        let c = AppConfig::parse("").unwrap();
        assert_eq!(c.model, ModelConfig::default());
        assert_eq!(c.sweep.fractions, DEFAULT_FRACTIONS.to_vec());
        assert!(!c.pretrain_weights_given);
    }

    #[test]
    fn nested_sections_override_fields() {
        let c = AppConfig::parse(
            "seed = 4\n[model]\nhidden = 32\nattention = { kind = \"narrow\", width = 7 }\n\
             [training]\nmax_epochs = 2\nloss_weights = { alpha = 0.5, beta = 0.5, alpha_term = \"label_one\" }\n\
             [pretraining.loss_weights]\nalpha = 0.2\nbeta = 0.8\n",
        )
        .unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.model.hidden, 32);
        assert_eq!(c.model.attention, titlepress::AttentionKind::Narrow { width: 7 });
        assert_eq!(c.training.max_epochs, 2);
        assert_eq!(c.training.loss_weights, LossWeights { alpha: 0.5, beta: 0.5, alpha_term: AlphaTerm::LabelOne });
        assert!(c.pretrain_weights_given);
        assert_eq!(c.pretraining.loss_weights.alpha, 0.2);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(AppConfig::parse("[model]\nhiden = 3\n").is_err());
        assert!(AppConfig::parse("bogus = 1\n").is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, "[training]\nlearning_rate = -1.0\n").unwrap();
        assert!(AppConfig::load(Some(&path), None).is_err());
    }

    #[test]
    fn seed_flag_reaches_every_stage() {
        let c = AppConfig::load(None, Some(9)).unwrap();
        assert_eq!((c.training.seed, c.pretraining.seed, c.skipgram.seed, c.corruption.seed), (9, 9, 9, 9));
    }
}

//! Named architecture variants and their train-and-evaluate runs.

use serde::{Deserialize, Serialize};

use super::Datasets;
use crate::config::{AttentionKind, ModelConfig};
use crate::error::{Error, Result};
use crate::model::TitleModel;
use crate::train_eval::{evaluate, fine_tune, train, MetricsReport, TrainReport, TrainingConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationSpec {
    pub name: String,
    pub use_char_cnn: bool,
    pub recurrent_layers: usize,
    pub attention: AttentionKind,
    /// Start from a pre-trained network and fine-tune with gradual unfreezing.
    pub pretrained: bool,
}

impl AblationSpec {
    fn new(name: &str, use_char_cnn: bool, recurrent_layers: usize, attention: AttentionKind, pretrained: bool) -> Self {
        AblationSpec { name: name.to_owned(), use_char_cnn, recurrent_layers, attention, pretrained }
    }

    /// The seven predefined variants.
    pub fn predefined() -> Vec<AblationSpec> {
        use AttentionKind::*;
        vec![
            Self::new("CB3SA", true, 3, Global, false),
            Self::new("CB3SA+PT", true, 3, Global, true),
            Self::new("CB3SA-CharCNN", false, 3, Global, false),
            Self::new("CB3SA-BLSTM1", true, 2, Global, false),
            Self::new("CB3SA-SA", true, 3, None, false),
            Self::new("CB3SA-SA+NWSA7", true, 3, Narrow { width: 7 }, false),
            Self::new("CB3SA-SA+MHSA8", true, 3, MultiHead { heads: 8 }, false),
        ]
    }

    pub fn by_name(name: &str) -> Result<AblationSpec> {
        let all = Self::predefined();
        all.iter()
            .find(|s| s.name == name)
            .cloned()
            .ok_or_else(|| Error::UnknownVariant {
                name: name.to_owned(),
                valid: all.into_iter().map(|s| s.name).collect(),
            })
    }

    /// `base` with this variant's architecture flags.
    pub fn apply(&self, base: &ModelConfig) -> ModelConfig {
        ModelConfig {
            use_char_cnn: self.use_char_cnn,
            recurrent_layers: self.recurrent_layers,
            attention: self.attention,
            ..base.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub name: String,
    pub report: MetricsReport,
    pub training: TrainReport,
}

/// Builds the variant, trains it on `data.train` with model selection on
/// `data.val`, and evaluates on `data.test`. Pre-trained variants need
/// `pretrained`, whose architecture must match the variant's.
pub fn run_ablation(
    spec: &AblationSpec,
    data: &Datasets,
    base: &ModelConfig,
    training: &TrainingConfig,
    pretrained: Option<&TitleModel>,
    seed: u64,
) -> Result<AblationResult> {
    let config = spec.apply(base);
    let (model, report) = if spec.pretrained {
        let source = pretrained
            .ok_or_else(|| Error::Config(format!("variant {} needs a pre-trained model", spec.name)))?;
        if source.config != config {
            return Err(Error::IncompatibleCheckpoint(vec![format!(
                "pre-trained architecture {:?} does not match variant {}",
                source.config, spec.name
            )]));
        }
        let mut model = source.clone();
        let report = fine_tune(&mut model, &data.train, &data.val, training)?;
        (model, report)
    } else {
        let mut model = data.new_model(config, seed)?;
        let report = train(&mut model, &data.train, &data.val, training)?;
        (model, report)
    };
    let metrics = evaluate(&model, &data.test)?;
    Ok(AblationResult { name: spec.name.clone(), report: metrics, training: report })
}

/// [`run_ablation`] for a predefined variant name.
pub fn run_ablation_by_name(
    name: &str,
    data: &Datasets,
    base: &ModelConfig,
    training: &TrainingConfig,
    pretrained: Option<&TitleModel>,
    seed: u64,
) -> Result<AblationResult> {
    run_ablation(&AblationSpec::by_name(name)?, data, base, training, pretrained, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variants_map_to_flags() {
        let base = ModelConfig::default();
        let c = AblationSpec::by_name("CB3SA-BLSTM1").unwrap().apply(&base);
        assert_eq!(c.recurrent_layers, 2);
        let c = AblationSpec::by_name("CB3SA-SA+NWSA7").unwrap().apply(&base);
        assert_eq!(c.attention, AttentionKind::Narrow { width: 7 });
        let c = AblationSpec::by_name("CB3SA-SA+MHSA8").unwrap().apply(&base);
        assert_eq!(c.attention, AttentionKind::MultiHead { heads: 8 });
        assert!(c.validate().is_ok());
        assert!(!AblationSpec::by_name("CB3SA-CharCNN").unwrap().apply(&base).use_char_cnn);
        assert_eq!(AblationSpec::by_name("CB3SA-SA").unwrap().attention, AttentionKind::None);
        assert!(AblationSpec::by_name("CB3SA+PT").unwrap().pretrained);
        assert_eq!(AblationSpec::by_name("CB3SA").unwrap().apply(&base), base);
    }

    #[test]
    fn names_are_unique() {
        let all = AblationSpec::predefined();
        assert_eq!(all.len(), 7);
        for (i, a) in all.iter().enumerate() {
            assert!(all[i + 1..].iter().all(|b| b.name != a.name));
        }
    }

    #[test]
    fn unknown_name_lists_valid_ones() {
        match AblationSpec::by_name("CB9") {
            Err(Error::UnknownVariant { name, valid }) => {
                assert_eq!(name, "CB9");
                assert_eq!(valid.len(), 7);
                assert!(valid.contains(&"CB3SA-SA+MHSA8".to_owned()));
            }
            other => panic!("{other:?}"),
        }
    }
}

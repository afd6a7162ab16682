//! Architecture configuration shared by every layer of the labeler.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the encoder mixes information across positions after the recurrent stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttentionKind {
    /// No attention; the recurrent output is the final encoding.
    None,
    /// Multiplicative attention over every unmasked position.
    Global,
    /// Multiplicative attention restricted to `|i - j| <= width / 2`.
    Narrow { width: usize },
    /// `heads` independent multiplicative attentions over equal slices of the features.
    MultiHead { heads: usize },
}

/// Dimensions and regularization of the sequence labeler.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Maximum number of tokens per title (N).
    pub max_len: usize,
    /// Maximum number of characters per token (C).
    pub max_word_len: usize,
    /// Width of the fixed pre-trained word vectors.
    pub word_dim: usize,
    /// Width of the trainable character embeddings fed to the convolution.
    pub char_in_dim: usize,
    /// Number of convolution filters, i.e. width of the character-level word vector.
    pub char_dim: usize,
    /// Convolution window over character positions.
    pub conv_width: usize,
    pub highway_layers: usize,
    /// Hidden size per direction of each recurrent layer.
    pub hidden: usize,
    pub recurrent_layers: usize,
    pub attention: AttentionKind,
    pub use_char_cnn: bool,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            max_len: 35,
            max_word_len: 15,
            word_dim: 100,
            char_in_dim: 16,
            char_dim: 100,
            conv_width: 5,
            highway_layers: 2,
            hidden: 128,
            recurrent_layers: 3,
            attention: AttentionKind::Global,
            use_char_cnn: true,
            dropout: 0.2,
        }
    }
}

impl ModelConfig {
    /// Tiny configuration used for gradient checks.
    pub fn toy() -> Self {
        ModelConfig {
            max_len: 3,
            max_word_len: 4,
            word_dim: 6,
            char_in_dim: 3,
            char_dim: 4,
            conv_width: 2,
            highway_layers: 2,
            hidden: 4,
            recurrent_layers: 3,
            attention: AttentionKind::Global,
            use_char_cnn: true,
            dropout: 0.2,
        }
    }

    /// Width of the fused token embedding.
    pub fn embedding_dim(&self) -> usize {
        if self.use_char_cnn {
            self.char_dim + self.word_dim
        } else {
            self.word_dim
        }
    }

    /// Width of every recurrent output and of the attention output.
    pub fn encoding_dim(&self) -> usize {
        2 * self.hidden
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("max_len", self.max_len),
            ("max_word_len", self.max_word_len),
            ("word_dim", self.word_dim),
            ("hidden", self.hidden),
            ("recurrent_layers", self.recurrent_layers),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.use_char_cnn {
            if self.char_in_dim == 0 || self.char_dim == 0 || self.conv_width == 0 {
                return Err(Error::Config(
                    "char_in_dim, char_dim and conv_width must be positive".into(),
                ));
            }
            if self.conv_width > self.max_word_len {
                return Err(Error::Config(format!(
                    "conv_width {} exceeds max_word_len {}",
                    self.conv_width, self.max_word_len
                )));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        match self.attention {
            AttentionKind::Narrow { width } if width == 0 || width % 2 == 0 => Err(Error::Config(
                format!("narrow attention width must be odd, got {width}"),
            )),
            AttentionKind::MultiHead { heads } if heads == 0 || !self.encoding_dim().is_multiple_of(heads) => {
                Err(Error::Config(format!(
                    "{} features cannot be split into {heads} heads",
                    self.encoding_dim()
                )))
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ModelConfig::default().validate().unwrap();
        ModelConfig::toy().validate().unwrap();
        assert_eq!(ModelConfig::default().embedding_dim(), 200);
    }

    #[test]
    fn rejects_bad_heads_and_widths() {
        let mut c = ModelConfig::default();
        c.attention = AttentionKind::MultiHead { heads: 3 };
        assert!(c.validate().is_err());
        c.attention = AttentionKind::Narrow { width: 6 };
        assert!(c.validate().is_err());
        c.attention = AttentionKind::Global;
        c.conv_width = 20;
        assert!(c.validate().is_err());
    }

    #[test]
    fn attention_kind_round_trips_through_json() {
        let kind = AttentionKind::Narrow { width: 7 };
        let text = serde_json::to_string(&kind).unwrap();
        assert_eq!(text, r#"{"kind":"narrow","width":7}"#);
        assert_eq!(serde_json::from_str::<AttentionKind>(&text).unwrap(), kind);
    }
}

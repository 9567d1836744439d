//! Line classifier: convolutional text embedding plus sinusoidal layout
//! embedding, a stack of transformer layers whose attention adds 2D
//! relative-position terms, and a linear softmax head.

mod check;
mod encoding;
mod forward;
mod input;
mod io;
mod params;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::document::{Document, LineLabel};
use crate::features::Vocab;

pub use check::{gradient_check, relative_error};
pub use encoding::{
    layout_embedding, relative_offsets, sinusoidal_encode, sinusoidal_encode_into, LayoutFeatures,
    RelativeOffsets,
};
pub use forward::{
    argmax_label, attention_probs, attention_scores, backward, embed_lines, forward, loss_and_grad,
    Forward,
};
pub use input::{label_indices, DocInput};
pub use io::{from_bytes, load, save, to_bytes, FORMAT_VERSION, MAGIC};
pub use params::{LayerIndex, ModelParams, ParamIndex, ParamShape, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_mult: usize,
    pub conv_windows: Vec<usize>,
    /// Input scale applied before sinusoidal encoding.
    pub position_scale: f64,
    pub disable_relative_attention: bool,
    pub disable_transformer: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 96,
            n_layers: 4,
            n_heads: 4,
            ffn_mult: 4,
            conv_windows: vec![3, 4, 5],
            position_scale: 100.0,
            disable_relative_attention: false,
            disable_transformer: false,
        }
    }
}

impl ModelConfig {
    /// Smallest useful shape: d = 12, one layer, two heads.
    pub fn tiny() -> Self {
        ModelConfig {
            d: 12,
            n_layers: 1,
            n_heads: 2,
            ..ModelConfig::default()
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d / self.n_heads
    }

    /// Width of each relative-offset encoding (per axis).
    pub fn rel_dim(&self) -> usize {
        self.d / 2
    }

    /// Width of each of the six layout feature encodings.
    pub fn layout_dim(&self) -> usize {
        self.d / 6
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: String| Err(ModelError::Config(m));
        if self.d == 0 || self.d % 12 != 0 {
            return err(format!(
                "d = {} must be a positive multiple of 12 (six even layout blocks, even d/2)",
                self.d
            ));
        }
        if self.n_heads == 0 || self.d % self.n_heads != 0 {
            return err(format!("d = {} is not divisible by n_heads = {}", self.d, self.n_heads));
        }
        if self.head_dim() % 2 != 0 {
            return err(format!(
                "head dim {} must be even to split into x and y halves",
                self.head_dim()
            ));
        }
        if self.ffn_mult == 0 {
            return err("ffn_mult must be at least 1".into());
        }
        if self.conv_windows.is_empty() || self.conv_windows.contains(&0) {
            return err("conv_windows must be non-empty and positive".into());
        }
        if !(self.position_scale.is_finite() && self.position_scale > 0.0) {
            return err(format!("position_scale {} must be positive", self.position_scale));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("no model loaded")]
    ModelNotLoaded,
    #[error("weights format version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt weights file: {0}")]
    CorruptFile(String),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Trained parameters together with the vocabulary they were trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub params: ModelParams<f32>,
    pub vocab: Vocab,
}

impl Model {
    pub fn config(&self) -> &ModelConfig {
        &self.params.config
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    pub fn input(&self, doc: &Document) -> DocInput {
        DocInput::new(doc, &self.vocab, &self.params.config)
    }

    /// Per-line class distributions in emission order.
    pub fn probabilities(&self, doc: &Document) -> Vec<[f32; LineLabel::COUNT]> {
        forward(&self.params, &self.input(doc)).probs
    }

    pub fn predict(&self, doc: &Document) -> Vec<LineLabel> {
        self.probabilities(doc).iter().map(|r| argmax_label(r)).collect()
    }
}

#[cfg(test)]
mod tests;

#[cfg(test)]
mod config_tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(ModelConfig::default().validate().is_ok());
        assert!(ModelConfig::tiny().validate().is_ok());
        let bad = [
            ModelConfig { d: 18, ..ModelConfig::default() },
            ModelConfig { n_heads: 5, ..ModelConfig::default() },
            ModelConfig { d: 12, n_heads: 4, ..ModelConfig::default() },
            ModelConfig { conv_windows: vec![], ..ModelConfig::default() },
            ModelConfig { position_scale: 0.0, ..ModelConfig::default() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(ModelError::Config(_))), "{c:?}");
        }
    }

    #[test]
    fn config_toml_defaults() {
        let c: ModelConfig = toml::from_str("n_layers = 2\ndisable_transformer = true").unwrap();
        assert_eq!(c.n_layers, 2);
        assert_eq!(c.d, 96);
        assert!(c.disable_transformer);
        assert!(toml::from_str::<ModelConfig>("heads = 2").is_err());
    }
}

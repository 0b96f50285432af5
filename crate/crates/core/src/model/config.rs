use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// How the two expert outputs are fused inside each encoder layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    /// `softmax(GELU([M_ER; M_IR]·W1)·W2)` per token.
    Bottleneck,
    /// `softmax([M_ER; M_IR]·W)` per token.
    Linear,
    /// Plain sum `M_ER + M_IR`.
    Off,
    ForceEr,
    ForceIr,
}

impl GateMode {
    pub fn has_weights(self) -> bool {
        matches!(self, GateMode::Bottleneck | GateMode::Linear)
    }
}

/// Which experts run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpertMode {
    Both,
    ErOnly,
    IrOnly,
}

/// Dimensions and mode flags of a [`MidreModel`](super::MidreModel).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Width of incoming image features.
    pub image_dim: usize,
    /// Width of incoming (CLIP-style) text features.
    pub clip_text_dim: usize,
    /// Residual stream width.
    pub model_dim: usize,
    /// Attention projection width.
    pub attn_dim: usize,
    /// Gate bottleneck width, strictly below `2 * model_dim`.
    pub bottleneck_dim: usize,
    /// Image tokens per sample.
    pub image_tokens: usize,
    /// Maximum length of the rationale-augmented token stream.
    pub max_tokens: usize,
    pub layers: usize,
    pub vocab: usize,
    pub gate_mode: GateMode,
    pub expert_mode: ExpertMode,
    /// Embed the plain text with the model's table and feed the augmented text as
    /// external features instead of the other way round.
    pub reverse_streams: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            image_dim: 64,
            clip_text_dim: 64,
            model_dim: 64,
            attn_dim: 64,
            bottleneck_dim: 32,
            image_tokens: 8,
            max_tokens: 128,
            layers: 2,
            vocab: 4096,
            gate_mode: GateMode::Bottleneck,
            expert_mode: ExpertMode::Both,
            reverse_streams: false,
        }
    }
}

impl ModelConfig {
    /// Dimensions of the full-size setup: CLIP ViT-L/14 patch features (257×1024),
    /// CLIP text features (768) and a flan-t5-large encoder (1024 wide, 24 layers).
    pub fn production() -> Self {
        Self {
            image_dim: 1024,
            clip_text_dim: 768,
            model_dim: 1024,
            attn_dim: 1024,
            bottleneck_dim: 256,
            image_tokens: 257,
            max_tokens: 512,
            layers: 24,
            vocab: 32128,
            ..Self::default()
        }
    }

    /// Small square configuration with every width equal to `dim`.
    pub fn tiny(dim: usize, layers: usize, image_tokens: usize, max_tokens: usize) -> Self {
        Self {
            image_dim: dim,
            clip_text_dim: dim,
            model_dim: dim,
            attn_dim: dim,
            bottleneck_dim: (dim / 2).max(1),
            image_tokens,
            max_tokens,
            layers,
            vocab: 64,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("image_dim", self.image_dim),
            ("clip_text_dim", self.clip_text_dim),
            ("model_dim", self.model_dim),
            ("attn_dim", self.attn_dim),
            ("bottleneck_dim", self.bottleneck_dim),
            ("image_tokens", self.image_tokens),
            ("max_tokens", self.max_tokens),
            ("layers", self.layers),
            ("vocab", self.vocab),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if self.bottleneck_dim >= 2 * self.model_dim {
            return Err(Error::Config(format!(
                "bottleneck_dim {} must be below 2 * model_dim = {}",
                self.bottleneck_dim,
                2 * self.model_dim
            )));
        }
        Ok(())
    }

    /// Number of scalar parameters implied by this configuration.
    pub fn parameter_count(&self) -> usize {
        let d = self.model_dim;
        let k = self.attn_dim;
        let expert = 3 * d * k + if k != d { k * d } else { 0 };
        let gate = match self.gate_mode {
            GateMode::Bottleneck => 2 * d * self.bottleneck_dim + self.bottleneck_dim * 2,
            GateMode::Linear => 2 * d * 2,
            _ => 0,
        };
        self.image_dim * d
            + self.clip_text_dim * d
            + self.vocab * d
            + self.layers * (2 * expert + gate)
            + d * 2
            + 2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bottleneck_must_be_narrower_than_concat() {
        let mut c = ModelConfig::tiny(4, 1, 2, 8);
        c.bottleneck_dim = 8;
        assert!(c.validate().is_err());
        c.bottleneck_dim = 7;
        c.validate().unwrap();
    }

    #[test]
    fn zero_layers_rejected() {
        let c = ModelConfig {
            layers: 0,
            ..ModelConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn defaults_and_presets_are_valid() {
        ModelConfig::default().validate().unwrap();
        ModelConfig::production().validate().unwrap();
    }

    #[test]
    fn config_json_uses_snake_case_modes() {
        let c = ModelConfig {
            gate_mode: GateMode::ForceEr,
            expert_mode: ExpertMode::IrOnly,
            ..ModelConfig::default()
        };
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains("\"force_er\"") && s.contains("\"ir_only\""));
        let back: ModelConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        let partial: ModelConfig = serde_json::from_str(r#"{"layers": 3}"#).unwrap();
        assert_eq!(partial.layers, 3);
        assert_eq!(partial.model_dim, 64);
    }
}

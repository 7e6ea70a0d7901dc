use serde::{Deserialize, Serialize};

use crate::attention::AttentionConfig;
use crate::error::{Error, Result};

/// How the shallow feature `f_t` is merged with the warped hidden state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    /// `conv1×1([f_t; ĥ])`.
    Concat,
    /// Window attention with queries from `f_t`, then `conv1×1([O; f_t])`.
    Spatial,
    /// Channel attention fusion.
    Channel,
}

/// Building block of the reconstruction U-net.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    /// Residual block `x + conv(relu(conv(x)))`.
    Conv,
    /// Window self-attention then gated feed-forward.
    Spatial,
    /// Channel self-attention then gated feed-forward.
    Channel,
    /// Improved channel attention then gated feed-forward.
    Ica,
}

impl Fusion {
    pub fn name(self) -> &'static str {
        match self {
            Fusion::Concat => "concat",
            Fusion::Spatial => "spatial",
            Fusion::Channel => "channel",
        }
    }
}

impl BlockKind {
    pub fn name(self) -> &'static str {
        match self {
            BlockKind::Conv => "conv",
            BlockKind::Spatial => "spatial",
            BlockKind::Channel => "channel",
            BlockKind::Ica => "ica",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub channels: Vec<usize>,
    pub blocks: Vec<usize>,
    pub heads: Vec<usize>,
    pub squeeze_ratio: usize,
    pub scale: usize,
    /// Window side of spatial attention.
    pub window: usize,
    pub fusion: Fusion,
    pub block_kind: BlockKind,
    pub qk_norm: bool,
    /// Seed of the parameter initialization.
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            channels: vec![16, 32, 64],
            blocks: vec![2, 2, 2],
            heads: vec![1, 2, 4],
            squeeze_ratio: 4,
            scale: 4,
            window: 4,
            fusion: Fusion::Channel,
            block_kind: BlockKind::Ica,
            qk_norm: true,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    /// Concatenation fusion with residual conv blocks.
    pub fn baseline() -> Self {
        ModelConfig {
            fusion: Fusion::Concat,
            block_kind: BlockKind::Conv,
            ..Default::default()
        }
    }

    pub fn with_variant(mut self, fusion: Fusion, block_kind: BlockKind) -> Self {
        self.fusion = fusion;
        self.block_kind = block_kind;
        self
    }

    pub fn levels(&self) -> usize {
        self.channels.len()
    }

    /// Spatial sizes are padded to a multiple of this before the U-net.
    pub fn size_multiple(&self) -> usize {
        1 << (self.levels() - 1)
    }

    pub fn attention(&self, level: usize) -> AttentionConfig {
        AttentionConfig {
            heads: self.heads[level],
            dim: self.channels[level],
            key_dim: self.channels[level],
            proj_dim: self.channels[level],
            window: self.window,
            squeeze_ratio: self.squeeze_ratio,
            alpha_init: 1.0,
            qk_norm: self.qk_norm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.channels.len();
        if l == 0 {
            return Err(Error::Config("model `channels` must not be empty".into()));
        }
        if self.blocks.len() != l || self.heads.len() != l {
            return Err(Error::Config(format!(
                "model `channels`, `blocks` and `heads` must have equal length, got {}, {}, {}",
                l,
                self.blocks.len(),
                self.heads.len()
            )));
        }
        if !matches!(self.scale, 2 | 4) {
            return Err(Error::Config(format!(
                "model `scale` must be 2 or 4, got {}",
                self.scale
            )));
        }
        if self.channels.iter().any(|&c| c == 0) {
            return Err(Error::Config("model `channels` must be positive".into()));
        }
        for level in 0..l {
            let a = self.attention(level);
            match self.block_kind {
                BlockKind::Conv => {}
                BlockKind::Spatial => a.validate_spatial()?,
                BlockKind::Channel => a.validate_channel()?,
                BlockKind::Ica => a.validate_ica()?,
            }
        }
        let a = self.attention(0);
        match self.fusion {
            Fusion::Concat => {}
            Fusion::Spatial => a.validate_spatial()?,
            Fusion::Channel => a.validate_channel()?,
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_validates_and_lengths_are_checked() {
        ModelConfig::default().validate().unwrap();
        let bad = ModelConfig {
            blocks: vec![1, 1],
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = ModelConfig {
            scale: 3,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn every_variant_of_the_lattice_validates() {
        for f in [Fusion::Concat, Fusion::Spatial, Fusion::Channel] {
            for b in [
                BlockKind::Conv,
                BlockKind::Spatial,
                BlockKind::Channel,
                BlockKind::Ica,
            ] {
                ModelConfig::default()
                    .with_variant(f, b)
                    .validate()
                    .unwrap();
            }
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<ModelConfig>(r#"{"chanels":[8]}"#).unwrap_err();
        assert!(err.to_string().contains("chanels"));
    }
}

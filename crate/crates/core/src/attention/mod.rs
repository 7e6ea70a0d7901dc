//! Covariance-based attention: windowed spatial attention, channel attention,
//! the squeeze-excite variant with map-driven channel rescaling, the fusion
//! module that queries a propagated hidden state, and the gated feed-forward.

mod caf;
mod channel;
mod gdfn;
mod ica;
mod spatial;

pub use caf::ChannelAttentionFusion;
pub use channel::{block_diagonal, channel_attention_core, ChannelAttention, ChannelAttentionOut};
pub use gdfn::{GatedFeedForward, GDFN_EXPANSION};
pub use ica::{IcaOut, ImprovedChannelAttention, RescaleWeights, RESCALE_HIDDEN};
pub use spatial::{spatial_window_core, SpatialAttentionOut, SpatialWindowAttention};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Epsilon of the L2 normalization applied to channel-attention queries and keys.
pub const QK_NORM_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionConfig {
    pub heads: usize,
    /// Query-side channels `C`.
    pub dim: usize,
    /// Key/value-side channels `Ĉ`.
    pub key_dim: usize,
    /// Projection width `D_s` of spatial attention.
    pub proj_dim: usize,
    /// Window side `ω` of spatial attention.
    pub window: usize,
    /// Channel squeeze ratio `r` of the improved channel attention.
    pub squeeze_ratio: usize,
    /// Initial value of the learnable per-head temperature `α`.
    pub alpha_init: f64,
    /// L2-normalize channel-attention queries and keys along the spatial axis
    /// before the product (bounded logits `∈ [−1/α, 1/α]`).
    pub qk_norm: bool,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        AttentionConfig {
            heads: 1,
            dim: 16,
            key_dim: 16,
            proj_dim: 16,
            window: 8,
            squeeze_ratio: 4,
            alpha_init: 1.0,
            qk_norm: true,
        }
    }
}

impl AttentionConfig {
    /// Self-attention over `dim` channels.
    pub fn self_attention(dim: usize, heads: usize) -> Self {
        AttentionConfig {
            heads,
            dim,
            key_dim: dim,
            proj_dim: dim,
            ..Default::default()
        }
    }

    fn positive(&self) -> Result<()> {
        for (name, v) in [
            ("heads", self.heads),
            ("dim", self.dim),
            ("key_dim", self.key_dim),
            ("proj_dim", self.proj_dim),
            ("window", self.window),
            ("squeeze_ratio", self.squeeze_ratio),
        ] {
            if v == 0 {
                return Err(Error::Config(format!(
                    "attention `{name}` must be positive"
                )));
            }
        }
        if !(self.alpha_init > 0.0) {
            return Err(Error::Config(
                "attention `alpha_init` must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn validate_channel(&self) -> Result<()> {
        self.positive()?;
        if self.dim % self.heads != 0 || self.key_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "attention `heads` = {} must divide dim {} and key_dim {}",
                self.heads, self.dim, self.key_dim
            )));
        }
        Ok(())
    }

    pub fn validate_spatial(&self) -> Result<()> {
        self.positive()?;
        if self.proj_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "attention `heads` = {} must divide proj_dim {}",
                self.heads, self.proj_dim
            )));
        }
        Ok(())
    }

    pub fn validate_ica(&self) -> Result<()> {
        self.positive()?;
        if self.dim % self.squeeze_ratio != 0 {
            return Err(Error::Config(format!(
                "attention `squeeze_ratio` = {} must divide dim {}",
                self.squeeze_ratio, self.dim
            )));
        }
        let squeezed = self.dim / self.squeeze_ratio;
        if squeezed % self.heads != 0 {
            return Err(Error::Config(format!(
                "attention `heads` = {} must divide squeezed width {squeezed}",
                self.heads
            )));
        }
        Ok(())
    }
}

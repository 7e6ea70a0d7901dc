//! Analytical probes on a fixed, untrained convolutional encoder.
//!
//! Sensitivity: queries come from the embedding of frame `t`, keys and values
//! from frame `t−1`; the attention output `O` for a clean query is compared
//! with `O_D` for a degraded query by cosine similarity.
//!
//! Covariance: the channel-redundancy indicator `ac` of encoder features and
//! of the two attention outputs over a batch of seeded clips.
//!
//! Frames are shifted by [`INPUT_MEAN`] before encoding; without it the
//! random filters respond mostly to the frame mean and every position carries
//! nearly the same feature vector.

use serde::{Deserialize, Serialize};

use crate::attention::{AttentionConfig, ChannelAttention, SpatialWindowAttention};
use crate::autodiff::{Graph, Var};
use crate::degradation::DegradationSpec;
use crate::diagnostics::{ac_indicator, cosine_similarity, AcMode, FeatureBatch};
use crate::error::{Error, Result};
use crate::nn::{orthogonal, Bound, Conv2d, ParamBuilder, ParamStore};
use crate::rng;
use crate::tensor::Tensor;

use super::model::{Block, LEAKY_SLOPE};
use super::synthetic::{downsample_clip, synthetic_clip};

/// Subtracted from frames before encoding.
pub const INPUT_MEAN: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionKind {
    Spatial,
    Channel,
}

impl AttentionKind {
    pub const ALL: [AttentionKind; 2] = [AttentionKind::Spatial, AttentionKind::Channel];

    pub fn name(self) -> &'static str {
        match self {
            AttentionKind::Spatial => "spatial",
            AttentionKind::Channel => "channel",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub channels: usize,
    pub heads: usize,
    pub window: usize,
    pub encoder_blocks: usize,
    /// Draw the 1×1 query/key/value projections as orthogonal matrices, so
    /// that query-key products equal those of the normalized features.
    /// Otherwise they keep the default uniform initialization, whose
    /// spatial-attention maps are close to uniform.
    pub orthogonal_projections: bool,
    /// Seed of encoder and attention initialization.
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            channels: 16,
            heads: 1,
            window: 8,
            encoder_blocks: 2,
            orthogonal_projections: true,
            seed: 0,
        }
    }
}

/// Shallow convolutional encoder with both attention kinds on top.
#[derive(Clone, Debug)]
pub struct AttentionProbe {
    pub embed: Conv2d,
    pub blocks: Vec<Block>,
    pub spatial: SpatialWindowAttention,
    pub channel: ChannelAttention,
    pub store: ParamStore,
}

impl AttentionProbe {
    pub fn new(cfg: &ProbeConfig) -> Result<Self> {
        let c = cfg.channels;
        let mut store = ParamStore::new();
        let mut pb = ParamBuilder::new(&mut store, cfg.seed);
        let embed = Conv2d::new(&mut pb, "encoder.embed", 3, c, 3, true);
        let blocks = (0..cfg.encoder_blocks)
            .map(|i| {
                let mut pb = pb.pp(&format!("encoder.block{i}"));
                Block::Conv {
                    conv1: Conv2d::new(&mut pb, "conv1", c, c, 3, true),
                    conv2: Conv2d::new(&mut pb, "conv2", c, c, 3, true),
                }
            })
            .collect();
        let a = AttentionConfig {
            window: cfg.window,
            ..AttentionConfig::self_attention(c, cfg.heads)
        };
        let spatial = SpatialWindowAttention::new(&mut pb, "spatial", &a)?;
        let channel = ChannelAttention::new(&mut pb, "channel", &a)?;
        if cfg.orthogonal_projections {
            for name in [
                &spatial.q.weight,
                &spatial.k.weight,
                &spatial.v.weight,
                &channel.q_pw.weight,
                &channel.kv_pw.weight,
            ] {
                let shape = store.get(name)?.shape().to_vec();
                store.insert(
                    name.clone(),
                    orthogonal(&shape, rng::derive(cfg.seed, name)),
                );
            }
        }
        Ok(AttentionProbe {
            embed,
            blocks,
            spatial,
            channel,
            store,
        })
    }

    fn encode_var(&self, g: &mut Graph, p: &Bound, frame: &Tensor) -> Result<Var> {
        let x = g.constant(frame.map(|v| v - INPUT_MEAN));
        let mut f = self.embed.forward(g, p, x)?;
        f = g.leaky_relu(f, LEAKY_SLOPE);
        for b in &self.blocks {
            f = b.forward(g, p, f)?;
        }
        Ok(f)
    }

    pub fn encode(&self, frame: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let p = self.store.bind(&mut g, false);
        let f = self.encode_var(&mut g, &p, frame)?;
        Ok(g.value(f).clone())
    }

    /// Attention output with queries from `query` and keys/values from `key`.
    pub fn attend(&self, kind: AttentionKind, query: &Tensor, key: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let p = self.store.bind(&mut g, false);
        let q = g.constant(query.clone());
        let k = g.constant(key.clone());
        let o = match kind {
            AttentionKind::Spatial => self.spatial.forward(&mut g, &p, q, k)?.features,
            AttentionKind::Channel => self.channel.forward(&mut g, &p, q, k)?.features,
        };
        Ok(g.value(o).clone())
    }

    /// Cosine similarity `S` of `O` and `O_D` for one frame pair.
    pub fn sensitivity(
        &self,
        kind: AttentionKind,
        prev: &Tensor,
        curr: &Tensor,
        spec: &DegradationSpec,
    ) -> Result<f64> {
        if prev.shape() != curr.shape() {
            return Err(Error::dim("sensitivity", prev.shape(), curr.shape()));
        }
        let degraded = spec.apply(curr)?;
        let kv = self.encode(prev)?;
        let o = self.attend(kind, &self.encode(curr)?, &kv)?;
        let o_d = self.attend(kind, &self.encode(&degraded)?, &kv)?;
        cosine_similarity(&o, &o_d)
    }
}

/// Clean low-resolution frame pairs `(I_{t−1}, I_t)` from seeded clips.
pub fn probe_pairs(
    seed: u64,
    count: usize,
    size: usize,
    scale: usize,
) -> Result<Vec<(Tensor, Tensor)>> {
    (0..count)
        .map(|i| {
            let hr = synthetic_clip(
                rng::derive_index(seed, i as u64),
                2,
                size * scale,
                size * scale,
                scale,
            )?;
            let lr = downsample_clip(&hr, scale)?;
            let mut it = lr.into_iter();
            Ok((it.next().unwrap(), it.next().unwrap()))
        })
        .collect()
}

/// Mean `S` over frame pairs for one attention kind and one degradation.
pub fn sensitivity_experiment(
    probe: &AttentionProbe,
    kind: AttentionKind,
    pairs: &[(Tensor, Tensor)],
    spec: &DegradationSpec,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::param("pairs", "need at least one frame pair"));
    }
    let mut total = 0.0;
    for (i, (prev, curr)) in pairs.iter().enumerate() {
        let spec = DegradationSpec::new(spec.op.clone(), rng::derive_index(spec.seed, i as u64));
        total += probe.sensitivity(kind, prev, curr, &spec)?;
    }
    Ok(total / pairs.len() as f64)
}

/// `ac` of encoder features and of the attention outputs over the same batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub samples: usize,
    pub input: f64,
    pub spatial: f64,
    pub channel: f64,
}

pub fn covariance_probe(
    probe: &AttentionProbe,
    pairs: &[(Tensor, Tensor)],
    mode: AcMode,
) -> Result<CovarianceReport> {
    let (mut inputs, mut spatial, mut channel) = (vec![], vec![], vec![]);
    for (prev, curr) in pairs {
        let q = probe.encode(curr)?;
        let kv = probe.encode(prev)?;
        spatial.push(probe.attend(AttentionKind::Spatial, &q, &kv)?);
        channel.push(probe.attend(AttentionKind::Channel, &q, &kv)?);
        inputs.push(q);
    }
    Ok(CovarianceReport {
        samples: pairs.len(),
        input: ac_indicator(&FeatureBatch::new(inputs)?, mode)?,
        spatial: ac_indicator(&FeatureBatch::new(spatial)?, mode)?,
        channel: ac_indicator(&FeatureBatch::new(channel)?, mode)?,
    })
}

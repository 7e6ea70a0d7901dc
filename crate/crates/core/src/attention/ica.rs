use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{Bound, Conv2d, LayerNorm, Linear, ParamBuilder};
use crate::tensor::Tensor;

use super::channel::{block_diagonal, channel_attention_core};
use super::AttentionConfig;

/// Width of the hidden layer mapping `(row mean, row max)` to a rescale logit.
pub const RESCALE_HIDDEN: usize = 4;

/// Per-channel weights predicted from an attention map: for each row the pair
/// (mean, max) goes through `Linear(2→4) → GELU → Linear(4→1) → sigmoid`.
///
/// The last layer starts at zero, so every weight starts at `σ(0) = 0.5`.
#[derive(Clone, Debug)]
pub struct RescaleWeights {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl RescaleWeights {
    pub fn new(pb: &mut ParamBuilder, name: &str) -> Self {
        let mut pb = pb.pp(name);
        let fc1 = Linear::new(&mut pb, "fc1", 2, RESCALE_HIDDEN);
        let fc2 = Linear::zeroed(&mut pb, "fc2", RESCALE_HIDDEN, 1);
        RescaleWeights { fc1, fc2 }
    }

    /// `a_r: n×n → n×1`, strictly inside `(0, 1)`.
    pub fn forward(&self, g: &mut Graph, p: &Bound, a_r: Var) -> Result<Var> {
        let [n, m] = g.shape(a_r)[..] else {
            return Err(Error::dim("rescale_weights", g.shape(a_r), &[0, 0]));
        };
        if n != m {
            return Err(Error::dim("rescale_weights", g.shape(a_r), &[n, n]));
        }
        let avg = g.constant(Tensor::full(&[n, 1], 1.0 / n as f64));
        let mean = g.matmul(a_r, avg)?;
        let max = g.max_last(a_r);
        let mean_t = g.transpose(mean)?;
        let max_t = g.transpose(max)?;
        let stats = g.concat(&[mean_t, max_t])?;
        let stats = g.transpose(stats)?;
        let hidden = self.fc1.forward(g, p, stats)?;
        let hidden = g.gelu(hidden);
        let logit = self.fc2.forward(g, p, hidden)?;
        Ok(g.sigmoid(logit))
    }
}

/// Output of [`ImprovedChannelAttention::forward`].
#[derive(Clone, Copy, Debug)]
pub struct IcaOut {
    pub output: Var,
    /// Full `(C/r)×(C/r)` map (block-diagonal across heads).
    pub map: Var,
    /// `(C/r)×1` rescale weights.
    pub weights: Var,
}

/// Channel attention wrapped in squeeze/excite with map-driven channel rescaling:
///
/// `s = squeeze(LN(x))`, self channel attention on `s` yields features `F` and
/// map `A_r`; `out = x + excite(F ⊙ rescale(A_r))`.
#[derive(Clone, Debug)]
pub struct ImprovedChannelAttention {
    pub cfg: AttentionConfig,
    pub norm: LayerNorm,
    pub squeeze: Conv2d,
    pub q_pw: Conv2d,
    pub q_dw: Conv2d,
    pub kv_pw: Conv2d,
    pub kv_dw: Conv2d,
    pub alpha: String,
    pub rescale: RescaleWeights,
    pub excite: Conv2d,
}

impl ImprovedChannelAttention {
    pub fn new(pb: &mut ParamBuilder, name: &str, cfg: &AttentionConfig) -> Result<Self> {
        cfg.validate_ica()?;
        let c = cfg.dim;
        let cs = c / cfg.squeeze_ratio;
        let mut pb = pb.pp(name);
        let ica = ImprovedChannelAttention {
            cfg: cfg.clone(),
            norm: LayerNorm::new(&mut pb, "norm", c),
            squeeze: Conv2d::new(&mut pb, "squeeze", c, cs, 1, false),
            q_pw: Conv2d::new(&mut pb, "q_pw", cs, cs, 1, false),
            q_dw: Conv2d::depthwise(&mut pb, "q_dw", cs, 1, 3, false),
            kv_pw: Conv2d::new(&mut pb, "kv_pw", cs, 2 * cs, 1, false),
            kv_dw: Conv2d::depthwise(&mut pb, "kv_dw", 2 * cs, 1, 3, false),
            alpha: pb.constant("alpha", &[cfg.heads], cfg.alpha_init),
            rescale: RescaleWeights::new(&mut pb, "rescale"),
            excite: Conv2d::new(&mut pb, "excite", cs, c, 1, false),
        };
        Ok(ica)
    }

    pub fn squeezed_channels(&self) -> usize {
        self.cfg.dim / self.cfg.squeeze_ratio
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<IcaOut> {
        let (c, _, _) = g.value(x).chw()?;
        if c != self.cfg.dim {
            return Err(Error::dim("ica", g.shape(x), &[self.cfg.dim]));
        }
        let xn = self.norm.forward(g, p, x)?;
        let s = self.squeeze.forward(g, p, xn)?;
        let q = self.q_pw.forward(g, p, s)?;
        let q = self.q_dw.forward(g, p, q)?;
        let kv = self.kv_pw.forward(g, p, s)?;
        let kv = self.kv_dw.forward(g, p, kv)?;
        let kv = g.chunk(kv, 2)?;
        let alpha = p.get(&self.alpha)?;
        let (features, maps) =
            channel_attention_core(g, q, kv[0], kv[1], alpha, self.cfg.heads, self.cfg.qk_norm)?;
        let map = block_diagonal(g, maps)?;
        let weights = self.rescale.forward(g, p, map)?;
        let rescaled = g.mul_channels(features, weights)?;
        let excited = self.excite.forward(g, p, rescaled)?;
        let output = g.add(x, excited)?;
        Ok(IcaOut {
            output,
            map,
            weights,
        })
    }
}

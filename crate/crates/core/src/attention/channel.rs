use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{Bound, Conv2d, LayerNorm, ParamBuilder};
use crate::tensor::Tensor;

use super::{AttentionConfig, QK_NORM_EPS};

/// Channel attention between projected `q: C×H×W` and `k, v: Ĉ×H×W`.
///
/// Channels are split into `heads` groups; within each group the map is
/// `softmax(Q Kᵀ / α_head)` over flattened `H·W` rows and the output is `A V`.
/// Returns `(features C×H×W, maps heads×(C/h)×(Ĉ/h))`.
pub fn channel_attention_core(
    g: &mut Graph,
    q: Var,
    k: Var,
    v: Var,
    alpha: Var,
    heads: usize,
    qk_norm: bool,
) -> Result<(Var, Var)> {
    let (c, h, w) = g.value(q).chw()?;
    let (ck, hk, wk) = g.value(k).chw()?;
    if g.shape(v) != g.shape(k) || (h, w) != (hk, wk) {
        return Err(Error::dim("channel_attention", g.shape(q), g.shape(k)));
    }
    if heads == 0 || c % heads != 0 || ck % heads != 0 || g.value(alpha).numel() != heads {
        return Err(Error::dim("channel_attention heads", &[c, ck], &[heads]));
    }
    let hw = h * w;
    let mut qh = g.reshape(q, &[heads, c / heads, hw])?;
    let mut kh = g.reshape(k, &[heads, ck / heads, hw])?;
    let vh = g.reshape(v, &[heads, ck / heads, hw])?;
    if qk_norm {
        qh = g.l2_normalize(qh, QK_NORM_EPS);
        kh = g.l2_normalize(kh, QK_NORM_EPS);
    }
    let kt = g.transpose(kh)?;
    let logits = g.matmul(qh, kt)?;
    let logits = g.div_batch(logits, alpha)?;
    let maps = g.softmax(logits, 2)?;
    let out = g.matmul(maps, vh)?;
    let out = g.reshape(out, &[c, h, w])?;
    Ok((out, maps))
}

/// Assembles per-head maps `heads×m×n` into the block-diagonal `(heads·m)×(heads·n)` map.
pub fn block_diagonal(g: &mut Graph, maps: Var) -> Result<Var> {
    let [heads, m, n] = g.shape(maps)[..] else {
        return Err(Error::dim("block_diagonal", g.shape(maps), &[0, 0, 0]));
    };
    if heads == 1 {
        return g.reshape(maps, &[m, n]);
    }
    let mut rows = Vec::with_capacity(heads);
    for k in 0..heads {
        let a = g.slice(maps, k, 1)?;
        let a = g.reshape(a, &[m, n])?;
        let at = g.transpose(a)?;
        let mut col = Vec::new();
        if k > 0 {
            col.push(g.constant(Tensor::zeros(&[k * n, m])));
        }
        col.push(at);
        if k + 1 < heads {
            col.push(g.constant(Tensor::zeros(&[(heads - k - 1) * n, m])));
        }
        let col = g.concat(&col)?;
        rows.push(g.transpose(col)?);
    }
    g.concat(&rows)
}

/// Output of [`ChannelAttention::forward`].
#[derive(Clone, Copy, Debug)]
pub struct ChannelAttentionOut {
    /// `O_c`, `C×H×W`.
    pub features: Var,
    /// Per-head maps, `heads×(C/h)×(Ĉ/h)`; see [`block_diagonal`] for the full `C×Ĉ` map.
    pub maps: Var,
}

/// Channel attention with its own layer norms and bias-free projections:
/// `Q = dw3×3(1×1(LN(x)))`, `[K; V] = dw3×3(1×1(LN(y)))`.
#[derive(Clone, Debug)]
pub struct ChannelAttention {
    pub cfg: AttentionConfig,
    pub norm_x: LayerNorm,
    pub norm_y: LayerNorm,
    pub q_pw: Conv2d,
    pub q_dw: Conv2d,
    pub kv_pw: Conv2d,
    pub kv_dw: Conv2d,
    pub alpha: String,
}

impl ChannelAttention {
    pub fn new(pb: &mut ParamBuilder, name: &str, cfg: &AttentionConfig) -> Result<Self> {
        cfg.validate_channel()?;
        let mut pb = pb.pp(name);
        let (c, ck) = (cfg.dim, cfg.key_dim);
        Ok(ChannelAttention {
            cfg: cfg.clone(),
            norm_x: LayerNorm::new(&mut pb, "norm_x", c),
            norm_y: LayerNorm::new(&mut pb, "norm_y", ck),
            q_pw: Conv2d::new(&mut pb, "q_pw", c, c, 1, false),
            q_dw: Conv2d::depthwise(&mut pb, "q_dw", c, 1, 3, false),
            kv_pw: Conv2d::new(&mut pb, "kv_pw", ck, 2 * ck, 1, false),
            kv_dw: Conv2d::depthwise(&mut pb, "kv_dw", 2 * ck, 1, 3, false),
            alpha: pb.constant("alpha", &[cfg.heads], cfg.alpha_init),
        })
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var, y: Var) -> Result<ChannelAttentionOut> {
        let xn = self.norm_x.forward(g, p, x)?;
        let q = self.q_pw.forward(g, p, xn)?;
        let q = self.q_dw.forward(g, p, q)?;
        let yn = self.norm_y.forward(g, p, y)?;
        let kv = self.kv_pw.forward(g, p, yn)?;
        let kv = self.kv_dw.forward(g, p, kv)?;
        let kv = g.chunk(kv, 2)?;
        let alpha = p.get(&self.alpha)?;
        let (features, maps) =
            channel_attention_core(g, q, kv[0], kv[1], alpha, self.cfg.heads, self.cfg.qk_norm)?;
        Ok(ChannelAttentionOut { features, maps })
    }
}

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{Bound, Conv2d, LayerNorm, ParamBuilder};

use super::channel::channel_attention_core;
use super::AttentionConfig;

/// Fuses the current frame feature `f_t` with the aligned hidden state `ĥ_{t−1}`
/// by channel attention:
///
/// ```text
/// Q      = conv3×3(LN(f_t))
/// [K; V] = dw3×3(conv1×1(LN(ĥ)))          (depth-wise, doubles channels)
/// O_t    = conv1×1(dw3×3(conv1×1([A V ; f_t])))
/// ```
#[derive(Clone, Debug)]
pub struct ChannelAttentionFusion {
    pub channels: usize,
    pub heads: usize,
    pub qk_norm: bool,
    pub norm_f: LayerNorm,
    pub norm_h: LayerNorm,
    pub q_conv: Conv2d,
    pub kv_pw: Conv2d,
    pub kv_dw: Conv2d,
    pub alpha: String,
    pub fuse_in: Conv2d,
    pub fuse_dw: Conv2d,
    pub fuse_out: Conv2d,
}

impl ChannelAttentionFusion {
    pub fn new(pb: &mut ParamBuilder, name: &str, cfg: &AttentionConfig) -> Result<Self> {
        cfg.validate_channel()?;
        if cfg.key_dim != cfg.dim {
            return Err(Error::Config(format!(
                "fusion needs matching feature and hidden widths, got {} and {}",
                cfg.dim, cfg.key_dim
            )));
        }
        let c = cfg.dim;
        let mut pb = pb.pp(name);
        Ok(ChannelAttentionFusion {
            channels: c,
            heads: cfg.heads,
            qk_norm: cfg.qk_norm,
            norm_f: LayerNorm::new(&mut pb, "norm_f", c),
            norm_h: LayerNorm::new(&mut pb, "norm_h", c),
            q_conv: Conv2d::new(&mut pb, "q_conv", c, c, 3, false),
            kv_pw: Conv2d::new(&mut pb, "kv_pw", c, c, 1, false),
            kv_dw: Conv2d::depthwise(&mut pb, "kv_dw", c, 2, 3, false),
            alpha: pb.constant("alpha", &[cfg.heads], cfg.alpha_init),
            fuse_in: Conv2d::new(&mut pb, "fuse_in", 2 * c, c, 1, true),
            fuse_dw: Conv2d::depthwise(&mut pb, "fuse_dw", c, 1, 3, true),
            fuse_out: Conv2d::new(&mut pb, "fuse_out", c, c, 1, true),
        })
    }

    /// Attention branch only: `(A V, per-head maps)`.
    pub fn attend(&self, g: &mut Graph, p: &Bound, f_t: Var, h_prev: Var) -> Result<(Var, Var)> {
        if g.shape(f_t) != g.shape(h_prev) {
            return Err(Error::dim("caf", g.shape(f_t), g.shape(h_prev)));
        }
        let fnorm = self.norm_f.forward(g, p, f_t)?;
        let q = self.q_conv.forward(g, p, fnorm)?;
        let hnorm = self.norm_h.forward(g, p, h_prev)?;
        let kv = self.kv_pw.forward(g, p, hnorm)?;
        let kv = self.kv_dw.forward(g, p, kv)?;
        let kv = g.chunk(kv, 2)?;
        let alpha = p.get(&self.alpha)?;
        channel_attention_core(g, q, kv[0], kv[1], alpha, self.heads, self.qk_norm)
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, f_t: Var, h_prev: Var) -> Result<Var> {
        let (attended, _) = self.attend(g, p, f_t, h_prev)?;
        let cat = g.concat(&[attended, f_t])?;
        let o = self.fuse_in.forward(g, p, cat)?;
        let o = self.fuse_dw.forward(g, p, o)?;
        self.fuse_out.forward(g, p, o)
    }
}

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{Bound, Conv2d, LayerNorm, ParamBuilder};

use super::AttentionConfig;

/// Windowed spatial attention on projected `q, k, v: D×H×W`.
///
/// Each non-overlapping `ω×ω` window attends only within itself:
/// `A = softmax(Qᵀ K / √d)` with `d = D / heads`, output `A Vᵀ`.
/// Extents that are not multiples of `ω` are reflect-padded at the bottom/right
/// and the result is cropped back. Returns the `D×H×W` output and one
/// `nW×ω²×ω²` map per head.
pub fn spatial_window_core(
    g: &mut Graph,
    q: Var,
    k: Var,
    v: Var,
    heads: usize,
    window: usize,
) -> Result<(Var, Vec<Var>)> {
    let (d, h, w) = g.value(q).chw()?;
    if g.shape(k) != g.shape(q) || g.shape(v) != g.shape(q) {
        return Err(Error::dim("spatial_attention", g.shape(q), g.shape(k)));
    }
    if heads == 0 || d % heads != 0 || window == 0 {
        return Err(Error::dim(
            "spatial_attention heads",
            &[d],
            &[heads, window],
        ));
    }
    let pad_b = (window - h % window) % window;
    let pad_r = (window - w % window) % window;
    let (q, k, v) = if pad_b + pad_r > 0 {
        (
            g.pad_reflect(q, pad_b, pad_r)?,
            g.pad_reflect(k, pad_b, pad_r)?,
            g.pad_reflect(v, pad_b, pad_r)?,
        )
    } else {
        (q, k, v)
    };
    let (hp, wp) = (h + pad_b, w + pad_r);
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    let mut maps = Vec::with_capacity(heads);
    for head in 0..heads {
        let (qh, kh, vh) = if heads == 1 {
            (q, k, v)
        } else {
            (
                g.slice(q, head * dh, dh)?,
                g.slice(k, head * dh, dh)?,
                g.slice(v, head * dh, dh)?,
            )
        };
        let qw = g.window_partition(qh, window)?;
        let kw = g.window_partition(kh, window)?;
        let vw = g.window_partition(vh, window)?;
        let qt = g.transpose(qw)?;
        let logits = g.matmul(qt, kw)?;
        let logits = g.mul_scalar(logits, scale);
        let map = g.softmax(logits, 2)?;
        let vt = g.transpose(vw)?;
        let o = g.matmul(map, vt)?;
        let o = g.transpose(o)?;
        outs.push(g.window_merge(o, window, hp, wp)?);
        maps.push(map);
    }
    let mut out = if heads == 1 {
        outs[0]
    } else {
        g.concat(&outs)?
    };
    if pad_b + pad_r > 0 {
        out = g.crop(out, h, w)?;
    }
    Ok((out, maps))
}

#[derive(Clone, Debug)]
pub struct SpatialAttentionOut {
    /// `O_s`, `D_s×H×W`.
    pub features: Var,
    /// One `nW×ω²×ω²` map per head.
    pub maps: Vec<Var>,
}

/// Window attention with bias-free 1×1 projections `W_Q: C→D_s`, `W_K, W_V: Ĉ→D_s`
/// applied to layer-normalized inputs.
#[derive(Clone, Debug)]
pub struct SpatialWindowAttention {
    pub cfg: AttentionConfig,
    pub norm_x: LayerNorm,
    pub norm_y: LayerNorm,
    pub q: Conv2d,
    pub k: Conv2d,
    pub v: Conv2d,
}

impl SpatialWindowAttention {
    pub fn new(pb: &mut ParamBuilder, name: &str, cfg: &AttentionConfig) -> Result<Self> {
        cfg.validate_spatial()?;
        let mut pb = pb.pp(name);
        Ok(SpatialWindowAttention {
            cfg: cfg.clone(),
            norm_x: LayerNorm::new(&mut pb, "norm_x", cfg.dim),
            norm_y: LayerNorm::new(&mut pb, "norm_y", cfg.key_dim),
            q: Conv2d::new(&mut pb, "q", cfg.dim, cfg.proj_dim, 1, false),
            k: Conv2d::new(&mut pb, "k", cfg.key_dim, cfg.proj_dim, 1, false),
            v: Conv2d::new(&mut pb, "v", cfg.key_dim, cfg.proj_dim, 1, false),
        })
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var, y: Var) -> Result<SpatialAttentionOut> {
        if g.shape(x)[1..] != g.shape(y)[1..] {
            return Err(Error::dim("spatial_attention", g.shape(x), g.shape(y)));
        }
        let xn = self.norm_x.forward(g, p, x)?;
        let yn = self.norm_y.forward(g, p, y)?;
        let q = self.q.forward(g, p, xn)?;
        let k = self.k.forward(g, p, yn)?;
        let v = self.v.forward(g, p, yn)?;
        let (features, maps) = spatial_window_core(g, q, k, v, self.cfg.heads, self.cfg.window)?;
        Ok(SpatialAttentionOut { features, maps })
    }
}

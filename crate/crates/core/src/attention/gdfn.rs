use crate::autodiff::{Graph, Var};
use crate::error::Result;
use crate::nn::{Bound, Conv2d, LayerNorm, ParamBuilder};

/// Hidden expansion factor `γ`.
pub const GDFN_EXPANSION: f64 = 2.0;

/// Gated depth-wise feed-forward:
/// `x + proj(GELU(gate) ⊙ value)` where `[gate; value] = dw3×3(expand(LN(x)))`.
#[derive(Clone, Debug)]
pub struct GatedFeedForward {
    pub hidden: usize,
    pub norm: LayerNorm,
    pub expand: Conv2d,
    pub dw: Conv2d,
    pub project: Conv2d,
}

impl GatedFeedForward {
    pub fn new(pb: &mut ParamBuilder, name: &str, channels: usize) -> Self {
        let hidden = ((channels as f64) * GDFN_EXPANSION).round() as usize;
        let mut pb = pb.pp(name);
        GatedFeedForward {
            hidden,
            norm: LayerNorm::new(&mut pb, "norm", channels),
            expand: Conv2d::new(&mut pb, "expand", channels, 2 * hidden, 1, false),
            dw: Conv2d::depthwise(&mut pb, "dw", 2 * hidden, 1, 3, false),
            project: Conv2d::new(&mut pb, "project", hidden, channels, 1, false),
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let xn = self.norm.forward(g, p, x)?;
        let e = self.expand.forward(g, p, xn)?;
        let e = self.dw.forward(g, p, e)?;
        let parts = g.chunk(e, 2)?;
        let gate = g.gelu(parts[0]);
        let gated = g.mul(gate, parts[1])?;
        let y = self.project.forward(g, p, gated)?;
        g.add(x, y)
    }
}

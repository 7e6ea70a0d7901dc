//! Recurrent reconstruction model: shallow embed, temporal fusion, U-shaped
//! block stack, pixel-shuffle upsampler with a bicubic global residual.

use crate::attention::{
    ChannelAttention, ChannelAttentionFusion, GatedFeedForward, ImprovedChannelAttention,
    SpatialWindowAttention,
};
use crate::autodiff::{Graph, Var};
use crate::degradation::resize_bicubic;
use crate::error::{Error, Result};
use crate::kernels::ConvSpec;
use crate::nn::{Bound, Conv2d, ParamBuilder, ParamStore};
use crate::tensor::Tensor;

use super::config::{BlockKind, Fusion, ModelConfig};

pub const LEAKY_SLOPE: f64 = 0.1;

#[derive(Clone, Debug)]
pub enum Block {
    Conv {
        conv1: Conv2d,
        conv2: Conv2d,
    },
    Spatial {
        attn: SpatialWindowAttention,
        proj: Conv2d,
        ffn: GatedFeedForward,
    },
    Channel {
        attn: ChannelAttention,
        proj: Conv2d,
        ffn: GatedFeedForward,
    },
    Ica {
        attn: ImprovedChannelAttention,
        ffn: GatedFeedForward,
    },
}

impl Block {
    pub fn new(pb: &mut ParamBuilder, name: &str, cfg: &ModelConfig, level: usize) -> Result<Self> {
        let c = cfg.channels[level];
        let a = cfg.attention(level);
        let mut pb = pb.pp(name);
        Ok(match cfg.block_kind {
            BlockKind::Conv => Block::Conv {
                conv1: Conv2d::new(&mut pb, "conv1", c, c, 3, true),
                conv2: Conv2d::new(&mut pb, "conv2", c, c, 3, true),
            },
            BlockKind::Spatial => Block::Spatial {
                attn: SpatialWindowAttention::new(&mut pb, "attn", &a)?,
                proj: Conv2d::new(&mut pb, "proj", a.proj_dim, c, 1, false),
                ffn: GatedFeedForward::new(&mut pb, "ffn", c),
            },
            BlockKind::Channel => Block::Channel {
                attn: ChannelAttention::new(&mut pb, "attn", &a)?,
                proj: Conv2d::new(&mut pb, "proj", c, c, 1, false),
                ffn: GatedFeedForward::new(&mut pb, "ffn", c),
            },
            BlockKind::Ica => Block::Ica {
                attn: ImprovedChannelAttention::new(&mut pb, "attn", &a)?,
                ffn: GatedFeedForward::new(&mut pb, "ffn", c),
            },
        })
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        match self {
            Block::Conv { conv1, conv2 } => {
                let y = conv1.forward(g, p, x)?;
                let y = g.relu(y);
                let y = conv2.forward(g, p, y)?;
                g.add(x, y)
            }
            Block::Spatial { attn, proj, ffn } => {
                let o = attn.forward(g, p, x, x)?.features;
                let o = proj.forward(g, p, o)?;
                let x = g.add(x, o)?;
                ffn.forward(g, p, x)
            }
            Block::Channel { attn, proj, ffn } => {
                let o = attn.forward(g, p, x, x)?.features;
                let o = proj.forward(g, p, o)?;
                let x = g.add(x, o)?;
                ffn.forward(g, p, x)
            }
            Block::Ica { attn, ffn } => {
                let x = attn.forward(g, p, x)?.output;
                ffn.forward(g, p, x)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub enum FusionModule {
    Concat {
        reduce: Conv2d,
    },
    Spatial {
        attn: SpatialWindowAttention,
        reduce: Conv2d,
    },
    Channel {
        caf: ChannelAttentionFusion,
    },
}

impl FusionModule {
    pub fn new(pb: &mut ParamBuilder, name: &str, cfg: &ModelConfig) -> Result<Self> {
        let c = cfg.channels[0];
        let mut pb = pb.pp(name);
        Ok(match cfg.fusion {
            Fusion::Concat => FusionModule::Concat {
                reduce: Conv2d::new(&mut pb, "reduce", 2 * c, c, 1, true),
            },
            Fusion::Spatial => {
                let a = cfg.attention(0);
                FusionModule::Spatial {
                    attn: SpatialWindowAttention::new(&mut pb, "attn", &a)?,
                    reduce: Conv2d::new(&mut pb, "reduce", a.proj_dim + c, c, 1, true),
                }
            }
            Fusion::Channel => FusionModule::Channel {
                caf: ChannelAttentionFusion::new(&mut pb, "caf", &cfg.attention(0))?,
            },
        })
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, f_t: Var, h_warped: Var) -> Result<Var> {
        match self {
            FusionModule::Concat { reduce } => {
                let cat = g.concat(&[f_t, h_warped])?;
                reduce.forward(g, p, cat)
            }
            FusionModule::Spatial { attn, reduce } => {
                let o = attn.forward(g, p, f_t, h_warped)?.features;
                let cat = g.concat(&[o, f_t])?;
                reduce.forward(g, p, cat)
            }
            FusionModule::Channel { caf } => caf.forward(g, p, f_t, h_warped),
        }
    }
}

/// The reconstruction module: `(frame, warped hidden) → new hidden`.
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub embed: Conv2d,
    pub fusion: FusionModule,
    pub encoders: Vec<Vec<Block>>,
    pub down: Vec<Conv2d>,
    pub up: Vec<Conv2d>,
    pub reduce: Vec<Conv2d>,
    pub decoders: Vec<Vec<Block>>,
    pub multiple: usize,
}

impl Reconstruction {
    pub fn new(pb: &mut ParamBuilder, name: &str, cfg: &ModelConfig) -> Result<Self> {
        let mut pb = pb.pp(name);
        let ch = &cfg.channels;
        let levels = cfg.levels();
        let embed = Conv2d::new(&mut pb, "embed", 3, ch[0], 3, true);
        let fusion = FusionModule::new(&mut pb, "fusion", cfg)?;
        let mut encoders = Vec::with_capacity(levels);
        let (mut down, mut up, mut reduce, mut decoders) = (vec![], vec![], vec![], vec![]);
        for l in 0..levels {
            let blocks = (0..cfg.blocks[l])
                .map(|i| Block::new(&mut pb, &format!("enc{l}.{i}"), cfg, l))
                .collect::<Result<Vec<_>>>()?;
            encoders.push(blocks);
            if l + 1 < levels {
                down.push(Conv2d::with_spec(
                    &mut pb,
                    &format!("down{l}"),
                    ch[l],
                    ch[l + 1],
                    3,
                    true,
                    ConvSpec::new(2, 1, 1),
                ));
            }
        }
        for l in 0..levels - 1 {
            up.push(Conv2d::new(
                &mut pb,
                &format!("up{l}"),
                ch[l + 1],
                4 * ch[l],
                3,
                true,
            ));
            reduce.push(Conv2d::new(
                &mut pb,
                &format!("reduce{l}"),
                2 * ch[l],
                ch[l],
                1,
                true,
            ));
            let blocks = (0..cfg.blocks[l])
                .map(|i| Block::new(&mut pb, &format!("dec{l}.{i}"), cfg, l))
                .collect::<Result<Vec<_>>>()?;
            decoders.push(blocks);
        }
        Ok(Reconstruction {
            embed,
            fusion,
            encoders,
            down,
            up,
            reduce,
            decoders,
            multiple: cfg.size_multiple(),
        })
    }

    /// Shallow feature and fusion only.
    pub fn fuse(&self, g: &mut Graph, p: &Bound, frame: Var, h_warped: Var) -> Result<Var> {
        let f = self.embed.forward(g, p, frame)?;
        self.fusion.forward(g, p, f, h_warped)
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, frame: Var, h_warped: Var) -> Result<Var> {
        let x = self.fuse(g, p, frame, h_warped)?;
        let (_, h, w) = g.value(x).chw()?;
        let m = self.multiple;
        let (pb, pr) = ((m - h % m) % m, (m - w % m) % m);
        let mut x = if pb + pr > 0 {
            g.pad_reflect(x, pb, pr)?
        } else {
            x
        };
        let levels = self.encoders.len();
        let mut skips = Vec::with_capacity(levels);
        for l in 0..levels {
            for b in &self.encoders[l] {
                x = b.forward(g, p, x)?;
            }
            if l + 1 < levels {
                skips.push(x);
                x = self.down[l].forward(g, p, x)?;
            }
        }
        for l in (0..levels - 1).rev() {
            let u = self.up[l].forward(g, p, x)?;
            let u = g.pixel_shuffle(u, 2)?;
            let cat = g.concat(&[u, skips[l]])?;
            x = self.reduce[l].forward(g, p, cat)?;
            for b in &self.decoders[l] {
                x = b.forward(g, p, x)?;
            }
        }
        if pb + pr > 0 {
            x = g.crop(x, h, w)?;
        }
        Ok(x)
    }
}

/// `C×H×W → 3×sH×sW`, without the bicubic residual.
#[derive(Clone, Debug)]
pub struct Upsampler {
    pub stages: Vec<Conv2d>,
    pub out: Conv2d,
    pub scale: usize,
}

impl Upsampler {
    pub fn new(pb: &mut ParamBuilder, name: &str, channels: usize, scale: usize) -> Result<Self> {
        let n = match scale {
            2 => 1,
            4 => 2,
            s => {
                return Err(Error::Config(format!(
                    "unsupported scale {s}, expected 2 or 4"
                )))
            }
        };
        let mut pb = pb.pp(name);
        let stages = (0..n)
            .map(|i| {
                Conv2d::new(
                    &mut pb,
                    &format!("stage{i}"),
                    channels,
                    4 * channels,
                    3,
                    true,
                )
            })
            .collect();
        let out = Conv2d::new(&mut pb, "out", channels, 3, 3, true);
        Ok(Upsampler { stages, out, scale })
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, h: Var) -> Result<Var> {
        let mut x = h;
        for s in &self.stages {
            x = s.forward(g, p, x)?;
            x = g.pixel_shuffle(x, 2)?;
            x = g.leaky_relu(x, LEAKY_SLOPE);
        }
        self.out.forward(g, p, x)
    }
}

/// Unidirectional recurrent super-resolution model.
#[derive(Clone, Debug)]
pub struct Model {
    pub cfg: ModelConfig,
    pub recon: Reconstruction,
    pub upsampler: Upsampler,
}

/// One recurrence step on a graph.
pub struct StepOut {
    pub hidden: Var,
    pub output: Var,
}

impl Model {
    /// Builds the layers and registers freshly initialized parameters in `store`.
    /// The final output conv starts at zero so the initial model is bicubic upsampling.
    pub fn new(cfg: &ModelConfig, store: &mut ParamStore) -> Result<Self> {
        cfg.validate()?;
        let mut pb = ParamBuilder::new(store, cfg.init_seed);
        let recon = Reconstruction::new(&mut pb, "recon", cfg)?;
        let upsampler = Upsampler::new(&mut pb, "up", cfg.channels[0], cfg.scale)?;
        upsampler.out.zero_init(store)?;
        Ok(Model {
            cfg: cfg.clone(),
            recon,
            upsampler,
        })
    }

    /// Layers only, for a store that is loaded separately.
    pub fn layers(cfg: &ModelConfig) -> Result<Self> {
        Self::new(cfg, &mut ParamStore::new())
    }

    pub fn init(cfg: &ModelConfig) -> Result<(Self, ParamStore)> {
        let mut store = ParamStore::new();
        let m = Self::new(cfg, &mut store)?;
        Ok((m, store))
    }

    pub fn hidden_channels(&self) -> usize {
        self.cfg.channels[0]
    }

    pub fn reconstruct(&self, g: &mut Graph, p: &Bound, frame: Var, h_warped: Var) -> Result<Var> {
        self.recon.forward(g, p, frame, h_warped)
    }

    /// `U(h) + bicubic(frame)`; not clipped.
    pub fn upsample(&self, g: &mut Graph, p: &Bound, h: Var, frame: &Tensor) -> Result<Var> {
        let up = self.upsampler.forward(g, p, h)?;
        let base = g.constant(resize_bicubic(frame, self.cfg.scale as f64)?);
        g.add(up, base)
    }

    pub fn step(&self, g: &mut Graph, p: &Bound, frame: &Tensor, h_warped: Var) -> Result<StepOut> {
        let (c, h, w) = frame.chw()?;
        if c != 3 {
            return Err(Error::dim("model frame", frame.shape(), &[3, h, w]));
        }
        let x = g.constant(frame.clone());
        let hidden = self.reconstruct(g, p, x, h_warped)?;
        let output = self.upsample(g, p, hidden, frame)?;
        Ok(StepOut { hidden, output })
    }
}

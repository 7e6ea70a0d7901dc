//! Standalone builder for the concatenation baseline with residual conv
//! blocks, written directly against the layer primitives. It serves as the
//! reference the configurable [`Model`](super::Model) must reduce to when
//! `fusion = concat` and `block_kind = conv`.

use crate::autodiff::{Graph, Var};
use crate::degradation::resize_bicubic;
use crate::error::Result;
use crate::kernels::ConvSpec;
use crate::nn::{Bound, Conv2d, ParamBuilder, ParamStore};
use crate::tensor::Tensor;

use super::model::LEAKY_SLOPE;

pub struct Baseline {
    channels: Vec<usize>,
    blocks: Vec<usize>,
    scale: usize,
    convs: std::collections::BTreeMap<String, Conv2d>,
}

/// Builds the baseline for the given widths and block counts with parameters
/// initialized from `seed`.
pub fn baseline_model(
    channels: &[usize],
    blocks: &[usize],
    scale: usize,
    seed: u64,
) -> Result<(Baseline, ParamStore)> {
    let mut store = ParamStore::new();
    let mut convs = std::collections::BTreeMap::new();
    let levels = channels.len();
    {
        let mut root = ParamBuilder::new(&mut store, seed);
        let mut pb = root.pp("recon");
        let mut add = |pb: &mut ParamBuilder, key: String, cin, cout, k, spec| {
            let conv = Conv2d::with_spec(pb, &key, cin, cout, k, true, spec);
            convs.insert(pb.path(&key), conv);
        };
        let c0 = channels[0];
        add(&mut pb, "embed".into(), 3, c0, 3, ConvSpec::same(3));
        {
            let mut f = pb.pp("fusion");
            add(&mut f, "reduce".into(), 2 * c0, c0, 1, ConvSpec::same(1));
        }
        for l in 0..levels {
            for i in 0..blocks[l] {
                let mut b = pb.pp(&format!("enc{l}.{i}"));
                add(
                    &mut b,
                    "conv1".into(),
                    channels[l],
                    channels[l],
                    3,
                    ConvSpec::same(3),
                );
                add(
                    &mut b,
                    "conv2".into(),
                    channels[l],
                    channels[l],
                    3,
                    ConvSpec::same(3),
                );
            }
            if l + 1 < levels {
                add(
                    &mut pb,
                    format!("down{l}"),
                    channels[l],
                    channels[l + 1],
                    3,
                    ConvSpec::new(2, 1, 1),
                );
            }
        }
        for l in 0..levels - 1 {
            add(
                &mut pb,
                format!("up{l}"),
                channels[l + 1],
                4 * channels[l],
                3,
                ConvSpec::same(3),
            );
            add(
                &mut pb,
                format!("reduce{l}"),
                2 * channels[l],
                channels[l],
                1,
                ConvSpec::same(1),
            );
            for i in 0..blocks[l] {
                let mut b = pb.pp(&format!("dec{l}.{i}"));
                add(
                    &mut b,
                    "conv1".into(),
                    channels[l],
                    channels[l],
                    3,
                    ConvSpec::same(3),
                );
                add(
                    &mut b,
                    "conv2".into(),
                    channels[l],
                    channels[l],
                    3,
                    ConvSpec::same(3),
                );
            }
        }
        drop(pb);
        let mut up = root.pp("up");
        let stages = if scale == 4 { 2 } else { 1 };
        for i in 0..stages {
            add(
                &mut up,
                format!("stage{i}"),
                c0,
                4 * c0,
                3,
                ConvSpec::same(3),
            );
        }
        add(&mut up, "out".into(), c0, 3, 3, ConvSpec::same(3));
    }
    convs["up.out"].zero_init(&mut store)?;
    Ok((
        Baseline {
            channels: channels.to_vec(),
            blocks: blocks.to_vec(),
            scale,
            convs,
        },
        store,
    ))
}

impl Baseline {
    fn conv(&self, g: &mut Graph, p: &Bound, key: &str, x: Var) -> Result<Var> {
        self.convs[key].forward(g, p, x)
    }

    fn res_block(&self, g: &mut Graph, p: &Bound, prefix: &str, x: Var) -> Result<Var> {
        let y = self.conv(g, p, &format!("{prefix}.conv1"), x)?;
        let y = g.relu(y);
        let y = self.conv(g, p, &format!("{prefix}.conv2"), y)?;
        g.add(x, y)
    }

    /// One recurrence step: `(hidden, output)`.
    pub fn step(
        &self,
        g: &mut Graph,
        p: &Bound,
        frame: &Tensor,
        h_warped: Var,
    ) -> Result<(Var, Var)> {
        let levels = self.channels.len();
        let x = g.constant(frame.clone());
        let f = self.conv(g, p, "recon.embed", x)?;
        let cat = g.concat(&[f, h_warped])?;
        let mut x = self.conv(g, p, "recon.fusion.reduce", cat)?;
        let (_, h, w) = g.value(x).chw()?;
        let m = 1usize << (levels - 1);
        let (pb, pr) = ((m - h % m) % m, (m - w % m) % m);
        if pb + pr > 0 {
            x = g.pad_reflect(x, pb, pr)?;
        }
        let mut skips = vec![];
        for l in 0..levels {
            for i in 0..self.blocks[l] {
                x = self.res_block(g, p, &format!("recon.enc{l}.{i}"), x)?;
            }
            if l + 1 < levels {
                skips.push(x);
                x = self.conv(g, p, &format!("recon.down{l}"), x)?;
            }
        }
        for l in (0..levels - 1).rev() {
            let u = self.conv(g, p, &format!("recon.up{l}"), x)?;
            let u = g.pixel_shuffle(u, 2)?;
            let cat = g.concat(&[u, skips[l]])?;
            x = self.conv(g, p, &format!("recon.reduce{l}"), cat)?;
            for i in 0..self.blocks[l] {
                x = self.res_block(g, p, &format!("recon.dec{l}.{i}"), x)?;
            }
        }
        if pb + pr > 0 {
            x = g.crop(x, h, w)?;
        }
        let hidden = x;
        let stages = if self.scale == 4 { 2 } else { 1 };
        for i in 0..stages {
            x = self.conv(g, p, &format!("up.stage{i}"), x)?;
            x = g.pixel_shuffle(x, 2)?;
            x = g.leaky_relu(x, LEAKY_SLOPE);
        }
        let y = self.conv(g, p, "up.out", x)?;
        let base = g.constant(resize_bicubic(frame, self.scale as f64)?);
        let out = g.add(y, base)?;
        Ok((hidden, out))
    }
}

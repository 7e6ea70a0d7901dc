//! Seeded synthetic clips: a piecewise-smooth scene of gradients, stripes,
//! rectangles and disks translating by a whole number of low-resolution
//! pixels per frame.

use serde::{Deserialize, Serialize};

use crate::degradation::{
    degrade_sequence, resize_bicubic, Degradation, DegradationSpec, JPEG_JITTER,
};
use crate::error::{Error, Result};
use crate::rng::{self, Sampler};
use crate::tensor::Tensor;

use super::train::TrainingPair;

/// Largest per-frame motion, in low-resolution pixels.
pub const MAX_SPEED: i64 = 2;
const SHAPES: usize = 8;
const SUPERSAMPLE: usize = 2;

#[derive(Clone, Debug)]
enum Shape {
    Rect {
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
        color: [f64; 3],
    },
    Disk {
        cx: f64,
        cy: f64,
        r: f64,
        color: [f64; 3],
    },
    Stripes {
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
        fx: f64,
        fy: f64,
        color: [f64; 3],
    },
}

#[derive(Clone, Debug)]
struct Scene {
    base: [f64; 3],
    grad_x: [f64; 3],
    grad_y: [f64; 3],
    shapes: Vec<Shape>,
}

fn color(s: &mut Sampler) -> [f64; 3] {
    [
        s.uniform_range(0.05, 0.95),
        s.uniform_range(0.05, 0.95),
        s.uniform_range(0.05, 0.95),
    ]
}

impl Scene {
    /// Scene on a canvas of `extent` pixels per side, centred on the origin.
    fn random(seed: u64, extent: f64) -> Scene {
        let mut s = Sampler::new(seed);
        let base = color(&mut s);
        let grad = |s: &mut Sampler| {
            [
                s.uniform_range(-0.3, 0.3),
                s.uniform_range(-0.3, 0.3),
                s.uniform_range(-0.3, 0.3),
            ]
        };
        let grad_x = grad(&mut s);
        let grad_y = grad(&mut s);
        let half = extent / 2.0;
        let shapes = (0..SHAPES)
            .map(|_| {
                let kind = s.int_range(0, 2);
                let (cx, cy) = (s.uniform_range(-half, half), s.uniform_range(-half, half));
                let (rw, rh) = (
                    s.uniform_range(0.05, 0.25) * extent,
                    s.uniform_range(0.05, 0.25) * extent,
                );
                let c = color(&mut s);
                match kind {
                    0 => Shape::Rect {
                        x0: cx - rw,
                        y0: cy - rh,
                        x1: cx + rw,
                        y1: cy + rh,
                        color: c,
                    },
                    1 => Shape::Disk {
                        cx,
                        cy,
                        r: rw,
                        color: c,
                    },
                    _ => {
                        let period = s.uniform_range(3.0, 12.0);
                        let angle = s.uniform_range(0.0, std::f64::consts::PI);
                        Shape::Stripes {
                            x0: cx - rw,
                            y0: cy - rh,
                            x1: cx + rw,
                            y1: cy + rh,
                            fx: angle.cos() / period,
                            fy: angle.sin() / period,
                            color: c,
                        }
                    }
                }
            })
            .collect();
        Scene {
            base,
            grad_x,
            grad_y,
            shapes,
        }
    }

    fn sample(&self, x: f64, y: f64, extent: f64) -> [f64; 3] {
        let mut out = [0.0; 3];
        for k in 0..3 {
            out[k] = self.base[k] + self.grad_x[k] * x / extent + self.grad_y[k] * y / extent;
        }
        for shape in &self.shapes {
            match *shape {
                Shape::Rect {
                    x0,
                    y0,
                    x1,
                    y1,
                    color,
                } => {
                    if x >= x0 && x < x1 && y >= y0 && y < y1 {
                        out = color;
                    }
                }
                Shape::Disk { cx, cy, r, color } => {
                    if (x - cx).powi(2) + (y - cy).powi(2) < r * r {
                        out = color;
                    }
                }
                Shape::Stripes {
                    x0,
                    y0,
                    x1,
                    y1,
                    fx,
                    fy,
                    color,
                } => {
                    if x >= x0 && x < x1 && y >= y0 && y < y1 {
                        let a = 0.5 + 0.5 * (2.0 * std::f64::consts::PI * (fx * x + fy * y)).sin();
                        for k in 0..3 {
                            out[k] = a * color[k] + (1.0 - a) * (1.0 - color[k]);
                        }
                    }
                }
            }
        }
        out.map(|v| v.clamp(0.0, 1.0))
    }
}

/// Clean `frames × 3×height×width` clip. The scene moves by `scale × v` pixels
/// per frame for a seeded integer velocity `v` with `|v| ≤ MAX_SPEED`.
pub fn synthetic_clip(
    seed: u64,
    frames: usize,
    height: usize,
    width: usize,
    scale: usize,
) -> Result<Vec<Tensor>> {
    if frames == 0 || height == 0 || width == 0 || scale == 0 {
        return Err(Error::param(
            "clip",
            "frames, height, width and scale must be positive",
        ));
    }
    let extent = 2.0 * height.max(width) as f64;
    let scene = Scene::random(rng::derive(seed, "scene"), extent);
    let mut m = Sampler::new(rng::derive(seed, "motion"));
    let vx = (m.int_range(-MAX_SPEED, MAX_SPEED) * scale as i64) as f64;
    let vy = (m.int_range(-MAX_SPEED, MAX_SPEED) * scale as i64) as f64;
    let ss = SUPERSAMPLE as f64;
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
    Ok((0..frames)
        .map(|t| {
            let (ox, oy) = (vx * t as f64, vy * t as f64);
            let mut img = Tensor::zeros(&[3, height, width]);
            let d = img.data_mut();
            for y in 0..height {
                for x in 0..width {
                    let mut acc = [0.0; 3];
                    for sy in 0..SUPERSAMPLE {
                        for sx in 0..SUPERSAMPLE {
                            let px = x as f64 + (sx as f64 + 0.5) / ss - cx + ox;
                            let py = y as f64 + (sy as f64 + 0.5) / ss - cy + oy;
                            let v = scene.sample(px, py, extent);
                            for k in 0..3 {
                                acc[k] += v[k];
                            }
                        }
                    }
                    for k in 0..3 {
                        d[(k * height + y) * width + x] = acc[k] / (ss * ss);
                    }
                }
            }
            img
        })
        .collect())
}

/// Bicubic `1/scale` downsampling of every frame.
pub fn downsample_clip(hr: &[Tensor], scale: usize) -> Result<Vec<Tensor>> {
    hr.iter()
        .map(|f| Ok(resize_bicubic(f, 1.0 / scale as f64)?.clamp01()))
        .collect()
}

/// Shape of a synthetic training or evaluation clip.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClipConfig {
    pub frames: usize,
    /// High-resolution side length.
    pub size: usize,
    pub scale: usize,
}

impl Default for ClipConfig {
    fn default() -> Self {
        ClipConfig {
            frames: 5,
            size: 64,
            scale: 4,
        }
    }
}

impl ClipConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0
            || self.scale == 0
            || self.size < self.scale
            || self.size % self.scale != 0
        {
            return Err(Error::Config(format!(
                "clip needs frames ≥ 1 and a size that is a positive multiple of scale, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Clip `seed` degraded by a randomly drawn pipeline (temporally jittered compression).
pub fn random_pair(seed: u64, clip: &ClipConfig) -> Result<(TrainingPair, Vec<DegradationSpec>)> {
    clip.validate()?;
    let hr = synthetic_clip(
        rng::derive(seed, "clip"),
        clip.frames,
        clip.size,
        clip.size,
        clip.scale,
    )?;
    let (lr, specs) = degrade_sequence(&hr, clip.scale, rng::derive(seed, "degrade"), JPEG_JITTER)?;
    Ok((TrainingPair { lr, hr }, specs))
}

/// Clip `seed` downsampled and then corrupted by `extra` (blur is applied
/// before downsampling, noise and compression after).
pub fn split_pair(seed: u64, clip: &ClipConfig, extra: &Degradation) -> Result<TrainingPair> {
    clip.validate()?;
    extra.validate()?;
    let hr = synthetic_clip(
        rng::derive(seed, "clip"),
        clip.frames,
        clip.size,
        clip.size,
        clip.scale,
    )?;
    let resize = Degradation::Resize {
        factor: 1.0 / clip.scale as f64,
    };
    let stages = match extra {
        Degradation::Blur { .. } => vec![extra.clone(), resize],
        Degradation::Identity => vec![resize],
        _ => vec![resize, extra.clone()],
    };
    let op = Degradation::Pipeline { stages };
    let lr = hr
        .iter()
        .enumerate()
        .map(|(t, f)| {
            DegradationSpec::new(
                op.clone(),
                rng::derive_index(rng::derive(seed, "split"), t as u64),
            )
            .apply(f)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainingPair { lr, hr })
}

//! Seeded synthesis of blur, noise, JPEG-like compression and bicubic resizing.

mod blur;
mod jpeg;
mod noise;
mod resize;

pub use blur::{gaussian_blur, gaussian_kernel};
pub use jpeg::{jpeg_like_compress, quant_table};
pub use noise::add_gaussian_noise;
pub use resize::{cubic, resize_bicubic, resize_to, resized_len};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};
use crate::tensor::Tensor;

pub const BLUR_SIGMA_RANGE: (f64, f64) = (0.2, 3.0);
pub const NOISE_SIGMA_RANGE: (f64, f64) = (0.0, 0.1);
pub const JPEG_QUALITY_RANGE: (u8, u8) = (30, 95);
/// Default half-width of the per-frame quality jitter in sequences.
pub const JPEG_JITTER: u8 = 5;

/// One degradation operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Degradation {
    Identity,
    Blur {
        sigma: f64,
    },
    Noise {
        sigma: f64,
    },
    Jpeg {
        quality: u8,
    },
    Resize {
        factor: f64,
    },
    /// Stages applied in order; stage `i` uses seed `derive_index(seed, i)`.
    Pipeline {
        stages: Vec<Degradation>,
    },
}

impl Degradation {
    pub fn validate(&self) -> Result<()> {
        match self {
            Degradation::Identity => Ok(()),
            Degradation::Blur { sigma } => gaussian_kernel(*sigma).map(|_| ()),
            Degradation::Noise { sigma } if !(*sigma >= 0.0) || !sigma.is_finite() => {
                Err(Error::param(
                    "noise.sigma",
                    format!("must be finite and >= 0, got {sigma}"),
                ))
            }
            Degradation::Noise { .. } => Ok(()),
            Degradation::Jpeg { quality } => quant_table(*quality, false).map(|_| ()),
            Degradation::Resize { factor } if !(*factor > 0.0) || !factor.is_finite() => {
                Err(Error::param(
                    "resize.factor",
                    format!("must be finite and > 0, got {factor}"),
                ))
            }
            Degradation::Resize { .. } => Ok(()),
            Degradation::Pipeline { stages } => stages.iter().try_for_each(Degradation::validate),
        }
    }

    pub fn apply(&self, img: &Tensor, seed: u64) -> Result<Tensor> {
        match self {
            Degradation::Identity => Ok(img.clone()),
            Degradation::Blur { sigma } => gaussian_blur(img, *sigma),
            Degradation::Noise { sigma } => add_gaussian_noise(img, *sigma, seed),
            Degradation::Jpeg { quality } => jpeg_like_compress(img, *quality),
            Degradation::Resize { factor } => resize_bicubic(img, *factor),
            Degradation::Pipeline { stages } => {
                let mut out = img.clone();
                for (i, stage) in stages.iter().enumerate() {
                    out = stage.apply(&out, rng::derive_index(seed, i as u64))?;
                }
                Ok(out)
            }
        }
    }

    /// Human-readable label used in reports (`blur`, `noise`, `jpeg`, ...).
    pub fn label(&self) -> &'static str {
        match self {
            Degradation::Identity => "identity",
            Degradation::Blur { .. } => "blur",
            Degradation::Noise { .. } => "noise",
            Degradation::Jpeg { .. } => "jpeg",
            Degradation::Resize { .. } => "resize",
            Degradation::Pipeline { .. } => "pipeline",
        }
    }
}

/// A degradation together with the seed that fixes its random draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradationSpec {
    #[serde(flatten)]
    pub op: Degradation,
    pub seed: u64,
}

impl DegradationSpec {
    pub fn new(op: Degradation, seed: u64) -> Self {
        DegradationSpec { op, seed }
    }

    pub fn apply(&self, img: &Tensor) -> Result<Tensor> {
        self.op.validate()?;
        self.op.apply(img, self.seed)
    }
}

/// Draws the random real-world pipeline for `seed`:
/// blur σ, noise σ and JPEG quality (draw counters 0, 1, 2), with the stages
/// applied as blur → downscale by `1/scale` → noise → JPEG.
pub fn draw_pipeline(scale: usize, seed: u64) -> DegradationSpec {
    let s = Stream::new(rng::derive(seed, "pipeline"));
    let blur = s.uniform_range(0, BLUR_SIGMA_RANGE.0, BLUR_SIGMA_RANGE.1);
    let noise = s.uniform_range(1, NOISE_SIGMA_RANGE.0, NOISE_SIGMA_RANGE.1);
    let quality = s.int_range(2, JPEG_QUALITY_RANGE.0 as i64, JPEG_QUALITY_RANGE.1 as i64) as u8;
    let stages = vec![
        Degradation::Blur { sigma: blur },
        Degradation::Resize {
            factor: 1.0 / scale as f64,
        },
        Degradation::Noise { sigma: noise },
        Degradation::Jpeg { quality },
    ];
    DegradationSpec::new(Degradation::Pipeline { stages }, seed)
}

/// Degrades one HR frame into an LR frame; returns the output and the exact spec.
pub fn random_pipeline(img: &Tensor, scale: usize, seed: u64) -> Result<(Tensor, DegradationSpec)> {
    let spec = draw_pipeline(scale, seed);
    let out = spec.apply(img)?;
    Ok((out, spec))
}

/// Degrades a clip with one pipeline draw shared by all frames; the noise
/// field is drawn per frame and JPEG quality jitters as
/// `q_t = clamp(q + j_t, 1, 100)`, `j_t ∈ [−jitter, jitter]`.
pub fn degrade_sequence(
    frames: &[Tensor],
    scale: usize,
    seed: u64,
    jitter: u8,
) -> Result<(Vec<Tensor>, Vec<DegradationSpec>)> {
    let base = draw_pipeline(scale, seed);
    let jit = Stream::new(rng::derive(seed, "jitter"));
    let Degradation::Pipeline { stages } = &base.op else {
        unreachable!("draw_pipeline returns a pipeline")
    };
    let mut outs = Vec::with_capacity(frames.len());
    let mut specs = Vec::with_capacity(frames.len());
    for (t, frame) in frames.iter().enumerate() {
        let j = jit.int_range(t as u64, -(jitter as i64), jitter as i64);
        let stages = stages
            .iter()
            .map(|s| match s {
                Degradation::Jpeg { quality } => Degradation::Jpeg {
                    quality: (*quality as i64 + j).clamp(1, 100) as u8,
                },
                other => other.clone(),
            })
            .collect();
        let spec = DegradationSpec::new(
            Degradation::Pipeline { stages },
            rng::derive_index(seed, t as u64),
        );
        outs.push(spec.apply(frame)?);
        specs.push(spec);
    }
    Ok((outs, specs))
}

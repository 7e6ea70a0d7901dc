//! Measurement instruments: channel covariance indicator, similarity and
//! fidelity metrics, radial power spectrum, and differentiable losses.

mod covariance;
mod losses;
mod metrics;
mod spectrum;

pub use covariance::{ac_indicator, covariance_matrix, AcMode, FeatureBatch};
pub use losses::{charbonnier_loss, reconstruction_loss, ssim_graph};
pub use metrics::{
    charbonnier, cosine_similarity, psnr, ssim, ssim_kernel, ssim_window, to_gray, CHARBONNIER_EPS,
    LUMA, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW,
};
pub use spectrum::{frequency, power_spectrum, radial_bin, radial_power_spectrum, RadialSpectrum};

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Psnr,
    Ssim,
    Charbonnier,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Psnr => "psnr",
            Metric::Ssim => "ssim",
            Metric::Charbonnier => "charbonnier",
        }
    }

    pub fn eval(self, reference: &Tensor, out: &Tensor) -> Result<f64> {
        match self {
            Metric::Psnr => psnr(reference, out),
            Metric::Ssim => ssim(reference, out),
            Metric::Charbonnier => charbonnier(reference, out, CHARBONNIER_EPS),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "psnr" => Ok(Metric::Psnr),
            "ssim" => Ok(Metric::Ssim),
            "charbonnier" => Ok(Metric::Charbonnier),
            other => Err(Error::Usage(format!(
                "unknown metric `{other}` (expected psnr, ssim or charbonnier)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricSeries {
    pub per_frame: Vec<f64>,
    pub mean: f64,
}

/// Per-frame values and their arithmetic mean for each requested metric.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MetricReport {
    pub metrics: BTreeMap<Metric, MetricSeries>,
}

impl MetricReport {
    pub fn compute(references: &[Tensor], outputs: &[Tensor], metrics: &[Metric]) -> Result<Self> {
        if references.len() != outputs.len() || references.is_empty() {
            return Err(Error::Usage(format!(
                "metric report needs equal, non-zero frame counts, got {} and {}",
                references.len(),
                outputs.len()
            )));
        }
        let mut report = MetricReport::default();
        for &m in metrics {
            let per_frame = references
                .iter()
                .zip(outputs)
                .map(|(r, o)| m.eval(r, o))
                .collect::<Result<Vec<_>>>()?;
            let mean = per_frame.iter().sum::<f64>() / per_frame.len() as f64;
            report.metrics.insert(m, MetricSeries { per_frame, mean });
        }
        Ok(report)
    }

    pub fn mean(&self, m: Metric) -> Option<f64> {
        self.metrics.get(&m).map(|s| s.mean)
    }
}

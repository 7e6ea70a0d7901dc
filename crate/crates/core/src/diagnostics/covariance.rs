use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Samples `z¹…z^N`, each `C×H×W` (or any shape whose leading axis is channels).
#[derive(Clone, Debug)]
pub struct FeatureBatch {
    samples: Vec<Tensor>,
}

impl FeatureBatch {
    pub fn new(samples: Vec<Tensor>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::param("feature_batch", "needs at least one sample"))?;
        if let Some(bad) = samples.iter().find(|s| s.shape() != first.shape()) {
            return Err(Error::dim("feature_batch", first.shape(), bad.shape()));
        }
        Ok(FeatureBatch { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.samples[0].shape()[0]
    }

    pub fn samples(&self) -> &[Tensor] {
        &self.samples
    }
}

/// How off-diagonal covariance entries are scaled before averaging.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcMode {
    /// Raw covariance entries.
    #[default]
    Raw,
    /// Entries divided by `√(Cov_ii Cov_jj)` (not part of the original indicator).
    Correlation,
}

/// `Cov_ij = 1/(N−1) Σ_n Σ_p (z^n − z̄)_{ip} (z^n − z̄)_{jp}` with `p` running over `H·W`.
pub fn covariance_matrix(batch: &FeatureBatch) -> Result<Tensor> {
    let n = batch.len();
    if n < 2 {
        return Err(Error::param(
            "covariance",
            format!("needs N >= 2 samples, got {n}"),
        ));
    }
    let c = batch.channels();
    let len = batch.samples[0].numel() / c;
    let mut mean = vec![0.0; c * len];
    for s in &batch.samples {
        for (m, v) in mean.iter_mut().zip(s.data()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0; c * c];
    for s in &batch.samples {
        let d: Vec<f64> = s.data().iter().zip(&mean).map(|(v, m)| v - m).collect();
        for i in 0..c {
            for j in i..c {
                let dot: f64 = d[i * len..(i + 1) * len]
                    .iter()
                    .zip(&d[j * len..(j + 1) * len])
                    .map(|(a, b)| a * b)
                    .sum();
                cov[i * c + j] += dot;
            }
        }
    }
    for i in 0..c {
        for j in i..c {
            cov[i * c + j] /= (n - 1) as f64;
            cov[j * c + i] = cov[i * c + j];
        }
    }
    Tensor::new(&[c, c], cov)
}

/// `ac(Z) = 1/(C²−C) Σ_{i≠j} |Cov(Z)_ij|`.
pub fn ac_indicator(batch: &FeatureBatch, mode: AcMode) -> Result<f64> {
    let c = batch.channels();
    if c < 2 {
        return Err(Error::param(
            "ac_indicator",
            format!("needs C >= 2 channels, got {c}"),
        ));
    }
    let cov = covariance_matrix(batch)?;
    let m = cov.data();
    let mut total = 0.0;
    for i in 0..c {
        for j in 0..c {
            if i == j {
                continue;
            }
            total += match mode {
                AcMode::Raw => m[i * c + j].abs(),
                AcMode::Correlation => {
                    let denom = (m[i * c + i] * m[j * c + j]).sqrt();
                    if denom > 0.0 {
                        m[i * c + j].abs() / denom
                    } else {
                        0.0
                    }
                }
            };
        }
    }
    Ok(total / (c * c - c) as f64)
}

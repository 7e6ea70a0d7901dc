use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::metrics::to_gray;

/// Annular average of `|F|²` (unnormalized DFT) over equal-width radial bins
/// from 0 to the Nyquist radius 0.5 cycles/pixel. Frequencies beyond Nyquist
/// (the spectrum's corners) fall into the last bin.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RadialSpectrum {
    pub power: Vec<f64>,
    pub counts: Vec<usize>,
}

impl RadialSpectrum {
    /// `Σ_b power_b · count_b`, the total spectral energy.
    pub fn total_energy(&self) -> f64 {
        self.power
            .iter()
            .zip(&self.counts)
            .map(|(p, &c)| p * c as f64)
            .sum()
    }
}

/// Signed frequency of DFT index `k` out of `n`, in cycles/sample.
pub fn frequency(k: usize, n: usize) -> f64 {
    let k = if 2 * k >= n + (n % 2) && k > 0 {
        k as f64 - n as f64
    } else {
        k as f64
    };
    k / n as f64
}

pub fn radial_bin(fy: f64, fx: f64, bins: usize) -> usize {
    let r = (fy * fy + fx * fx).sqrt();
    ((r * 2.0 * bins as f64) as usize).min(bins - 1)
}

/// `|F(ky, kx)|²` of a 2-D plane `h×w`, row-major.
pub fn power_spectrum(plane: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut planner = FftPlanner::<f64>::new();
    let row_fft = planner.plan_fft_forward(w);
    let col_fft = planner.plan_fft_forward(h);
    let mut buf: Vec<Complex<f64>> = plane.iter().map(|&v| Complex::new(v, 0.0)).collect();
    for row in buf.chunks_mut(w) {
        row_fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = buf[y * w + x];
        }
        col_fft.process(&mut col);
        for y in 0..h {
            buf[y * w + x] = col[y];
        }
    }
    buf.iter().map(|c| c.norm_sqr()).collect()
}

/// Radial power spectrum of the luma plane of `img` (`3×H×W` or `1×H×W`).
pub fn radial_power_spectrum(img: &Tensor, bins: usize) -> Result<RadialSpectrum> {
    if bins < 2 {
        return Err(Error::param(
            "rps.bins",
            format!("needs at least 2 bins, got {bins}"),
        ));
    }
    let gray = to_gray(img)?;
    let (h, w) = (gray.shape()[0], gray.shape()[1]);
    let power = power_spectrum(gray.data(), h, w);
    let mut sums = vec![0.0; bins];
    let mut counts = vec![0usize; bins];
    for ky in 0..h {
        for kx in 0..w {
            let b = radial_bin(frequency(ky, h), frequency(kx, w), bins);
            sums[b] += power[ky * w + kx];
            counts[b] += 1;
        }
    }
    let power = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect();
    Ok(RadialSpectrum { power, counts })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequencies_wrap_at_nyquist() {
        let f: Vec<f64> = (0..4).map(|k| frequency(k, 4)).collect();
        assert_eq!(f, vec![0.0, 0.25, -0.5, -0.25]);
        let f: Vec<f64> = (0..5).map(|k| frequency(k, 5)).collect();
        assert_eq!(f, vec![0.0, 0.2, 0.4, -0.4, -0.2]);
    }

    #[test]
    fn constant_image_has_only_dc() {
        let img = Tensor::full(&[1, 8, 8], 0.7);
        let rps = radial_power_spectrum(&img, 4).unwrap();
        assert!((rps.power[0] * rps.counts[0] as f64 - (0.7 * 64.0f64).powi(2)).abs() < 1e-9);
        assert!(rps.power[1..].iter().all(|p| p.abs() < 1e-9));
        assert_eq!(rps.counts.iter().sum::<usize>(), 64);
    }

    #[test]
    fn needs_two_bins() {
        assert!(radial_power_spectrum(&Tensor::zeros(&[1, 4, 4]), 1).is_err());
    }
}

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Normalized 1-D Gaussian taps for radius `⌈3σ⌉`; `[1.0]` for `σ = 0`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::param(
            "blur.sigma",
            format!("must be finite and >= 0, got {sigma}"),
        ));
    }
    if sigma == 0.0 {
        return Ok(vec![1.0]);
    }
    let r = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    Ok(taps.into_iter().map(|t| t / total).collect())
}

/// Separable Gaussian blur of every channel with replicated borders.
pub fn gaussian_blur(img: &Tensor, sigma: f64) -> Result<Tensor> {
    let taps = gaussian_kernel(sigma)?;
    let (c, h, w) = img.chw()?;
    if taps.len() == 1 {
        return Ok(img.clone());
    }
    let r = (taps.len() / 2) as isize;
    let src = img.data();
    let mut tmp = vec![0.0; src.len()];
    for ch in 0..c {
        for y in 0..h {
            let row = &src[(ch * h + y) * w..(ch * h + y + 1) * w];
            for x in 0..w {
                tmp[(ch * h + y) * w + x] = taps
                    .iter()
                    .enumerate()
                    .map(|(k, t)| {
                        t * row[(x as isize + k as isize - r).clamp(0, w as isize - 1) as usize]
                    })
                    .sum();
            }
        }
    }
    let mut out = vec![0.0; src.len()];
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                out[(ch * h + y) * w + x] = taps
                    .iter()
                    .enumerate()
                    .map(|(k, t)| {
                        let yy = (y as isize + k as isize - r).clamp(0, h as isize - 1) as usize;
                        t * tmp[(ch * h + yy) * w + x]
                    })
                    .sum();
            }
        }
    }
    Tensor::new(img.shape(), out)
}

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Keys cubic convolution kernel with `a = −0.5`.
pub fn cubic(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

/// Output extent for `n` input samples at `factor`: `round(n·factor)`, at least 1.
pub fn resized_len(n: usize, factor: f64) -> usize {
    ((n as f64 * factor).round() as usize).max(1)
}

/// Sparse interpolation weights: for every output sample the `(index, weight)` taps.
/// When shrinking, the kernel is stretched by `1/scale` (antialiasing); indices
/// are clamped to the border and weights normalized to sum 1.
fn contributions(n_in: usize, n_out: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = n_out as f64 / n_in as f64;
    let stretch = if scale < 1.0 { scale } else { 1.0 };
    let support = 2.0 / stretch;
    (0..n_out)
        .map(|o| {
            let center = (o as f64 + 0.5) / scale - 0.5;
            let lo = (center - support).floor() as isize;
            let hi = (center + support).ceil() as isize;
            let mut taps: Vec<(usize, f64)> = Vec::new();
            for i in lo..=hi {
                let wgt = stretch * cubic(stretch * (center - i as f64));
                if wgt == 0.0 {
                    continue;
                }
                let idx = i.clamp(0, n_in as isize - 1) as usize;
                match taps.iter_mut().find(|t| t.0 == idx) {
                    Some(t) => t.1 += wgt,
                    None => taps.push((idx, wgt)),
                }
            }
            let total: f64 = taps.iter().map(|t| t.1).sum();
            taps.iter_mut().for_each(|t| t.1 /= total);
            taps
        })
        .collect()
}

/// Bicubic resampling of every channel by `factor` (same factor on both axes),
/// clipped to `[0, 1]`.
pub fn resize_bicubic(img: &Tensor, factor: f64) -> Result<Tensor> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(Error::param(
            "resize.factor",
            format!("must be finite and > 0, got {factor}"),
        ));
    }
    let (_, h, w) = img.chw()?;
    resize_to(img, resized_len(h, factor), resized_len(w, factor))
}

/// Bicubic resampling to an explicit `out_h × out_w`, clipped to `[0, 1]`.
pub fn resize_to(img: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (c, h, w) = img.chw()?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::param(
            "resize.size",
            "output extents must be positive",
        ));
    }
    if (out_h, out_w) == (h, w) {
        return Ok(img.clone());
    }
    let rows = contributions(h, out_h);
    let cols = contributions(w, out_w);
    let src = img.data();
    let mut tmp = vec![0.0; c * h * out_w];
    for ch in 0..c {
        for y in 0..h {
            for (x, taps) in cols.iter().enumerate() {
                tmp[(ch * h + y) * out_w + x] = taps
                    .iter()
                    .map(|&(i, wt)| wt * src[(ch * h + y) * w + i])
                    .sum();
            }
        }
    }
    let mut out = vec![0.0; c * out_h * out_w];
    for ch in 0..c {
        for (y, taps) in rows.iter().enumerate() {
            for x in 0..out_w {
                out[(ch * out_h + y) * out_w + x] = taps
                    .iter()
                    .map(|&(i, wt)| wt * tmp[(ch * h + i) * out_w + x])
                    .sum::<f64>()
                    .clamp(0.0, 1.0);
            }
        }
    }
    Tensor::new(&[c, out_h, out_w], out)
}

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const CHARBONNIER_EPS: f64 = 1e-3;
/// BT.601 luma weights.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dim(op, a.shape(), b.shape()));
    }
    Ok(())
}

/// `⟨a, b⟩ / (‖a‖ ‖b‖)`; 0 when either norm is 0.
pub fn cosine_similarity(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.numel() != b.numel() {
        return Err(Error::dim("cosine_similarity", a.shape(), b.shape()));
    }
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.data().iter().zip(b.data()) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return Ok(0.0);
    }
    // sqrt(aa * aa) == aa exactly, so identical inputs give exactly 1.
    let denom = match aa * bb {
        p if p.is_finite() && p > 0.0 => p.sqrt(),
        _ => aa.sqrt() * bb.sqrt(),
    };
    Ok((ab / denom).clamp(-1.0, 1.0))
}

/// `10 log10(1 / MSE)` on the `[0, 1]` scale; `+∞` for identical inputs.
pub fn psnr(reference: &Tensor, out: &Tensor) -> Result<f64> {
    same_shape("psnr", reference, out)?;
    let mse = reference
        .data()
        .iter()
        .zip(out.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / reference.numel() as f64;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    })
}

/// Mean of `√(d² + ε²)`, evaluated as `ε + mean(d² / (√(d² + ε²) + ε))` so
/// that equal inputs return `ε` exactly.
pub fn charbonnier(reference: &Tensor, out: &Tensor, eps: f64) -> Result<f64> {
    same_shape("charbonnier", reference, out)?;
    if !(eps > 0.0) {
        return Err(Error::param(
            "charbonnier.eps",
            format!("must be > 0, got {eps}"),
        ));
    }
    let excess: f64 = reference
        .data()
        .iter()
        .zip(out.data())
        .map(|(a, b)| {
            let d2 = (a - b) * (a - b);
            d2 / ((d2 + eps * eps).sqrt() + eps)
        })
        .sum();
    Ok(eps + excess / reference.numel() as f64)
}

/// Luma plane `H×W` of a 3-channel image; single-channel input is returned as is.
pub fn to_gray(img: &Tensor) -> Result<Tensor> {
    let (c, h, w) = img.chw()?;
    match c {
        1 => img.reshape(&[h, w]),
        3 => {
            let d = img.data();
            let n = h * w;
            Tensor::new(
                &[h, w],
                (0..n)
                    .map(|i| LUMA[0] * d[i] + LUMA[1] * d[n + i] + LUMA[2] * d[2 * n + i])
                    .collect(),
            )
        }
        _ => Err(Error::dim("to_gray", img.shape(), &[3, h, w])),
    }
}

/// Side of the SSIM window for an `h×w` image: 11, or the largest odd size that fits.
pub fn ssim_window(h: usize, w: usize) -> usize {
    let s = SSIM_WINDOW.min(h).min(w);
    if s % 2 == 0 {
        s - 1
    } else {
        s
    }
}

/// Normalized 2-D Gaussian window, `win×win`, σ = 1.5.
pub fn ssim_kernel(win: usize) -> Vec<f64> {
    let r = (win / 2) as f64;
    let g: Vec<f64> = (0..win)
        .map(|i| (-((i as f64 - r).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    let g: Vec<f64> = g.iter().map(|v| v / s).collect();
    let mut k = vec![0.0; win * win];
    for y in 0..win {
        for x in 0..win {
            k[y * win + x] = g[y] * g[x];
        }
    }
    k
}

/// Mean SSIM of the luma planes over all valid window positions.
pub fn ssim(reference: &Tensor, out: &Tensor) -> Result<f64> {
    same_shape("ssim", reference, out)?;
    let a = to_gray(reference)?;
    let b = to_gray(out)?;
    let (h, w) = (a.shape()[0], a.shape()[1]);
    let win = ssim_window(h, w);
    let k = ssim_kernel(win);
    let (c1, c2) = ((SSIM_K1).powi(2), (SSIM_K2).powi(2));
    let (oh, ow) = (h - win + 1, w - win + 1);
    let (ad, bd) = (a.data(), b.data());
    let mut total = 0.0;
    for y in 0..oh {
        for x in 0..ow {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for ky in 0..win {
                for kx in 0..win {
                    let wt = k[ky * win + kx];
                    let (va, vb) = (ad[(y + ky) * w + x + kx], bd[(y + ky) * w + x + kx]);
                    ma += wt * va;
                    mb += wt * vb;
                    saa += wt * va * va;
                    sbb += wt * vb * vb;
                    sab += wt * va * vb;
                }
            }
            let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
    }
    Ok(total / (oh * ow) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_closed_forms() {
        let zeros = Tensor::zeros(&[3, 4, 4]);
        let ones = Tensor::full(&[3, 4, 4], 1.0);
        assert_eq!(psnr(&zeros, &zeros).unwrap(), f64::INFINITY);
        assert_eq!(psnr(&zeros, &ones).unwrap(), 0.0);
        let step = Tensor::full(&[3, 4, 4], 1.0 / 255.0);
        assert!((psnr(&zeros, &step).unwrap() - 48.1308).abs() < 1e-4);
        assert!(psnr(&zeros, &Tensor::zeros(&[3, 4, 5])).is_err());
    }

    #[test]
    fn charbonnier_closed_forms() {
        let a = Tensor::full(&[2, 3], 0.25);
        assert_eq!(
            charbonnier(&a, &a, CHARBONNIER_EPS).unwrap(),
            CHARBONNIER_EPS
        );
        let b = a.map(|v| v + 1.0);
        assert!((charbonnier(&a, &b, 1e-3).unwrap() - (1.0f64 + 1e-6).sqrt()).abs() < 1e-15);
        assert!(charbonnier(&a, &b, 0.0).is_err());
    }

    #[test]
    fn cosine_edge_cases() {
        let v = Tensor::new(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        let e0 = Tensor::new(&[2], vec![1.0, 0.0]).unwrap();
        let e1 = Tensor::new(&[2], vec![0.0, 1.0]).unwrap();
        assert_eq!(cosine_similarity(&e0, &e1).unwrap(), 0.0);
        assert_eq!(cosine_similarity(&e0, &Tensor::zeros(&[2])).unwrap(), 0.0);
    }

    #[test]
    fn ssim_constant_images() {
        let a = Tensor::zeros(&[3, 16, 16]);
        let b = Tensor::full(&[3, 16, 16], 1.0);
        let c1 = SSIM_K1 * SSIM_K1;
        assert!((ssim(&a, &b).unwrap() - c1 / (1.0 + c1)).abs() < 1e-12);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn small_images_shrink_the_window() {
        assert_eq!(ssim_window(64, 64), 11);
        assert_eq!(ssim_window(8, 20), 7);
        assert_eq!(ssim_window(1, 5), 1);
        let a = Tensor::from_fn(&[1, 4, 6], |i| (i as f64 * 0.37).sin().abs());
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }
}

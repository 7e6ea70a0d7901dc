//! Differentiable counterparts of the reconstruction metrics.

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::kernels::ConvSpec;
use crate::tensor::Tensor;

use super::metrics::{ssim_kernel, ssim_window, LUMA, SSIM_K1, SSIM_K2};

/// Mean of `√((pred − target)² + ε²)`.
pub fn charbonnier_loss(g: &mut Graph, pred: Var, target: Var, eps: f64) -> Result<Var> {
    let d = g.sub(pred, target)?;
    let d2 = g.mul(d, d)?;
    let d2 = g.add_scalar(d2, eps * eps);
    let r = g.sqrt(d2);
    Ok(g.mean(r))
}

fn gray(g: &mut Graph, x: Var) -> Result<Var> {
    match g.shape(x)[0] {
        1 => Ok(x),
        3 => {
            let w = g.constant(Tensor::new(&[1, 3, 1, 1], LUMA.to_vec())?);
            g.conv2d(x, w, None, ConvSpec::new(1, 0, 1))
        }
        _ => Err(Error::dim("ssim", g.shape(x), &[3])),
    }
}

/// Mean SSIM of the luma planes, built from tape operations (same definition
/// as [`super::ssim`]).
pub fn ssim_graph(g: &mut Graph, pred: Var, target: Var) -> Result<Var> {
    if g.shape(pred) != g.shape(target) {
        return Err(Error::dim("ssim", g.shape(pred), g.shape(target)));
    }
    let a = gray(g, pred)?;
    let b = gray(g, target)?;
    let (_, h, w) = g.value(a).chw()?;
    let win = ssim_window(h, w);
    let k = g.constant(Tensor::new(&[1, 1, win, win], ssim_kernel(win))?);
    let valid = ConvSpec::new(1, 0, 1);
    let filt = |g: &mut Graph, x: Var| g.conv2d(x, k, None, valid);
    let ma = filt(g, a)?;
    let mb = filt(g, b)?;
    let aa = g.mul(a, a)?;
    let bb = g.mul(b, b)?;
    let ab = g.mul(a, b)?;
    let saa = filt(g, aa)?;
    let sbb = filt(g, bb)?;
    let sab = filt(g, ab)?;
    let mama = g.mul(ma, ma)?;
    let mbmb = g.mul(mb, mb)?;
    let mamb = g.mul(ma, mb)?;
    let va = g.sub(saa, mama)?;
    let vb = g.sub(sbb, mbmb)?;
    let cov = g.sub(sab, mamb)?;
    let (c1, c2) = (SSIM_K1 * SSIM_K1, SSIM_K2 * SSIM_K2);
    let n1 = g.mul_scalar(mamb, 2.0);
    let n1 = g.add_scalar(n1, c1);
    let n2 = g.mul_scalar(cov, 2.0);
    let n2 = g.add_scalar(n2, c2);
    let d1 = g.add(mama, mbmb)?;
    let d1 = g.add_scalar(d1, c1);
    let d2 = g.add(va, vb)?;
    let d2 = g.add_scalar(d2, c2);
    let num = g.mul(n1, n2)?;
    let den = g.mul(d1, d2)?;
    let map = g.div(num, den)?;
    Ok(g.mean(map))
}

/// `charbonnier + λ (1 − SSIM)`.
pub fn reconstruction_loss(
    g: &mut Graph,
    pred: Var,
    target: Var,
    eps: f64,
    ssim_weight: f64,
) -> Result<Var> {
    let c = charbonnier_loss(g, pred, target, eps)?;
    if ssim_weight == 0.0 {
        return Ok(c);
    }
    let s = ssim_graph(g, pred, target)?;
    let one_minus = g.mul_scalar(s, -ssim_weight);
    let term = g.add_scalar(one_minus, ssim_weight);
    g.add(c, term)
}

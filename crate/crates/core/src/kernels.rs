//! Forward kernels (and the adjoint helpers the tape needs) on plain tensors.
//!
//! Borders use replicate ("clamp") padding everywhere except the window
//! attention pad-to-multiple, which reflects.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub stride: usize,
    pub pad: usize,
    pub groups: usize,
}

impl ConvSpec {
    pub const fn new(stride: usize, pad: usize, groups: usize) -> Self {
        ConvSpec {
            stride,
            pad,
            groups,
        }
    }

    /// Stride 1, "same" padding for an odd kernel of side `k`.
    pub const fn same(k: usize) -> Self {
        ConvSpec::new(1, k / 2, 1)
    }
}

struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    oc: usize,
    icg: usize,
    kh: usize,
    kw: usize,
    hp: usize,
    wp: usize,
    ho: usize,
    wo: usize,
}

fn conv_geometry(x: &Tensor, w: &Tensor, spec: ConvSpec) -> Result<ConvGeom> {
    let (c, h, wd) = x.chw()?;
    let [oc, icg, kh, kw] = w.shape()[..] else {
        return Err(Error::dim("conv2d", x.shape(), w.shape()));
    };
    if spec.groups == 0 || spec.stride == 0 {
        return Err(Error::param("conv2d", "stride and groups must be positive"));
    }
    if c % spec.groups != 0 || oc % spec.groups != 0 || icg * spec.groups != c {
        return Err(Error::dim("conv2d", x.shape(), w.shape()));
    }
    let (hp, wp) = (h + 2 * spec.pad, wd + 2 * spec.pad);
    if hp < kh || wp < kw {
        return Err(Error::dim("conv2d", x.shape(), w.shape()));
    }
    Ok(ConvGeom {
        c,
        h,
        w: wd,
        oc,
        icg,
        kh,
        kw,
        hp,
        wp,
        ho: (hp - kh) / spec.stride + 1,
        wo: (wp - kw) / spec.stride + 1,
    })
}

/// Replicate-pads every channel of `x` by `pad` on all four sides.
pub fn pad_replicate(x: &[f64], c: usize, h: usize, w: usize, pad: usize) -> Vec<f64> {
    if pad == 0 {
        return x.to_vec();
    }
    let (hp, wp) = (h + 2 * pad, w + 2 * pad);
    let mut out = vec![0.0; c * hp * wp];
    for ch in 0..c {
        let src = &x[ch * h * w..(ch + 1) * h * w];
        let dst = &mut out[ch * hp * wp..(ch + 1) * hp * wp];
        for yy in 0..hp {
            let sy = (yy as isize - pad as isize).clamp(0, h as isize - 1) as usize;
            for xx in 0..wp {
                let sx = (xx as isize - pad as isize).clamp(0, w as isize - 1) as usize;
                dst[yy * wp + xx] = src[sy * w + sx];
            }
        }
    }
    out
}

/// Adjoint of [`pad_replicate`]: folds border contributions back onto the edge pixels.
fn unpad_replicate_add(dp: &[f64], c: usize, h: usize, w: usize, pad: usize) -> Vec<f64> {
    if pad == 0 {
        return dp.to_vec();
    }
    let (hp, wp) = (h + 2 * pad, w + 2 * pad);
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        let src = &dp[ch * hp * wp..(ch + 1) * hp * wp];
        let dst = &mut out[ch * h * w..(ch + 1) * h * w];
        for yy in 0..hp {
            let sy = (yy as isize - pad as isize).clamp(0, h as isize - 1) as usize;
            for xx in 0..wp {
                let sx = (xx as isize - pad as isize).clamp(0, w as isize - 1) as usize;
                dst[sy * w + sx] += src[yy * wp + xx];
            }
        }
    }
    out
}

/// 2-D cross-correlation of a `C×H×W` input with an `O×(C/groups)×kh×kw` kernel stack.
pub fn conv2d(x: &Tensor, w: &Tensor, bias: Option<&Tensor>, spec: ConvSpec) -> Result<Tensor> {
    let g = conv_geometry(x, w, spec)?;
    if let Some(b) = bias {
        if b.numel() != g.oc {
            return Err(Error::dim("conv2d bias", b.shape(), &[g.oc]));
        }
    }
    let padded = pad_replicate(x.data(), g.c, g.h, g.w, spec.pad);
    let wdata = w.data();
    let ocg = g.oc / spec.groups;
    let s = spec.stride;
    let mut out = vec![0.0; g.oc * g.ho * g.wo];
    out.par_chunks_mut(g.ho * g.wo)
        .enumerate()
        .for_each(|(o, out_c)| {
            if let Some(b) = bias {
                out_c.fill(b.data()[o]);
            }
            let grp = o / ocg;
            for i in 0..g.icg {
                let ic = grp * g.icg + i;
                let src = &padded[ic * g.hp * g.wp..(ic + 1) * g.hp * g.wp];
                for ky in 0..g.kh {
                    for kx in 0..g.kw {
                        let wv = wdata[((o * g.icg + i) * g.kh + ky) * g.kw + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        for y in 0..g.ho {
                            let row = &src[(y * s + ky) * g.wp + kx..];
                            let orow = &mut out_c[y * g.wo..(y + 1) * g.wo];
                            if s == 1 {
                                for (o_v, &r) in orow.iter_mut().zip(row) {
                                    *o_v += wv * r;
                                }
                            } else {
                                for (xo, o_v) in orow.iter_mut().enumerate() {
                                    *o_v += wv * row[xo * s];
                                }
                            }
                        }
                    }
                }
            }
        });
    Tensor::new(&[g.oc, g.ho, g.wo], out)
}

/// Gradients of [`conv2d`] with respect to input, kernel and bias.
pub fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    grad_out: &Tensor,
    spec: ConvSpec,
) -> Result<(Tensor, Tensor, Tensor)> {
    let g = conv_geometry(x, w, spec)?;
    if grad_out.shape() != [g.oc, g.ho, g.wo] {
        return Err(Error::dim(
            "conv2d backward",
            grad_out.shape(),
            &[g.oc, g.ho, g.wo],
        ));
    }
    let padded = pad_replicate(x.data(), g.c, g.h, g.w, spec.pad);
    let go = grad_out.data();
    let wdata = w.data();
    let s = spec.stride;
    let ocg = g.oc / spec.groups;
    let plane = g.ho * g.wo;

    let mut gw = vec![0.0; w.numel()];
    gw.par_chunks_mut(g.icg * g.kh * g.kw)
        .enumerate()
        .for_each(|(o, gw_o)| {
            let grp = o / ocg;
            let g_o = &go[o * plane..(o + 1) * plane];
            for i in 0..g.icg {
                let ic = grp * g.icg + i;
                let src = &padded[ic * g.hp * g.wp..(ic + 1) * g.hp * g.wp];
                for ky in 0..g.kh {
                    for kx in 0..g.kw {
                        let mut acc = 0.0;
                        for y in 0..g.ho {
                            let row = &src[(y * s + ky) * g.wp + kx..];
                            let grow = &g_o[y * g.wo..(y + 1) * g.wo];
                            if s == 1 {
                                acc += grow.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
                            } else {
                                for (xo, &gv) in grow.iter().enumerate() {
                                    acc += gv * row[xo * s];
                                }
                            }
                        }
                        gw_o[(i * g.kh + ky) * g.kw + kx] = acc;
                    }
                }
            }
        });

    let mut gp = vec![0.0; g.c * g.hp * g.wp];
    gp.par_chunks_mut(g.hp * g.wp)
        .enumerate()
        .for_each(|(ic, gp_c)| {
            let grp = ic / g.icg;
            let i = ic % g.icg;
            for o in grp * ocg..(grp + 1) * ocg {
                let g_o = &go[o * plane..(o + 1) * plane];
                for ky in 0..g.kh {
                    for kx in 0..g.kw {
                        let wv = wdata[((o * g.icg + i) * g.kh + ky) * g.kw + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        for y in 0..g.ho {
                            let base = (y * s + ky) * g.wp + kx;
                            let grow = &g_o[y * g.wo..(y + 1) * g.wo];
                            if s == 1 {
                                for (d, &gv) in gp_c[base..base + g.wo].iter_mut().zip(grow) {
                                    *d += wv * gv;
                                }
                            } else {
                                for (xo, &gv) in grow.iter().enumerate() {
                                    gp_c[base + xo * s] += wv * gv;
                                }
                            }
                        }
                    }
                }
            }
        });
    let gx = unpad_replicate_add(&gp, g.c, g.h, g.w, spec.pad);

    let gb: Vec<f64> = go.chunks(plane).map(|c| c.iter().sum()).collect();
    Ok((
        Tensor::new(x.shape(), gx)?,
        Tensor::new(w.shape(), gw)?,
        Tensor::new(&[g.oc], gb)?,
    ))
}

fn batch_dims(t: &Tensor) -> Option<(usize, usize, usize)> {
    match t.shape()[..] {
        [m, n] => Some((1, m, n)),
        [b, m, n] => Some((b, m, n)),
        _ => None,
    }
}

/// Matrix product of rank-2 operands, or batched product of rank-3 operands.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let err = || Error::dim("matmul", a.shape(), b.shape());
    let (ba, m, k) = batch_dims(a).ok_or_else(err)?;
    let (bb, k2, n) = batch_dims(b).ok_or_else(err)?;
    if a.rank() != b.rank() || ba != bb || k != k2 {
        return Err(err());
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; ba * m * n];
    out.par_chunks_mut(n).enumerate().for_each(|(row, orow)| {
        let (bi, i) = (row / m, row % m);
        let arow = &ad[(bi * m + i) * k..(bi * m + i + 1) * k];
        let bmat = &bd[bi * k * n..(bi + 1) * k * n];
        for (kk, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in orow.iter_mut().zip(&bmat[kk * n..(kk + 1) * n]) {
                *o += av * bv;
            }
        }
    });
    let shape: Vec<usize> = if a.rank() == 2 {
        vec![m, n]
    } else {
        vec![ba, m, n]
    };
    Tensor::new(&shape, out)
}

/// Swaps the last two axes of a rank-2 or rank-3 tensor.
pub fn transpose_last(a: &Tensor) -> Result<Tensor> {
    let (b, m, n) = batch_dims(a).ok_or_else(|| Error::dim("transpose", a.shape(), &[0, 0]))?;
    let d = a.data();
    let mut out = vec![0.0; d.len()];
    for bi in 0..b {
        for i in 0..m {
            for j in 0..n {
                out[(bi * n + j) * m + i] = d[(bi * m + i) * n + j];
            }
        }
    }
    let shape: Vec<usize> = if a.rank() == 2 {
        vec![n, m]
    } else {
        vec![b, n, m]
    };
    Tensor::new(&shape, out)
}

/// `(outer, len, inner)` strides for reducing along `axis`.
fn axis_layout(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Numerically stable softmax along `axis` (max subtracted, f64 sums).
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    if axis >= x.rank() {
        return Err(Error::param(
            "axis",
            format!("{axis} for shape {:?}", x.shape()),
        ));
    }
    let (outer, len, inner) = axis_layout(x.shape(), axis);
    let d = x.data();
    let mut out = vec![0.0; d.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |k: usize| (o * len + k) * inner + i;
            let mx = (0..len)
                .map(|k| d[idx(k)])
                .fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for k in 0..len {
                let e = (d[idx(k)] - mx).exp();
                out[idx(k)] = e;
                total += e;
            }
            for k in 0..len {
                out[idx(k)] /= total;
            }
        }
    }
    Tensor::new(x.shape(), out)
}

pub fn softmax_backward(y: &Tensor, g: &Tensor, axis: usize) -> Vec<f64> {
    let (outer, len, inner) = axis_layout(y.shape(), axis);
    let (yd, gd) = (y.data(), g.data());
    let mut out = vec![0.0; yd.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |k: usize| (o * len + k) * inner + i;
            let dot: f64 = (0..len).map(|k| yd[idx(k)] * gd[idx(k)]).sum();
            for k in 0..len {
                out[idx(k)] = yd[idx(k)] * (gd[idx(k)] - dot);
            }
        }
    }
    out
}

/// Per-position statistics of a channel-wise layer norm: `(mean, 1/sqrt(var+eps))`.
fn ln_stats(x: &Tensor, eps: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let (c, h, w) = x.chw()?;
    let hw = h * w;
    let d = x.data();
    let mut mean = vec![0.0; hw];
    let mut rstd = vec![0.0; hw];
    for p in 0..hw {
        let mu = (0..c).map(|ch| d[ch * hw + p]).sum::<f64>() / c as f64;
        let var = (0..c).map(|ch| (d[ch * hw + p] - mu).powi(2)).sum::<f64>() / c as f64;
        mean[p] = mu;
        rstd[p] = 1.0 / (var + eps).sqrt();
    }
    Ok((mean, rstd))
}

/// Normalizes over channels at every spatial position, then applies `gamma`, `beta`.
pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
    let (c, h, w) = x.chw()?;
    if gamma.numel() != c || beta.numel() != c {
        return Err(Error::dim("layer_norm", x.shape(), gamma.shape()));
    }
    let hw = h * w;
    let (mean, rstd) = ln_stats(x, eps)?;
    let d = x.data();
    let out = (0..c * hw)
        .map(|i| {
            let (ch, p) = (i / hw, i % hw);
            (d[i] - mean[p]) * rstd[p] * gamma.data()[ch] + beta.data()[ch]
        })
        .collect();
    Tensor::new(x.shape(), out)
}

pub fn layer_norm_backward(
    x: &Tensor,
    gamma: &Tensor,
    g: &Tensor,
    eps: f64,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let (c, h, w) = x.chw()?;
    let hw = h * w;
    let (mean, rstd) = ln_stats(x, eps)?;
    let (d, gd, gam) = (x.data(), g.data(), gamma.data());
    let mut gx = vec![0.0; c * hw];
    let mut ggamma = vec![0.0; c];
    let mut gbeta = vec![0.0; c];
    for p in 0..hw {
        let mut sum_dxh = 0.0;
        let mut sum_dxh_xh = 0.0;
        for ch in 0..c {
            let i = ch * hw + p;
            let xh = (d[i] - mean[p]) * rstd[p];
            let dxh = gd[i] * gam[ch];
            sum_dxh += dxh;
            sum_dxh_xh += dxh * xh;
            ggamma[ch] += gd[i] * xh;
            gbeta[ch] += gd[i];
        }
        let (m1, m2) = (sum_dxh / c as f64, sum_dxh_xh / c as f64);
        for ch in 0..c {
            let i = ch * hw + p;
            let xh = (d[i] - mean[p]) * rstd[p];
            gx[i] = rstd[p] * (gd[i] * gam[ch] - m1 - xh * m2);
        }
    }
    Ok((gx, ggamma, gbeta))
}

/// Bilinear sample location with border clamping: `(i0, i1, frac)`.
fn sample_axis(pos: f64, n: usize) -> (usize, usize, f64) {
    let p = pos.clamp(0.0, (n - 1) as f64);
    let i0 = p.floor() as usize;
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, p - i0 as f64)
}

fn check_flow(x: &Tensor, flow: &Tensor) -> Result<(usize, usize, usize)> {
    let (c, h, w) = x.chw()?;
    if flow.shape() != [2, h, w] {
        return Err(Error::dim("bilinear_warp", x.shape(), flow.shape()));
    }
    Ok((c, h, w))
}

/// `out(p) = x(p + flow(p))`, bilinear, coordinates clamped to the image.
/// Flow channel 0 is the horizontal (column) offset, channel 1 the vertical.
pub fn bilinear_warp(x: &Tensor, flow: &Tensor) -> Result<Tensor> {
    let (c, h, w) = check_flow(x, flow)?;
    let hw = h * w;
    let (d, f) = (x.data(), flow.data());
    let mut out = vec![0.0; c * hw];
    for y in 0..h {
        for xx in 0..w {
            let p = y * w + xx;
            let (x0, x1, ax) = sample_axis(xx as f64 + f[p], w);
            let (y0, y1, ay) = sample_axis(y as f64 + f[hw + p], h);
            for ch in 0..c {
                let base = ch * hw;
                let top = (1.0 - ax) * d[base + y0 * w + x0] + ax * d[base + y0 * w + x1];
                let bot = (1.0 - ax) * d[base + y1 * w + x0] + ax * d[base + y1 * w + x1];
                out[base + p] = (1.0 - ay) * top + ay * bot;
            }
        }
    }
    Tensor::new(x.shape(), out)
}

/// Adjoint of [`bilinear_warp`] with respect to the warped image (flow held fixed).
pub fn bilinear_warp_backward(x: &Tensor, flow: &Tensor, g: &Tensor) -> Result<Vec<f64>> {
    let (c, h, w) = check_flow(x, flow)?;
    let hw = h * w;
    let (f, gd) = (flow.data(), g.data());
    let mut gx = vec![0.0; c * hw];
    for y in 0..h {
        for xx in 0..w {
            let p = y * w + xx;
            let (x0, x1, ax) = sample_axis(xx as f64 + f[p], w);
            let (y0, y1, ay) = sample_axis(y as f64 + f[hw + p], h);
            for ch in 0..c {
                let base = ch * hw;
                let gv = gd[base + p];
                gx[base + y0 * w + x0] += gv * (1.0 - ay) * (1.0 - ax);
                gx[base + y0 * w + x1] += gv * (1.0 - ay) * ax;
                gx[base + y1 * w + x0] += gv * ay * (1.0 - ax);
                gx[base + y1 * w + x1] += gv * ay * ax;
            }
        }
    }
    Ok(gx)
}

/// Index map of depth-to-space: for each output element, its source index.
fn shuffle_map(c_out: usize, h: usize, w: usize, s: usize) -> Vec<usize> {
    let (ho, wo) = (h * s, w * s);
    let mut map = Vec::with_capacity(c_out * ho * wo);
    for c in 0..c_out {
        for oy in 0..ho {
            for ox in 0..wo {
                let (y, i) = (oy / s, oy % s);
                let (x, j) = (ox / s, ox % s);
                let src_c = c * s * s + i * s + j;
                map.push((src_c * h + y) * w + x);
            }
        }
    }
    map
}

/// `s²C×H×W → C×sH×sW`.
pub fn pixel_shuffle(x: &Tensor, s: usize) -> Result<Tensor> {
    let (c, h, w) = x.chw()?;
    if s == 0 || c % (s * s) != 0 {
        return Err(Error::dim("pixel_shuffle", x.shape(), &[s * s]));
    }
    let co = c / (s * s);
    let d = x.data();
    let out = shuffle_map(co, h, w, s).into_iter().map(|i| d[i]).collect();
    Tensor::new(&[co, h * s, w * s], out)
}

/// `C×sH×sW → s²C×H×W`, the inverse of [`pixel_shuffle`].
pub fn pixel_unshuffle(x: &Tensor, s: usize) -> Result<Tensor> {
    let (c, h, w) = x.chw()?;
    if s == 0 || h % s != 0 || w % s != 0 {
        return Err(Error::dim("pixel_unshuffle", x.shape(), &[s, s]));
    }
    let (hi, wi) = (h / s, w / s);
    let d = x.data();
    let mut out = vec![0.0; d.len()];
    for (dst, src) in shuffle_map(c, hi, wi, s).into_iter().enumerate() {
        out[src] = d[dst];
    }
    Tensor::new(&[c * s * s, hi, wi], out)
}

/// Index map of window partition `D×H×W → nW×D×ω²`.
fn window_map(d: usize, h: usize, w: usize, win: usize) -> Vec<usize> {
    let (nwy, nwx) = (h / win, w / win);
    let mut map = Vec::with_capacity(d * h * w);
    for wy in 0..nwy {
        for wx in 0..nwx {
            for ch in 0..d {
                for iy in 0..win {
                    for ix in 0..win {
                        map.push((ch * h + wy * win + iy) * w + wx * win + ix);
                    }
                }
            }
        }
    }
    map
}

/// Splits `D×H×W` into non-overlapping `ω×ω` windows, `nW×D×ω²`, raster window order.
pub fn window_partition(x: &Tensor, win: usize) -> Result<Tensor> {
    let (d, h, w) = x.chw()?;
    if win == 0 || h % win != 0 || w % win != 0 {
        return Err(Error::dim("window_partition", x.shape(), &[win, win]));
    }
    let src = x.data();
    let out = window_map(d, h, w, win)
        .into_iter()
        .map(|i| src[i])
        .collect();
    Tensor::new(&[(h / win) * (w / win), d, win * win], out)
}

/// Inverse of [`window_partition`].
pub fn window_merge(x: &Tensor, win: usize, h: usize, w: usize) -> Result<Tensor> {
    let [nw, d, ww] = x.shape()[..] else {
        return Err(Error::dim("window_merge", x.shape(), &[0, 0, 0]));
    };
    if win == 0 || ww != win * win || h % win != 0 || w % win != 0 || nw != (h / win) * (w / win) {
        return Err(Error::dim("window_merge", x.shape(), &[h, w]));
    }
    let src = x.data();
    let mut out = vec![0.0; src.len()];
    for (i, dst) in window_map(d, h, w, win).into_iter().enumerate() {
        out[dst] = src[i];
    }
    Tensor::new(&[d, h, w], out)
}

fn reflect_index(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i % period;
    if m < n {
        m
    } else {
        period - m
    }
}

fn pad_reflect_map(h: usize, w: usize, pb: usize, pr: usize) -> Vec<usize> {
    let (ho, wo) = (h + pb, w + pr);
    let mut map = Vec::with_capacity(ho * wo);
    for y in 0..ho {
        for x in 0..wo {
            map.push(reflect_index(y, h) * w + reflect_index(x, w));
        }
    }
    map
}

/// Reflect-pads the bottom and right edges of every channel.
pub fn pad_reflect(x: &Tensor, pb: usize, pr: usize) -> Result<Tensor> {
    let (c, h, w) = x.chw()?;
    let map = pad_reflect_map(h, w, pb, pr);
    let d = x.data();
    let mut out = Vec::with_capacity(c * map.len());
    for ch in 0..c {
        out.extend(map.iter().map(|&i| d[ch * h * w + i]));
    }
    Tensor::new(&[c, h + pb, w + pr], out)
}

pub fn pad_reflect_backward(g: &Tensor, h: usize, w: usize) -> Result<Vec<f64>> {
    let (c, ho, wo) = g.chw()?;
    let map = pad_reflect_map(h, w, ho - h, wo - w);
    let gd = g.data();
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        for (k, &i) in map.iter().enumerate() {
            out[ch * h * w + i] += gd[ch * ho * wo + k];
        }
    }
    Ok(out)
}

/// Top-left `h×w` crop of every channel.
pub fn crop(x: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    let (c, hi, wi) = x.chw()?;
    if h > hi || w > wi || h == 0 || w == 0 {
        return Err(Error::dim("crop", x.shape(), &[h, w]));
    }
    let d = x.data();
    let mut out = Vec::with_capacity(c * h * w);
    for ch in 0..c {
        for y in 0..h {
            let base = (ch * hi + y) * wi;
            out.extend_from_slice(&d[base..base + w]);
        }
    }
    Tensor::new(&[c, h, w], out)
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

pub fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[rustfmt::skip]
const LUMA_Q: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61,
    12, 12, 14, 19, 26, 58, 60, 55,
    14, 13, 16, 24, 40, 57, 69, 56,
    14, 17, 22, 29, 51, 87, 80, 62,
    18, 22, 37, 56, 68, 109, 103, 77,
    24, 35, 55, 64, 81, 104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99,
];

#[rustfmt::skip]
const CHROMA_Q: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99,
    18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99,
    47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
];

/// Quantization table scaled by the libjpeg quality law.
pub fn quant_table(quality: u8, chroma: bool) -> Result<[f64; 64]> {
    if !(1..=100).contains(&quality) {
        return Err(Error::param(
            "jpeg.quality",
            format!("must be in 1..=100, got {quality}"),
        ));
    }
    let q = quality as u32;
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    let base = if chroma { &CHROMA_Q } else { &LUMA_Q };
    let mut out = [0.0; 64];
    for (o, &b) in out.iter_mut().zip(base) {
        *o = ((b as u32 * scale + 50) / 100).clamp(1, 255) as f64;
    }
    Ok(out)
}

/// Orthonormal 8-point DCT-II basis, `basis[u][x]`.
fn dct_basis() -> &'static [[f64; 8]; 8] {
    static BASIS: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut b = [[0.0; 8]; 8];
        for (u, row) in b.iter_mut().enumerate() {
            let cu = if u == 0 {
                (1.0f64 / 8.0).sqrt()
            } else {
                (2.0f64 / 8.0).sqrt()
            };
            for (x, v) in row.iter_mut().enumerate() {
                *v = cu * ((2 * x + 1) as f64 * u as f64 * PI / 16.0).cos();
            }
        }
        b
    })
}

fn quantize_block(block: &mut [f64; 64], table: &[f64; 64]) {
    let b = dct_basis();
    let mut tmp = [0.0; 64];
    // Rows, then columns.
    for y in 0..8 {
        for u in 0..8 {
            tmp[y * 8 + u] = (0..8).map(|x| b[u][x] * block[y * 8 + x]).sum();
        }
    }
    let mut coef = [0.0; 64];
    for v in 0..8 {
        for u in 0..8 {
            coef[v * 8 + u] = (0..8).map(|y| b[v][y] * tmp[y * 8 + u]).sum();
        }
    }
    for (c, q) in coef.iter_mut().zip(table) {
        *c = (*c / q).round() * q;
    }
    for y in 0..8 {
        for u in 0..8 {
            tmp[y * 8 + u] = (0..8).map(|v| b[v][y] * coef[v * 8 + u]).sum();
        }
    }
    for y in 0..8 {
        for x in 0..8 {
            block[y * 8 + x] = (0..8).map(|u| b[u][x] * tmp[y * 8 + u]).sum();
        }
    }
}

/// JPEG-like round trip on float pixels: full-range YCbCr (4:4:4), 8×8
/// orthonormal DCT, quantization with the standard tables at `quality`,
/// inverse transform, back to RGB and clip. Extents are edge-padded to
/// multiples of 8 and cropped back.
pub fn jpeg_like_compress(img: &Tensor, quality: u8) -> Result<Tensor> {
    let luma = quant_table(quality, false)?;
    let chroma = quant_table(quality, true)?;
    let (c, h, w) = img.chw()?;
    if c != 3 {
        return Err(Error::dim("jpeg_like_compress", img.shape(), &[3, h, w]));
    }
    let (hp, wp) = (h.div_ceil(8) * 8, w.div_ceil(8) * 8);
    let px = |ch: usize, y: usize, x: usize| 255.0 * img.at3(ch, y.min(h - 1), x.min(w - 1));
    let mut planes = vec![vec![0.0; hp * wp]; 3];
    for y in 0..hp {
        for x in 0..wp {
            let (r, g, b) = (px(0, y, x), px(1, y, x), px(2, y, x));
            let i = y * wp + x;
            planes[0][i] = 0.299 * r + 0.587 * g + 0.114 * b - 128.0;
            planes[1][i] = -0.168736 * r - 0.331264 * g + 0.5 * b;
            planes[2][i] = 0.5 * r - 0.418688 * g - 0.081312 * b;
        }
    }
    for (p, plane) in planes.iter_mut().enumerate() {
        let table = if p == 0 { &luma } else { &chroma };
        for by in (0..hp).step_by(8) {
            for bx in (0..wp).step_by(8) {
                let mut block = [0.0; 64];
                for y in 0..8 {
                    block[y * 8..y * 8 + 8]
                        .copy_from_slice(&plane[(by + y) * wp + bx..(by + y) * wp + bx + 8]);
                }
                quantize_block(&mut block, table);
                for y in 0..8 {
                    plane[(by + y) * wp + bx..(by + y) * wp + bx + 8]
                        .copy_from_slice(&block[y * 8..y * 8 + 8]);
                }
            }
        }
    }
    let mut out = vec![0.0; 3 * h * w];
    for y in 0..h {
        for x in 0..w {
            let i = y * wp + x;
            let (yy, cb, cr) = (planes[0][i] + 128.0, planes[1][i], planes[2][i]);
            let rgb = [
                yy + 1.402 * cr,
                yy - 0.344136 * cb - 0.714136 * cr,
                yy + 1.772 * cb,
            ];
            for (ch, v) in rgb.iter().enumerate() {
                out[(ch * h + y) * w + x] = (v / 255.0).clamp(0.0, 1.0);
            }
        }
    }
    Tensor::new(img.shape(), out)
}

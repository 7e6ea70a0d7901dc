//! Block-matching motion estimation.
//!
//! For each `BLOCK×BLOCK` tile of `curr` the integer displacement `d` with
//! `|dx|, |dy| ≤ RADIUS` minimizing the mean absolute difference
//! `|curr(p) − prev(p + d)|` over pixels with `p + d` inside the frame is
//! chosen; every pixel of the tile receives `d`. Among costs tied with the
//! minimum (up to [`TIE_TOLERANCE`]) the displacement with the smallest
//! `|dx| + |dy|` wins, then the first in raster order of `(dy, dx)`.
//!
//! The result follows the [`bilinear_warp`](crate::kernels::bilinear_warp)
//! convention: warping `prev` with the flow aligns it to `curr`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const BLOCK: usize = 8;
pub const RADIUS: isize = 4;
/// Costs within this relative distance of the minimum count as ties.
pub const TIE_TOLERANCE: f64 = 1e-9;

pub fn estimate_flow(prev: &Tensor, curr: &Tensor) -> Result<Tensor> {
    let (c, h, w) = curr.chw()?;
    if prev.shape() != curr.shape() {
        return Err(Error::dim("estimate_flow", prev.shape(), curr.shape()));
    }
    let (by, bx) = (h.div_ceil(BLOCK), w.div_ceil(BLOCK));
    let (p, q) = (prev.data(), curr.data());
    let best: Vec<(isize, isize)> = (0..by * bx)
        .into_par_iter()
        .map(|b| {
            let (y0, x0) = ((b / bx) * BLOCK, (b % bx) * BLOCK);
            let (y1, x1) = ((y0 + BLOCK).min(h), (x0 + BLOCK).min(w));
            let mut costs = Vec::with_capacity(((2 * RADIUS + 1) * (2 * RADIUS + 1)) as usize);
            for dy in -RADIUS..=RADIUS {
                for dx in -RADIUS..=RADIUS {
                    let (mut sad, mut n) = (0.0, 0usize);
                    for y in y0..y1 {
                        let sy = y as isize + dy;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for x in x0..x1 {
                            let sx = x as isize + dx;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            for ch in 0..c {
                                let a = q[(ch * h + y) * w + x];
                                let b = p[(ch * h + sy as usize) * w + sx as usize];
                                sad += (a - b).abs();
                            }
                            n += 1;
                        }
                    }
                    if n > 0 {
                        costs.push((sad / n as f64, dx, dy));
                    }
                }
            }
            let min = costs.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
            let tol = TIE_TOLERANCE * min.abs().max(1.0);
            costs
                .iter()
                .filter(|c| c.0 <= min + tol)
                .min_by_key(|c| (c.1.abs() + c.2.abs(), c.2, c.1))
                .map_or((0, 0), |c| (c.1, c.2))
        })
        .collect();
    let mut flow = Tensor::zeros(&[2, h, w]);
    let f = flow.data_mut();
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = best[(y / BLOCK) * bx + x / BLOCK];
            f[y * w + x] = dx as f64;
            f[h * w + y * w + x] = dy as f64;
        }
    }
    Ok(flow)
}

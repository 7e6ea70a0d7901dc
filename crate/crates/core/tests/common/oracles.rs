//! Scalar reference implementations used as test oracles. Written with plain
//! nested loops over `Vec<f64>` and without any of the library's kernels.
#![allow(dead_code)]

/// Row-major `C×H×W` image.
#[derive(Clone, Debug, PartialEq)]
pub struct Img {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub v: Vec<f64>,
}

impl Img {
    pub fn new(c: usize, h: usize, w: usize, v: Vec<f64>) -> Self {
        assert_eq!(v.len(), c * h * w);
        Img { c, h, w, v }
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.v[(c * self.h + y) * self.w + x]
    }

    /// Sample with replicate ("clamp") borders.
    pub fn clamped(&self, c: usize, y: isize, x: isize) -> f64 {
        let y = y.clamp(0, self.h as isize - 1) as usize;
        let x = x.clamp(0, self.w as isize - 1) as usize;
        self.at(c, y, x)
    }
}

/// Layer norm over channels at every pixel, biased variance.
pub fn layer_norm(x: &Img, gamma: &[f64], beta: &[f64], eps: f64) -> Img {
    let mut out = vec![0.0; x.v.len()];
    for y in 0..x.h {
        for xx in 0..x.w {
            let vals: Vec<f64> = (0..x.c).map(|c| x.at(c, y, xx)).collect();
            let mean = vals.iter().sum::<f64>() / x.c as f64;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / x.c as f64;
            for c in 0..x.c {
                out[(c * x.h + y) * x.w + xx] =
                    (vals[c] - mean) / (var + eps).sqrt() * gamma[c] + beta[c];
            }
        }
    }
    Img::new(x.c, x.h, x.w, out)
}

/// Grouped convolution, `weight: [cout][cin/groups][k][k]`, stride 1,
/// same padding with replicated borders.
pub fn conv_same(
    x: &Img,
    weight: &[f64],
    bias: Option<&[f64]>,
    cout: usize,
    k: usize,
    groups: usize,
) -> Img {
    let icg = x.c / groups;
    let ocg = cout / groups;
    let r = (k / 2) as isize;
    let mut out = vec![0.0; cout * x.h * x.w];
    for o in 0..cout {
        let grp = o / ocg;
        for y in 0..x.h {
            for xx in 0..x.w {
                let mut acc = bias.map_or(0.0, |b| b[o]);
                for i in 0..icg {
                    for ky in 0..k {
                        for kx in 0..k {
                            let wv = weight[((o * icg + i) * k + ky) * k + kx];
                            let src = x.clamped(
                                grp * icg + i,
                                y as isize + ky as isize - r,
                                xx as isize + kx as isize - r,
                            );
                            acc += wv * src;
                        }
                    }
                }
                out[(o * x.h + y) * x.w + xx] = acc;
            }
        }
    }
    Img::new(cout, x.h, x.w, out)
}

pub fn softmax_row(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Spatial attention within non-overlapping `win×win` windows (extents must be
/// multiples of `win`), head-split along channels, `1/√d_head` scaling.
/// Returns the output and, per head, per window, the `win²×win²` map.
pub fn spatial_attention(
    q: &Img,
    k: &Img,
    v: &Img,
    heads: usize,
    win: usize,
) -> (Img, Vec<Vec<Vec<Vec<f64>>>>) {
    assert!(q.h % win == 0 && q.w % win == 0);
    let dh = q.c / heads;
    let mut out = vec![0.0; v.v.len()];
    let mut maps = vec![Vec::new(); heads];
    for head in 0..heads {
        for wy in 0..q.h / win {
            for wx in 0..q.w / win {
                let pos: Vec<(usize, usize)> = (0..win * win)
                    .map(|i| (wy * win + i / win, wx * win + i % win))
                    .collect();
                let mut map = Vec::new();
                for &(qy, qx) in &pos {
                    let logits: Vec<f64> = pos
                        .iter()
                        .map(|&(ky, kx)| {
                            (0..dh)
                                .map(|d| q.at(head * dh + d, qy, qx) * k.at(head * dh + d, ky, kx))
                                .sum::<f64>()
                                / (dh as f64).sqrt()
                        })
                        .collect();
                    let a = softmax_row(&logits);
                    for d in 0..dh {
                        let c = head * dh + d;
                        out[(c * q.h + qy) * q.w + qx] = pos
                            .iter()
                            .zip(&a)
                            .map(|(&(ky, kx), w)| w * v.at(c, ky, kx))
                            .sum();
                    }
                    map.push(a);
                }
                maps[head].push(map);
            }
        }
    }
    (Img::new(v.c, q.h, q.w, out), maps)
}

/// Channel attention: per head, rows `Q_i` (flattened `H·W`), optional L2
/// normalization of rows, `A = softmax(Q Kᵀ / α)`, output `A V`.
pub fn channel_attention(
    q: &Img,
    k: &Img,
    v: &Img,
    alpha: &[f64],
    heads: usize,
    qk_norm: bool,
) -> (Img, Vec<Vec<Vec<f64>>>) {
    let hw = q.h * q.w;
    let cq = q.c / heads;
    let ck = k.c / heads;
    let row = |img: &Img, c: usize| -> Vec<f64> {
        let r = img.v[c * hw..(c + 1) * hw].to_vec();
        if qk_norm {
            let n = r.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            r.iter().map(|x| x / n).collect()
        } else {
            r
        }
    };
    let mut out = vec![0.0; q.c * hw];
    let mut maps = Vec::new();
    for head in 0..heads {
        let mut map = Vec::new();
        for i in 0..cq {
            let qi = row(q, head * cq + i);
            let logits: Vec<f64> = (0..ck)
                .map(|j| {
                    let kj = row(k, head * ck + j);
                    qi.iter().zip(&kj).map(|(a, b)| a * b).sum::<f64>() / alpha[head]
                })
                .collect();
            let a = softmax_row(&logits);
            for p in 0..hw {
                out[(head * cq + i) * hw + p] =
                    (0..ck).map(|j| a[j] * v.v[(head * ck + j) * hw + p]).sum();
            }
            map.push(a);
        }
        maps.push(map);
    }
    (Img::new(q.c, q.h, q.w, out), maps)
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

pub fn erf(x: f64) -> f64 {
    if x.abs() > 3.0 {
        // Leading asymptotic term; tests stay well inside |x| < 3.
        return x.signum() * (1.0 - (-x * x).exp() / (x.abs() * std::f64::consts::PI.sqrt()));
    }
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    loop {
        n += 1.0;
        term *= -x * x / n;
        let add = term / (2.0 * n + 1.0);
        sum += add;
        if add.abs() < 1e-17 {
            break;
        }
    }
    2.0 / std::f64::consts::PI.sqrt() * sum
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

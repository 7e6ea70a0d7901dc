mod common;

use common::rand;
use proptest::prelude::*;
use rvf_core::diagnostics::*;
use rvf_core::gradcheck::GradCase;
use rvf_core::rng::Stream;
use rvf_core::{Graph, Tensor};

/// Multiplicative hash image in `[0, 1)`, reproducible in any language.
fn hash_values(n: usize, salt: u64) -> Vec<f64> {
    (0..n as u64)
        .map(|i| (((i + salt) * 2_654_435_761) % (1 << 32)) as f64 / (1u64 << 32) as f64)
        .collect()
}

fn unit(shape: &[usize], seed: u64) -> Tensor {
    Stream::new(seed).uniform_tensor(shape, 0.0, 1.0)
}

#[test]
fn covariance_matches_double_loop() {
    let (n, c, hw) = (5, 3, 4);
    let samples: Vec<Tensor> = (0..n).map(|i| rand(&[c, 2, 2], 40 + i as u64)).collect();
    let cov = covariance_matrix(&FeatureBatch::new(samples.clone()).unwrap()).unwrap();
    for i in 0..c {
        for j in 0..c {
            let mut acc = 0.0;
            for s in &samples {
                for p in 0..hw {
                    let mean_i =
                        samples.iter().map(|t| t.data()[i * hw + p]).sum::<f64>() / n as f64;
                    let mean_j =
                        samples.iter().map(|t| t.data()[j * hw + p]).sum::<f64>() / n as f64;
                    acc += (s.data()[i * hw + p] - mean_i) * (s.data()[j * hw + p] - mean_j);
                }
            }
            assert!((cov.data()[i * c + j] - acc / (n - 1) as f64).abs() < 1e-6);
        }
    }
}

#[test]
fn covariance_trivial_cases() {
    let same = FeatureBatch::new(vec![rand(&[3, 2, 2], 1); 4]).unwrap();
    assert!(covariance_matrix(&same)
        .unwrap()
        .data()
        .iter()
        .all(|&v| v == 0.0));
    assert_eq!(ac_indicator(&same, AcMode::Raw).unwrap(), 0.0);

    let a = std::f64::consts::FRAC_1_SQRT_2;
    let dup = FeatureBatch::new(vec![
        Tensor::new(&[2, 1], vec![a, a]).unwrap(),
        Tensor::new(&[2, 1], vec![-a, -a]).unwrap(),
    ])
    .unwrap();
    let cov = covariance_matrix(&dup).unwrap();
    assert!(cov.data().iter().all(|v| (v - 1.0).abs() < 1e-12));
    assert!((ac_indicator(&dup, AcMode::Raw).unwrap() - 1.0).abs() < 1e-12);
}

/// Error-free transformations for a double-double dot product.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn dot_dd(a: &[f64], b: &[f64]) -> f64 {
    let (mut hi, mut lo) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let p = x * y;
        let pe = x.mul_add(*y, -p);
        let (s, e) = two_sum(hi, p);
        hi = s;
        lo += e + pe;
    }
    hi + lo
}

#[test]
fn cosine_matches_extended_precision() {
    for seed in 0..10 {
        let a = rand(&[257], seed);
        let b = rand(&[257], seed + 100);
        let want = dot_dd(a.data(), b.data())
            / (dot_dd(a.data(), a.data()).sqrt() * dot_dd(b.data(), b.data()).sqrt());
        assert!((cosine_similarity(&a, &b).unwrap() - want).abs() < 1e-7);
    }
}

#[test]
fn charbonnier_matches_scalar_loop() {
    let a = unit(&[3, 9, 7], 1);
    let b = unit(&[3, 9, 7], 2);
    let mut acc = 0.0;
    for i in 0..a.numel() {
        let d = a.data()[i] - b.data()[i];
        acc += (d * d + 1e-6).sqrt();
    }
    assert!((charbonnier(&a, &b, 1e-3).unwrap() - acc / a.numel() as f64).abs() < 1e-7);
}

#[test]
fn ssim_matches_reference_implementation() {
    // Value from scikit-image 0.25 `structural_similarity(a, b, gaussian_weights=True,
    // sigma=1.5, use_sample_covariance=False, data_range=1.0)` on the same arrays.
    let a = hash_values(24 * 20, 0);
    let noise = hash_values(24 * 20, 7);
    let b: Vec<f64> = a
        .iter()
        .zip(&noise)
        .map(|(x, n)| (x + 0.2 * (n - 0.5)).clamp(0.0, 1.0))
        .collect();
    let a = Tensor::new(&[1, 24, 20], a).unwrap();
    let b = Tensor::new(&[1, 24, 20], b).unwrap();
    assert!((ssim(&a, &b).unwrap() - 0.979_098_645_081_389).abs() < 1e-4);
}

#[test]
fn ssim_self_similarity() {
    for seed in 0..5 {
        let x = unit(&[3, 20, 17], seed);
        assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn graph_losses_agree_with_metrics() {
    let a = unit(&[3, 14, 13], 5);
    let b = unit(&[3, 14, 13], 6);
    let mut g = Graph::new();
    let (av, bv) = (g.constant(a.clone()), g.constant(b.clone()));
    let s = ssim_graph(&mut g, av, bv).unwrap();
    assert!((g.value(s).data()[0] - ssim(&a, &b).unwrap()).abs() < 1e-12);
    let c = charbonnier_loss(&mut g, av, bv, 1e-3).unwrap();
    assert!((g.value(c).data()[0] - charbonnier(&a, &b, 1e-3).unwrap()).abs() < 1e-12);
    let l = reconstruction_loss(&mut g, av, bv, 1e-3, 0.5).unwrap();
    let want = charbonnier(&a, &b, 1e-3).unwrap() + 0.5 * (1.0 - ssim(&a, &b).unwrap());
    assert!((g.value(l).data()[0] - want).abs() < 1e-12);
}

#[test]
fn reconstruction_loss_gradient() {
    let target = unit(&[3, 12, 12], 9);
    let case = GradCase::new(
        "reconstruction_loss",
        vec![unit(&[3, 12, 12], 8)],
        move |g, v| {
            let t = g.constant(target.clone());
            reconstruction_loss(g, v[0], t, 1e-3, 0.3)
        },
    );
    let report = case.run(64, 3).unwrap();
    assert!(report.passes(), "{report:?}");
}

fn direct_dft_power(plane: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for ky in 0..h {
        for kx in 0..w {
            let (mut re, mut im) = (0.0, 0.0);
            for y in 0..h {
                for x in 0..w {
                    let ph = -2.0
                        * std::f64::consts::PI
                        * ((ky * y) as f64 / h as f64 + (kx * x) as f64 / w as f64);
                    re += plane[y * w + x] * ph.cos();
                    im += plane[y * w + x] * ph.sin();
                }
            }
            out[ky * w + kx] = re * re + im * im;
        }
    }
    out
}

#[test]
fn rps_matches_direct_dft_and_parseval() {
    let (h, w, bins) = (12, 10, 5);
    let img = unit(&[1, h, w], 3);
    let rps = radial_power_spectrum(&img, bins).unwrap();
    let power = direct_dft_power(img.data(), h, w);
    let mut sums = vec![0.0; bins];
    let mut counts = vec![0usize; bins];
    for ky in 0..h {
        for kx in 0..w {
            // Signed frequencies computed independently of the library.
            let fy = if ky <= h / 2 {
                ky as f64
            } else {
                ky as f64 - h as f64
            } / h as f64;
            let fx = if kx <= w / 2 {
                kx as f64
            } else {
                kx as f64 - w as f64
            } / w as f64;
            let b = (((fy * fy + fx * fx).sqrt() * 2.0 * bins as f64) as usize).min(bins - 1);
            sums[b] += power[ky * w + kx];
            counts[b] += 1;
        }
    }
    assert_eq!(rps.counts, counts);
    for b in 0..bins {
        assert!((rps.power[b] - sums[b] / counts[b] as f64).abs() < 1e-9 * (1.0 + rps.power[b]));
    }
    let energy = (h * w) as f64 * img.data().iter().map(|v| v * v).sum::<f64>();
    assert!((rps.total_energy() - energy).abs() / energy < 1e-6);
}

#[test]
fn rps_parseval_on_color_images() {
    for seed in 0..4 {
        let img = unit(&[3, 32, 24], seed);
        let gray = to_gray(&img).unwrap();
        let energy = (32 * 24) as f64 * gray.data().iter().map(|v| v * v).sum::<f64>();
        let rps = radial_power_spectrum(&img, 16).unwrap();
        assert!((rps.total_energy() - energy).abs() / energy < 1e-6);
    }
}

#[test]
fn rps_sinusoid_has_a_single_dominant_bin() {
    let (n, k, bins) = (64, 12, 8);
    let img = Tensor::from_fn(&[1, n, n], |i| {
        0.5 + 0.4 * (2.0 * std::f64::consts::PI * k as f64 * (i % n) as f64 / n as f64).cos()
    });
    let rps = radial_power_spectrum(&img, bins).unwrap();
    let expected = radial_bin(0.0, k as f64 / n as f64, bins);
    let dominant = (1..bins)
        .max_by(|&a, &b| rps.power[a].total_cmp(&rps.power[b]))
        .unwrap();
    assert_eq!(dominant, expected);
    for b in 1..bins {
        if b != expected {
            assert!(rps.power[b] < 1e-9 * rps.power[expected]);
        }
    }
}

#[test]
fn rps_of_white_noise_is_flat() {
    let (n, bins, reps) = (64, 8, 20);
    let mut mean = vec![0.0; bins];
    for r in 0..reps {
        let img = Stream::new(1000 + r).normal_tensor(&[1, n, n]);
        let rps = radial_power_spectrum(&img, bins).unwrap();
        for b in 0..bins {
            mean[b] += rps.power[b] / reps as f64;
        }
    }
    // E|F|² = N·σ² at every frequency.
    let expected = (n * n) as f64;
    for (b, p) in mean.iter().enumerate() {
        assert!((p / expected - 1.0).abs() < 0.1, "bin {b}: {p}");
    }
}

#[test]
fn metric_report_means() {
    let refs = vec![unit(&[3, 12, 12], 1), unit(&[3, 12, 12], 2)];
    let outs = vec![unit(&[3, 12, 12], 3), refs[1].clone()];
    let report = MetricReport::compute(&refs, &outs, &[Metric::Ssim, Metric::Charbonnier]).unwrap();
    let s = &report.metrics[&Metric::Ssim];
    assert_eq!(s.mean, (s.per_frame[0] + s.per_frame[1]) / 2.0);
    assert_eq!(s.per_frame[1], 1.0);
    assert!(report.mean(Metric::Psnr).is_none());
    assert_eq!("ssim".parse::<Metric>().unwrap(), Metric::Ssim);
    assert!("lpips".parse::<Metric>().is_err());
    assert!(MetricReport::compute(&refs, &outs[..1], &[Metric::Psnr]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn metrics_are_symmetric(seed in any::<u64>()) {
        let a = unit(&[3, 13, 12], seed);
        let b = unit(&[3, 13, 12], seed ^ 0xABCD);
        prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
        let s = ssim(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
    }

    #[test]
    fn cosine_is_bounded_and_scale_invariant(seed in any::<u64>(), sa in 0.01f64..100.0, sb in 0.01f64..100.0) {
        let a = rand(&[40], seed);
        let b = rand(&[40], seed ^ 1);
        let c = cosine_similarity(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&c));
        let scaled = cosine_similarity(&a.map(|v| v * sa), &b.map(|v| v * sb)).unwrap();
        prop_assert!((scaled - c).abs() < 1e-12);
    }

    #[test]
    fn ac_is_permutation_invariant(seed in any::<u64>(), rot in 0usize..4, shift in 0usize..5) {
        let samples: Vec<Tensor> = (0..5).map(|i| rand(&[4, 2, 3], seed.wrapping_add(i))).collect();
        let base = ac_indicator(&FeatureBatch::new(samples.clone()).unwrap(), AcMode::Raw).unwrap();
        let mut reordered = samples.clone();
        reordered.rotate_left(shift);
        let permuted: Vec<Tensor> = reordered
            .iter()
            .map(|t| {
                let mut d = t.data().to_vec();
                d.rotate_left(rot * 6);
                Tensor::new(t.shape(), d).unwrap()
            })
            .collect();
        let other = ac_indicator(&FeatureBatch::new(permuted).unwrap(), AcMode::Raw).unwrap();
        prop_assert!((base - other).abs() < 1e-12 * (1.0 + base));
    }
}

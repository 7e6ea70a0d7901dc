use proptest::prelude::*;
use rvf_core::degradation::*;
use rvf_core::diagnostics::{psnr, radial_power_spectrum};
use rvf_core::rng::Stream;
use rvf_core::Tensor;

fn unit(shape: &[usize], seed: u64) -> Tensor {
    Stream::new(seed).uniform_tensor(shape, 0.0, 1.0)
}

fn hash_values(n: usize, salt: u64) -> Vec<f64> {
    (0..n as u64)
        .map(|i| (((i + salt) * 2_654_435_761) % (1 << 32)) as f64 / (1u64 << 32) as f64)
        .collect()
}

/// Small structured test corpus: gradients, stripes, a disc and texture.
fn corpus() -> Vec<Tensor> {
    let (h, w) = (40, 48);
    let grad = Tensor::from_fn(&[3, h, w], |i| {
        let (c, y, x) = (i / (h * w), (i / w) % h, i % w);
        (x as f64 / w as f64 * 0.8 + y as f64 / h as f64 * 0.2 + c as f64 * 0.05).min(1.0)
    });
    let stripes = Tensor::from_fn(
        &[3, h, w],
        |i| if (i % w) / 3 % 2 == 0 { 0.85 } else { 0.15 },
    );
    let disc = Tensor::from_fn(&[3, h, w], |i| {
        let (c, y, x) = (i / (h * w), (i / w) % h, i % w);
        let r = ((y as f64 - 20.0).powi(2) + (x as f64 - 24.0).powi(2)).sqrt();
        if r < 12.0 {
            0.2 + 0.3 * c as f64
        } else {
            0.7
        }
    });
    vec![grad, stripes, disc, unit(&[3, h, w], 5)]
}

#[test]
fn blur_preserves_constants() {
    let img = Tensor::full(&[3, 17, 13], 0.42);
    for sigma in [0.3, 1.0, 2.5] {
        let out = gaussian_blur(&img, sigma).unwrap();
        assert!(out.data().iter().all(|v| (v - 0.42).abs() < 1e-6));
    }
    let x = unit(&[3, 9, 9], 1);
    assert_eq!(gaussian_blur(&x, 0.0).unwrap(), x);
}

#[test]
fn blur_matches_direct_2d_convolution() {
    let sigma = 1.2;
    let img = unit(&[3, 21, 18], 2);
    let out = gaussian_blur(&img, sigma).unwrap();
    let r = (3.0 * sigma).ceil() as isize;
    let mut k2 = Vec::new();
    let mut total = 0.0;
    for dy in -r..=r {
        for dx in -r..=r {
            let v = (-((dy * dy + dx * dx) as f64) / (2.0 * sigma * sigma)).exp();
            k2.push((dy, dx, v));
            total += v;
        }
    }
    let (h, w) = (21isize, 18isize);
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for &(dy, dx, v) in &k2 {
                    let yy = (y + dy).clamp(0, h - 1) as usize;
                    let xx = (x + dx).clamp(0, w - 1) as usize;
                    acc += v / total * img.at3(c, yy, xx);
                }
                assert!((out.at3(c, y as usize, x as usize) - acc).abs() < 1e-5);
            }
        }
    }
}

#[test]
fn jpeg_high_quality_is_nearly_lossless() {
    let img = unit(&[3, 37, 29], 3);
    let out = jpeg_like_compress(&img, 100).unwrap();
    assert!(psnr(&img, &out).unwrap() > 45.0);
}

#[test]
fn jpeg_low_quality_removes_high_frequencies() {
    let img = unit(&[3, 64, 64], 4);
    let out = jpeg_like_compress(&img, 10).unwrap();
    let bins = 16;
    let before = radial_power_spectrum(&img, bins).unwrap();
    let after = radial_power_spectrum(&out, bins).unwrap();
    let high = |p: &[f64]| p[bins / 2..].iter().sum::<f64>();
    assert!(high(&after.power) < high(&before.power));
}

#[test]
fn jpeg_is_nearly_idempotent() {
    for img in corpus() {
        let once = jpeg_like_compress(&img, 50).unwrap();
        let twice = jpeg_like_compress(&once, 50).unwrap();
        let d = (psnr(&img, &once).unwrap() - psnr(&img, &twice).unwrap()).abs();
        assert!(d < 1.0, "PSNR moved by {d} dB");
    }
}

#[test]
fn jpeg_rejects_bad_quality() {
    let img = Tensor::zeros(&[3, 8, 8]);
    assert!(jpeg_like_compress(&img, 0).is_err());
    assert!(jpeg_like_compress(&img, 101).is_err());
    assert!(jpeg_like_compress(&Tensor::zeros(&[1, 8, 8]), 50).is_err());
}

#[test]
fn bicubic_downscale_keeps_ramps_linear() {
    let (h, w) = (16, 24);
    let ramp = Tensor::from_fn(&[1, h, w], |i| 0.1 + 0.03 * (i % w) as f64);
    let out = resize_bicubic(&ramp, 0.5).unwrap();
    assert_eq!(out.shape(), &[1, 8, 12]);
    // Output x samples input position 2x + 0.5.
    for y in 0..8 {
        for x in 2..10 {
            let want = 0.1 + 0.03 * (2.0 * x as f64 + 0.5);
            assert!((out.at3(0, y, x) - want).abs() < 1e-12);
        }
    }
}

/// Direct 2-D resampler: antialiased Keys kernel, clamped taps, weights
/// normalized over the full 2-D footprint.
fn reference_resize(img: &Tensor, oh: usize, ow: usize) -> Tensor {
    let (c, h, w) = img.chw().unwrap();
    let keys = |x: f64| {
        let x = x.abs();
        if x <= 1.0 {
            1.5 * x * x * x - 2.5 * x * x + 1.0
        } else if x < 2.0 {
            -0.5 * x * x * x + 2.5 * x * x - 4.0 * x + 2.0
        } else {
            0.0
        }
    };
    let axis = |o: usize, n_in: usize, n_out: usize| -> Vec<(usize, f64)> {
        let s = n_out as f64 / n_in as f64;
        let k = s.min(1.0);
        let center = (o as f64 + 0.5) / s - 0.5;
        (-(n_in as isize) * 2..(n_in as isize) * 3)
            .map(|i| {
                (
                    (i.clamp(0, n_in as isize - 1)) as usize,
                    k * keys(k * (center - i as f64)),
                )
            })
            .filter(|t| t.1 != 0.0)
            .collect()
    };
    Tensor::from_fn(&[c, oh, ow], |i| {
        let (ch, y, x) = (i / (oh * ow), (i / ow) % oh, i % ow);
        let (ry, rx) = (axis(y, h, oh), axis(x, w, ow));
        let mut acc = 0.0;
        let mut norm = 0.0;
        for &(iy, wy) in &ry {
            for &(ix, wx) in &rx {
                acc += wy * wx * img.at3(ch, iy, ix);
                norm += wy * wx;
            }
        }
        (acc / norm).clamp(0.0, 1.0)
    })
}

#[test]
fn bicubic_matches_reference_resampler() {
    let img = unit(&[3, 20, 17], 8);
    for (oh, ow) in [(10, 9), (5, 4), (40, 34), (33, 25)] {
        let got = resize_to(&img, oh, ow).unwrap();
        let want = reference_resize(&img, oh, ow);
        let diff = got
            .data()
            .iter()
            .zip(want.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-4, "{oh}x{ow}: {diff}");
    }
}

#[test]
fn bicubic_matches_pillow_on_the_interior() {
    // Pillow 11 `Image.resize(..., BICUBIC)` on the same float image; Pillow
    // renormalizes truncated kernels at borders, so only interior samples are compared.
    let img = Tensor::new(&[1, 32, 32], hash_values(32 * 32, 3)).unwrap();
    let down = resize_to(&img, 16, 16).unwrap();
    for ((y, x), want) in [(4, 4), (7, 9), (11, 5), (8, 8)].into_iter().zip([
        0.410_694_330_930_709_84,
        0.461_109_697_818_756_1,
        0.533_572_018_146_514_9,
        0.549_358_487_129_211_4,
    ]) {
        assert!((down.at3(0, y, x) - want).abs() < 1e-4);
    }
    let sum: f64 = (3..13)
        .flat_map(|y| (3..13).map(move |x| (y, x)))
        .map(|(y, x)| down.at3(0, y, x))
        .sum();
    assert!((sum - 49.888_612_300_157_55).abs() < 1e-3);

    let up = resize_to(&img, 48, 48).unwrap();
    for ((y, x), want) in [(6, 6), (20, 31), (40, 12), (24, 24)].into_iter().zip([
        0.535_111_963_748_931_9,
        0.614_826_738_834_381_1,
        0.357_488_751_411_438,
        0.174_622_386_693_954_47,
    ]) {
        assert!((up.at3(0, y, x) - want).abs() < 1e-4);
    }
    let sum: f64 = (6..42)
        .flat_map(|y| (6..42).map(move |x| (y, x)))
        .map(|(y, x)| up.at3(0, y, x))
        .sum();
    assert!((sum - 648.983_100_915_327_7).abs() < 1e-3);
}

#[test]
fn pipeline_is_deterministic() {
    let img = unit(&[3, 32, 32], 9);
    let (a, sa) = random_pipeline(&img, 4, 123).unwrap();
    let (b, sb) = random_pipeline(&img, 4, 123).unwrap();
    assert_eq!(sa, sb);
    assert_eq!(a.to_rvft_bytes(), b.to_rvft_bytes());
    assert_eq!(a.shape(), &[3, 8, 8]);
    let (c, _) = random_pipeline(&img, 4, 124).unwrap();
    assert_ne!(a, c);
}

#[test]
fn pipeline_draws_cover_declared_ranges() {
    let (mut blur, mut noise, mut q) = (Vec::new(), Vec::new(), Vec::new());
    for seed in 0..1000 {
        let Degradation::Pipeline { stages } = draw_pipeline(4, seed).op else {
            panic!()
        };
        for s in stages {
            match s {
                Degradation::Blur { sigma } => blur.push(sigma),
                Degradation::Noise { sigma } => noise.push(sigma),
                Degradation::Jpeg { quality } => q.push(quality as f64),
                Degradation::Resize { factor } => assert_eq!(factor, 0.25),
                other => panic!("unexpected stage {other:?}"),
            }
        }
    }
    let check = |v: &[f64], lo: f64, hi: f64| {
        let min = v.iter().cloned().fold(f64::MAX, f64::min);
        let max = v.iter().cloned().fold(f64::MIN, f64::max);
        let slack = 0.02 * (hi - lo);
        assert!(
            min >= lo && max <= hi,
            "[{min}, {max}] outside [{lo}, {hi}]"
        );
        assert!(
            min <= lo + slack && max >= hi - slack,
            "[{min}, {max}] does not cover [{lo}, {hi}]"
        );
    };
    check(&blur, BLUR_SIGMA_RANGE.0, BLUR_SIGMA_RANGE.1);
    check(&noise, NOISE_SIGMA_RANGE.0, NOISE_SIGMA_RANGE.1);
    check(&q, JPEG_QUALITY_RANGE.0 as f64, JPEG_QUALITY_RANGE.1 as f64);
}

#[test]
fn pipeline_perturbs_the_clean_downsample() {
    for (i, img) in corpus().iter().enumerate() {
        let clean = resize_bicubic(img, 0.25).unwrap();
        let (degraded, _) = random_pipeline(img, 4, 40 + i as u64).unwrap();
        let p = psnr(&clean, &degraded).unwrap();
        assert!(p.is_finite() && p < psnr(&clean, &clean).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn degradations_stay_in_unit_range(seed in any::<u64>(), sigma in 0.0f64..3.0, q in 1u8..=100, f in 0.2f64..3.0) {
        let img = unit(&[3, 11, 13], seed);
        for op in [
            Degradation::Blur { sigma },
            Degradation::Noise { sigma: sigma / 10.0 },
            Degradation::Jpeg { quality: q },
            Degradation::Resize { factor: f },
        ] {
            let out = DegradationSpec::new(op, seed).apply(&img).unwrap();
            prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        let (out, _) = random_pipeline(&img, 2, seed).unwrap();
        prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

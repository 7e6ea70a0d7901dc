mod common;

use common::{rand, randomize};
use proptest::prelude::*;
use rvf_core::degradation::{resize_bicubic, Degradation, DegradationSpec};
use rvf_core::gradcheck::GradCase;
use rvf_core::rng::Stream;
use rvf_core::vsr::*;
use rvf_core::{Error, Graph, Tensor};

fn small(fusion: Fusion, block: BlockKind) -> ModelConfig {
    ModelConfig {
        channels: vec![8, 16],
        blocks: vec![1, 1],
        heads: vec![1, 2],
        squeeze_ratio: 4,
        window: 4,
        ..ModelConfig::default().with_variant(fusion, block)
    }
}

fn frames(t: usize, h: usize, w: usize, seed: u64) -> Vec<Tensor> {
    (0..t)
        .map(|i| {
            Stream::new(seed)
                .child_index(i as u64)
                .uniform_tensor(&[3, h, w], 0.0, 1.0)
        })
        .collect()
}

/// Exhaustive block search written without early exits or shared state.
fn flow_oracle(prev: &Tensor, curr: &Tensor) -> Vec<(i64, i64)> {
    let (c, h, w) = curr.chw().unwrap();
    let mut out = vec![];
    for by in (0..h).step_by(8) {
        for bx in (0..w).step_by(8) {
            let mut cands = vec![];
            for dy in -4i64..=4 {
                for dx in -4i64..=4 {
                    let mut s = 0.0;
                    let mut n = 0;
                    for y in by..(by + 8).min(h) {
                        for x in bx..(bx + 8).min(w) {
                            let (sy, sx) = (y as i64 + dy, x as i64 + dx);
                            if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w {
                                for k in 0..c {
                                    s += (curr.at3(k, y, x)
                                        - prev.at3(k, sy as usize, sx as usize))
                                    .abs();
                                }
                                n += 1;
                            }
                        }
                    }
                    if n > 0 {
                        cands.push((s / n as f64, dx.abs() + dy.abs(), dy, dx));
                    }
                }
            }
            let min = cands.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
            let mut near: Vec<_> = cands
                .iter()
                .filter(|c| c.0 <= min + 1e-9 * min.max(1.0))
                .map(|c| (c.1, c.2, c.3))
                .collect();
            near.sort();
            out.push((near[0].2, near[0].1));
        }
    }
    out
}

#[test]
fn flow_of_identical_and_constant_frames_is_zero() {
    let f = rand(&[3, 20, 13], 1);
    assert!(estimate_flow(&f, &f)
        .unwrap()
        .data()
        .iter()
        .all(|&v| v == 0.0));
    let a = Tensor::full(&[3, 16, 16], 0.3);
    let b = Tensor::full(&[3, 16, 16], 0.7);
    assert!(estimate_flow(&a, &b)
        .unwrap()
        .data()
        .iter()
        .all(|&v| v == 0.0));
}

#[test]
fn flow_recovers_global_shift() {
    let (h, w) = (32, 40);
    let prev = Stream::new(5).uniform_tensor(&[3, h, w], 0.0, 1.0);
    // curr(y, x) = prev(y + 1, x + 2)
    let curr = Tensor::from_fn(&[3, h, w], |i| {
        let (c, y, x) = (i / (h * w), (i / w) % h, i % w);
        prev.at3(c, (y + 1).min(h - 1), (x + 2).min(w - 1))
    });
    let flow = estimate_flow(&prev, &curr).unwrap();
    for y in 8..h - 8 {
        for x in 8..w - 8 {
            assert_eq!((flow.at3(0, y, x), flow.at3(1, y, x)), (2.0, 1.0));
        }
    }
    let oracle = flow_oracle(&prev, &curr);
    let bx = w.div_ceil(8);
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = oracle[(y / 8) * bx + x / 8];
            assert_eq!(
                (flow.at3(0, y, x), flow.at3(1, y, x)),
                (dx as f64, dy as f64)
            );
        }
    }
    let warped = rvf_core::kernels::bilinear_warp(&prev, &flow).unwrap();
    for y in 8..h - 8 {
        for x in 8..w - 8 {
            assert_eq!(warped.at3(0, y, x), curr.at3(0, y, x));
        }
    }
}

#[test]
fn flow_matches_oracle_on_synthetic_motion() {
    let hr = synthetic_clip(11, 2, 96, 80, 4).unwrap();
    let lr = downsample_clip(&hr, 4).unwrap();
    let flow = estimate_flow(&lr[0], &lr[1]).unwrap();
    let oracle = flow_oracle(&lr[0], &lr[1]);
    let (_, h, w) = lr[0].chw().unwrap();
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = oracle[(y / 8) * w.div_ceil(8) + x / 8];
            assert_eq!(
                (flow.at3(0, y, x), flow.at3(1, y, x)),
                (dx as f64, dy as f64)
            );
        }
    }
}

#[test]
fn concat_conv_model_reduces_to_baseline() {
    let cfg = ModelConfig {
        init_seed: 9,
        ..ModelConfig::baseline()
    };
    let (model, store) = Model::init(&cfg).unwrap();
    let (base, base_store) = baseline_model(&cfg.channels, &cfg.blocks, cfg.scale, 9).unwrap();
    assert_eq!(store.numel(), base_store.numel());
    assert_eq!(
        store.names().collect::<Vec<_>>(),
        base_store.names().collect::<Vec<_>>()
    );
    assert_eq!(store, base_store);

    let frame = rand(&[3, 10, 12], 3).map(|v| v.abs());
    let h0 = rand(&[16, 10, 12], 4);
    let mut g1 = Graph::new();
    let p1 = store.bind(&mut g1, true);
    let hw1 = g1.constant(h0.clone());
    let out1 = model.step(&mut g1, &p1, &frame, hw1).unwrap();
    let mut g2 = Graph::new();
    let p2 = base_store.bind(&mut g2, true);
    let hw2 = g2.constant(h0);
    let (hid2, out2) = base.step(&mut g2, &p2, &frame, hw2).unwrap();
    assert_eq!(g1.op_trace(), g2.op_trace());
    assert_eq!(g1.value(out1.output), g2.value(out2));
    assert_eq!(g1.value(out1.hidden), g2.value(hid2));
}

#[test]
fn every_lattice_variant_builds_and_runs() {
    for f in [Fusion::Concat, Fusion::Spatial, Fusion::Channel] {
        for b in [
            BlockKind::Conv,
            BlockKind::Spatial,
            BlockKind::Channel,
            BlockKind::Ica,
        ] {
            let (m, store) = Model::init(&small(f, b)).unwrap();
            let r = rollout(&m, &store, &frames(2, 6, 7, 1)).unwrap();
            assert_eq!(r.outputs[1].shape(), &[3, 24, 28]);
            assert_eq!(r.hidden[1].shape(), &[8, 6, 7]);
            assert!(r.hidden.iter().all(Tensor::is_finite));
        }
    }
}

#[test]
fn zero_initialized_output_is_bicubic() {
    let (m, store) = Model::init(&ModelConfig::default()).unwrap();
    let f = frames(1, 9, 11, 2).remove(0);
    let mut g = Graph::new();
    let p = store.bind(&mut g, false);
    let h = g.constant(Tensor::zeros(&[16, 9, 11]));
    let out = m.upsample(&mut g, &p, h, &f).unwrap();
    assert_eq!(g.value(out).shape(), &[3, 36, 44]);
    assert_eq!(*g.value(out), resize_bicubic(&f, 4.0).unwrap());
    let two = ModelConfig {
        scale: 2,
        ..ModelConfig::default()
    };
    let (m2, s2) = Model::init(&two).unwrap();
    let r = rollout(&m2, &s2, &[f.clone()]).unwrap();
    assert_eq!(r.outputs[0].shape(), &[3, 18, 22]);
    let bad = ModelConfig {
        scale: 3,
        ..ModelConfig::default()
    };
    assert!(matches!(Model::init(&bad), Err(Error::Config(_))));
}

#[test]
fn single_frame_sequence_is_one_step_from_zero_state() {
    let (m, mut store) = Model::init(&small(Fusion::Channel, BlockKind::Ica)).unwrap();
    randomize(&mut store, 3);
    let f = frames(1, 8, 8, 4);
    let video = VideoSequence::new(f.clone(), 4).unwrap();
    let out = run_sequence(&m, &store, &video).unwrap();
    let mut g = Graph::new();
    let p = store.bind(&mut g, false);
    let h = g.constant(Tensor::zeros(&[8, 8, 8]));
    let step = m.step(&mut g, &p, &f[0], h).unwrap();
    assert_eq!(out.frames[0], g.value(step.output).clamp01());
    assert!(VideoSequence::new(vec![], 4).is_err());
}

#[test]
fn outputs_are_causal() {
    let (m, mut store) = Model::init(&small(Fusion::Channel, BlockKind::Ica)).unwrap();
    randomize(&mut store, 8);
    let a = frames(4, 8, 8, 1);
    let mut b = a.clone();
    b[3] = rand(&[3, 8, 8], 99).map(f64::abs);
    b[2] = Tensor::full(&[3, 8, 8], 0.5);
    let ra = rollout(&m, &store, &a).unwrap();
    let rb = rollout(&m, &store, &b).unwrap();
    assert_eq!(ra.outputs[..2], rb.outputs[..2]);
    assert_eq!(ra.hidden[..2], rb.hidden[..2]);
    assert_ne!(ra.outputs[2], rb.outputs[2]);
}

#[test]
fn long_constant_rollout_stays_bounded() {
    let (m, mut store) = Model::init(&small(Fusion::Channel, BlockKind::Ica)).unwrap();
    randomize(&mut store, 21);
    let f = vec![Tensor::full(&[3, 8, 8], 0.6); 50];
    let r = rollout(&m, &store, &f).unwrap();
    let peaks: Vec<f64> = r.hidden.iter().map(Tensor::max_abs).collect();
    assert!(peaks.iter().all(|p| p.is_finite() && *p < 1e3), "{peaks:?}");
    let late = peaks[40..].iter().cloned().fold(0.0, f64::max);
    let early = peaks[..10].iter().cloned().fold(0.0, f64::max);
    assert!(late <= 10.0 * early.max(1.0));
}

#[test]
fn rollout_is_thread_count_invariant() {
    let (m, mut store) = Model::init(&small(Fusion::Spatial, BlockKind::Channel)).unwrap();
    randomize(&mut store, 2);
    let f = frames(3, 12, 10, 6);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| rollout(&m, &store, &f).unwrap().outputs)
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(1));
}

#[test]
fn gradient_check_through_full_model() {
    let cfg = ModelConfig {
        channels: vec![4, 8],
        blocks: vec![1, 1],
        heads: vec![1, 1],
        squeeze_ratio: 2,
        window: 4,
        scale: 2,
        ..ModelConfig::default()
    };
    for (f, b) in [
        (Fusion::Channel, BlockKind::Ica),
        (Fusion::Concat, BlockKind::Conv),
        (Fusion::Spatial, BlockKind::Spatial),
    ] {
        let cfg = cfg.clone().with_variant(f, b);
        let (m, mut store) = Model::init(&cfg).unwrap();
        randomize(&mut store, 13);
        let frame = rand(&[3, 6, 6], 1).map(f64::abs);
        let fixed = frame.clone();
        let case = GradCase::module(
            format!("model {f:?}/{b:?}"),
            vec![frame, rand(&[4, 6, 6], 2)],
            &store,
            5,
            move |g, p, v| {
                let h = m.reconstruct(g, p, v[0], v[1])?;
                m.upsample(g, p, h, &fixed)
            },
        );
        let report = case.run(3, 7).unwrap();
        assert!(report.passes(), "{report:?}");
    }
}

#[test]
fn checkpoint_roundtrip_is_bit_exact() {
    let cfg = small(Fusion::Channel, BlockKind::Ica);
    let (m, mut ckpt) = Checkpoint::init(&cfg).unwrap();
    randomize(&mut ckpt.params, 4);
    ckpt.step = 17;
    ckpt.loss_trace = vec![0.1, 0.05, 1.0 / 3.0];
    let dir = std::env::temp_dir().join(format!("rvf-ckpt-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("model.rvfc");
    ckpt.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, ckpt);
    let m2 = back.model().unwrap();
    let f = frames(2, 8, 8, 3);
    assert_eq!(
        rollout(&m, &ckpt.params, &f).unwrap().outputs,
        rollout(&m2, &back.params, &f).unwrap().outputs
    );
    let mut bytes = ckpt.to_bytes();
    bytes[0] = b'X';
    assert!(matches!(
        Checkpoint::read(&bytes[..]),
        Err(Error::Format(_))
    ));
    let bytes = ckpt.to_bytes();
    assert!(Checkpoint::read(&bytes[..bytes.len() - 3]).is_err());
    let mut wrong = back.clone();
    wrong.config.channels = vec![8, 8];
    assert!(wrong.model().is_err());
    assert!(matches!(
        Checkpoint::load(&dir.join("missing")),
        Err(Error::Io { .. })
    ));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn non_finite_loss_names_the_step() {
    let (m, mut store) = Model::init(&small(Fusion::Concat, BlockKind::Conv)).unwrap();
    let mut pair = TrainingPair {
        lr: frames(2, 4, 4, 1),
        hr: frames(2, 16, 16, 2),
    };
    pair.lr[1].data_mut()[5] = f64::NAN;
    let cfg = TrainConfig {
        steps: 3,
        ..Default::default()
    };
    match train_stage1(&m, &mut store, &[pair], &cfg, 40) {
        Err(Error::NonFiniteLoss { step, value }) => {
            assert_eq!(step, 40);
            assert!(value.is_nan());
        }
        other => panic!("expected non-finite loss error, got {other:?}"),
    }
}

#[test]
fn short_training_reduces_loss_and_keeps_trace_finite() {
    let cfg = small(Fusion::Channel, BlockKind::Ica);
    let (m, mut store) = Model::init(&cfg).unwrap();
    let clip = ClipConfig {
        frames: 2,
        size: 32,
        scale: 4,
    };
    let (pair, _) = random_pair(3, &clip).unwrap();
    let tc = TrainConfig {
        steps: 30,
        ..Default::default()
    };
    let before = sequence_loss(&m, &store, &pair, &tc).unwrap();
    let trace = train_stage1(&m, &mut store, &[pair.clone()], &tc, 0).unwrap();
    assert_eq!(trace.len(), 30);
    assert!(trace.iter().all(|v| v.is_finite()));
    assert_eq!(trace[0], before);
    assert!(sequence_loss(&m, &store, &pair, &tc).unwrap() < before);
}

#[test]
fn identity_degradation_gives_unit_similarity() {
    let probe = AttentionProbe::new(&ProbeConfig::default()).unwrap();
    let pairs = probe_pairs(1, 2, 16, 4).unwrap();
    let id = DegradationSpec::new(Degradation::Identity, 0);
    for kind in AttentionKind::ALL {
        assert_eq!(
            sensitivity_experiment(&probe, kind, &pairs, &id).unwrap(),
            1.0
        );
    }
    let noise = DegradationSpec::new(Degradation::Noise { sigma: 0.05 }, 3);
    let a = sensitivity_experiment(&probe, AttentionKind::Spatial, &pairs, &noise).unwrap();
    let b = sensitivity_experiment(&probe, AttentionKind::Spatial, &pairs, &noise).unwrap();
    assert!((a - b).abs() < 1e-7 && a < 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn reconstruct_preserves_spatial_shape(h in 3usize..11, w in 3usize..11, variant in 0usize..3) {
        let (f, b) = [(Fusion::Channel, BlockKind::Ica), (Fusion::Spatial, BlockKind::Spatial), (Fusion::Concat, BlockKind::Channel)][variant];
        let (m, store) = Model::init(&small(f, b)).unwrap();
        let mut g = Graph::new();
        let p = store.bind(&mut g, false);
        let x = g.constant(rand(&[3, h, w], 1));
        let hw = g.constant(rand(&[8, h, w], 2));
        let out = m.reconstruct(&mut g, &p, x, hw).unwrap();
        prop_assert_eq!(g.shape(out), &[8, h, w]);
        prop_assert!(g.value(out).is_finite());
    }

    #[test]
    fn sequence_shape_contract(t in 1usize..4, h in 4usize..9, w in 4usize..9) {
        let (m, store) = Model::init(&small(Fusion::Concat, BlockKind::Conv)).unwrap();
        let video = VideoSequence::new(frames(t, h, w, 3), 4).unwrap();
        let out = run_sequence(&m, &store, &video).unwrap();
        prop_assert_eq!(out.len(), t);
        for f in &out.frames {
            prop_assert_eq!(f.shape(), &[3, 4 * h, 4 * w]);
            prop_assert!(f.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}

//! `run_experiment`: dispatch of a validated configuration to the core
//! library, CSV emission and the JSON report.
//!
//! Every stochastic stage draws from a child seed of the top-level `seed`:
//!
//! | stage                    | seed                                   |
//! |--------------------------|----------------------------------------|
//! | model initialization     | `derive(seed, "model")`                |
//! | training clip `i`        | `derive_index(derive(seed, "train"), i)` |
//! | test clip `i`            | `derive_index(derive(seed, "test"), i)`  |
//! | probe pairs              | `derive(seed, "probe")`                |
//! | probe encoder            | `derive(seed, "probe_init")`           |
//! | probe degradation `j`    | `derive_index(derive(seed, "probe_degrade"), j)` |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use rvf_core::degradation::{
    degrade_sequence, resize_bicubic, Degradation, DegradationSpec, JPEG_JITTER,
};
use rvf_core::diagnostics::{ac_indicator, psnr, ssim, AcMode, FeatureBatch};
use rvf_core::rng::{derive, derive_index};
use rvf_core::vsr::{
    covariance_probe, probe_pairs, rollout, run_sequence, sensitivity_experiment, split_pair,
    synthetic_clip, train_stage1, AttentionKind, AttentionProbe, Checkpoint, CovarianceReport,
    Model, ModelConfig, ProbeConfig, TrainingPair, VideoSequence,
};
use rvf_core::Tensor;
use serde::Serialize;

use crate::config::{ExperimentConfig, ExperimentKind, Variant};
use crate::digest::sha256_hex;
use crate::error::{CliError, Result};
use crate::frames;
use crate::report::{num, RunReport, Table};

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Train(TrainOutcome),
    Infer {
        frames: Vec<FrameDigest>,
    },
    Sensitivity(SensitivityTable),
    Covariance {
        raw: CovarianceReport,
        correlation: CovarianceReport,
    },
    Ablation(AblationOutcome),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainOutcome {
    pub steps: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub checkpoint: PathBuf,
    pub checkpoint_sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrameDigest {
    pub frame: String,
    pub sha256: String,
}

/// Rows are attention kinds, columns degradations.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SensitivityTable {
    pub columns: Vec<String>,
    pub rows: Vec<(AttentionKind, Vec<f64>)>,
}

impl SensitivityTable {
    pub fn get(&self, kind: AttentionKind, column: &str) -> Option<f64> {
        let j = self.columns.iter().position(|c| c == column)?;
        self.rows
            .iter()
            .find(|(k, _)| *k == kind)
            .map(|(_, v)| v[j])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SplitScore {
    pub split: String,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VariantOutcome {
    pub variant: Variant,
    pub params: usize,
    pub loss_trace: Vec<f64>,
    pub scores: Vec<SplitScore>,
    /// `ac` of the hidden states on the covariance split.
    pub hidden_ac_raw: f64,
    pub hidden_ac_correlation: f64,
}

impl VariantOutcome {
    pub fn score(&self, split: &str) -> Option<&SplitScore> {
        self.scores.iter().find(|s| s.split == split)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationOutcome {
    pub bicubic: Vec<SplitScore>,
    pub variants: Vec<VariantOutcome>,
}

impl AblationOutcome {
    pub fn variant(&self, name: &str) -> Option<&VariantOutcome> {
        self.variants.iter().find(|v| v.variant.name == name)
    }
}

/// Validates `cfg`, runs it and writes its CSVs and `report.json` under `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let digest = cfg.digest()?;
    let mut run = Run {
        cfg,
        digest: &digest,
        csv: BTreeMap::new(),
        artifacts: Vec::new(),
        durations: BTreeMap::new(),
    };
    let start = Instant::now();
    let outcome = match cfg.kind()? {
        ExperimentKind::Train => run.train()?,
        ExperimentKind::Infer => run.infer()?,
        ExperimentKind::Sensitivity => run.sensitivity()?,
        ExperimentKind::Covariance => run.covariance()?,
        ExperimentKind::Ablation => run.ablation()?,
    };
    run.durations
        .insert("total".into(), start.elapsed().as_secs_f64());
    let report = RunReport {
        config: cfg.clone(),
        config_digest: digest.clone(),
        csv: run.csv,
        artifacts: run.artifacts,
        durations_s: run.durations,
        outcome,
    };
    report.write_json(&cfg.output_dir.join("report.json"))?;
    Ok(report)
}

/// Model configuration with the initialization seed derived from `seed`.
pub fn resolved_model(cfg: &ExperimentConfig, model: &ModelConfig) -> ModelConfig {
    ModelConfig {
        init_seed: derive(cfg.seed, "model"),
        ..model.clone()
    }
}

pub fn resolved_probe(cfg: &ExperimentConfig) -> ProbeConfig {
    ProbeConfig {
        seed: derive(cfg.seed, "probe_init"),
        ..cfg.probe.attention.clone()
    }
}

/// Training clips: synthetic, or consecutive windows of an HR corpus.
pub fn training_pairs(cfg: &ExperimentConfig) -> Result<Vec<TrainingPair>> {
    let base = derive(cfg.seed, "train");
    let scale = cfg.model.scale;
    let Some(dir) = &cfg.data.hr_dir else {
        let clip = cfg.data.clip(scale);
        return (0..cfg.data.train_clips)
            .into_par_iter()
            .map(|i| Ok(rvf_core::vsr::random_pair(derive_index(base, i as u64), &clip)?.0))
            .collect();
    };
    let hr: Vec<Tensor> = frames::load_frames(dir)?
        .into_iter()
        .map(|(_, t)| crop_to_multiple(&t, scale))
        .collect::<Result<_>>()?;
    let windows: Vec<&[Tensor]> = if hr.len() < cfg.data.frames {
        vec![&hr[..]]
    } else {
        hr.chunks_exact(cfg.data.frames).collect()
    };
    windows
        .par_iter()
        .enumerate()
        .map(|(i, w)| {
            let (lr, _) = degrade_sequence(w, scale, derive_index(base, i as u64), JPEG_JITTER)?;
            Ok(TrainingPair { lr, hr: w.to_vec() })
        })
        .collect()
}

fn crop_to_multiple(t: &Tensor, m: usize) -> Result<Tensor> {
    let (c, h, w) = t.chw()?;
    let (nh, nw) = (h - h % m, w - w % m);
    if nh == 0 || nw == 0 {
        return Err(CliError::Config(format!(
            "frame {h}×{w} is smaller than the scale {m}"
        )));
    }
    let mut out = Tensor::zeros(&[c, nh, nw]);
    let d = out.data_mut();
    for k in 0..c {
        for y in 0..nh {
            for x in 0..nw {
                d[(k * nh + y) * nw + x] = t.at3(k, y, x);
            }
        }
    }
    Ok(out)
}

/// Evaluation clips of every split; clip `i` shares its scene across splits.
pub fn test_pairs(
    cfg: &ExperimentConfig,
    splits: &[Degradation],
) -> Result<Vec<Vec<TrainingPair>>> {
    let base = derive(cfg.seed, "test");
    let clip = cfg.data.clip(cfg.model.scale);
    splits
        .iter()
        .map(|d| {
            (0..cfg.data.test_clips)
                .into_par_iter()
                .map(|i| Ok(split_pair(derive_index(base, i as u64), &clip, d)?))
                .collect()
        })
        .collect()
}

/// Column name of a degradation in the sensitivity table.
pub fn column_name(d: &Degradation) -> &'static str {
    match d {
        Degradation::Jpeg { .. } => "compression",
        other => other.label(),
    }
}

fn unique_columns(ds: &[Degradation]) -> Vec<String> {
    let names: Vec<&str> = ds.iter().map(column_name).collect();
    names
        .iter()
        .enumerate()
        .map(|(j, n)| {
            if names.iter().filter(|m| *m == n).count() > 1 {
                format!("{n}_{j}")
            } else {
                n.to_string()
            }
        })
        .collect()
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    digest: &'a str,
    csv: BTreeMap<String, PathBuf>,
    artifacts: Vec<PathBuf>,
    durations: BTreeMap<String, f64>,
}

impl Run<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.cfg.output_dir.join(name)
    }

    fn emit(&mut self, name: &str, table: &Table) -> Result<()> {
        let path = self.path(&format!("{name}.csv"));
        table.write(&path)?;
        self.csv.insert(name.into(), path);
        Ok(())
    }

    fn timed<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f()?;
        self.durations
            .insert(stage.into(), start.elapsed().as_secs_f64());
        Ok(out)
    }

    fn train(&mut self) -> Result<Outcome> {
        let cfg = self.cfg;
        let data = self.timed("data", || training_pairs(cfg))?;
        let model_cfg = resolved_model(cfg, &cfg.model);
        let (model, mut store) = Model::init(&model_cfg)?;
        let trace = self.timed("train", || {
            Ok(train_stage1(&model, &mut store, &data, &cfg.train, 0)?)
        })?;

        let mut loss = Table::new(self.digest, &["step", "loss"]);
        for (i, l) in trace.iter().enumerate() {
            loss.push(vec![i.to_string(), num(*l)]);
        }
        self.emit("loss", &loss)?;

        let ckpt = Checkpoint {
            config: model_cfg,
            step: trace.len(),
            loss_trace: trace.clone(),
            params: store,
        };
        let bytes = ckpt.to_bytes();
        let path = self.path("model.rvfc");
        crate::report::write_file(&path, &bytes)?;
        self.artifacts.push(path.clone());
        Ok(Outcome::Train(TrainOutcome {
            steps: trace.len(),
            initial_loss: trace.first().copied().unwrap_or(f64::NAN),
            final_loss: trace.last().copied().unwrap_or(f64::NAN),
            checkpoint: path,
            checkpoint_sha256: sha256_hex(&bytes),
        }))
    }

    fn infer(&mut self) -> Result<Outcome> {
        let infer = &self.cfg.infer;
        let ckpt_path = infer.checkpoint.as_ref().expect("validated");
        let input = infer.input_dir.as_ref().expect("validated");
        let ckpt = Checkpoint::load(ckpt_path)?;
        let model = ckpt.model()?;
        let (names, lr): (Vec<String>, Vec<Tensor>) =
            frames::load_frames(input)?.into_iter().unzip();
        let video = VideoSequence::new(lr, 1)?;
        let out = self.timed("infer", || Ok(run_sequence(&model, &ckpt.params, &video)?))?;
        let dir = self.path("frames");
        let encoded = frames::save_frames(&dir, &names, &out.frames)?;
        self.artifacts.push(dir);

        let mut table = Table::new(self.digest, &["frame_id", "sha256"]);
        let mut digests = Vec::new();
        for (name, bytes) in names.iter().zip(&encoded) {
            let sha = sha256_hex(bytes);
            table.push(vec![name.clone(), sha.clone()]);
            digests.push(FrameDigest {
                frame: name.clone(),
                sha256: sha,
            });
        }
        self.emit("digests", &table)?;
        Ok(Outcome::Infer { frames: digests })
    }

    fn sensitivity(&mut self) -> Result<Outcome> {
        let cfg = self.cfg;
        let (probe, pairs) = self.timed("data", || probe_setup(cfg, cfg.probe.pairs))?;
        let degradations = &cfg.probe.degradations;
        let base = derive(cfg.seed, "probe_degrade");
        let rows = self.timed("probe", || {
            AttentionKind::ALL
                .par_iter()
                .map(|&kind| {
                    let values = degradations
                        .par_iter()
                        .enumerate()
                        .map(|(j, d)| {
                            let spec =
                                DegradationSpec::new(d.clone(), derive_index(base, j as u64));
                            Ok(sensitivity_experiment(&probe, kind, &pairs, &spec)?)
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    Ok((kind, values))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let columns = unique_columns(degradations);
        let mut header = vec!["attention"];
        header.extend(columns.iter().map(String::as_str));
        let mut table = Table::new(self.digest, &header);
        for (kind, values) in &rows {
            let mut row = vec![kind.name().to_string()];
            row.extend(values.iter().map(|v| num(*v)));
            table.push(row);
        }
        self.emit("sensitivity", &table)?;
        Ok(Outcome::Sensitivity(SensitivityTable { columns, rows }))
    }

    fn covariance(&mut self) -> Result<Outcome> {
        let cfg = self.cfg;
        let (probe, pairs) =
            self.timed("data", || probe_setup(cfg, cfg.probe.covariance_samples))?;
        let (raw, correlation) = self.timed("probe", || {
            let (raw, corr) = rayon::join(
                || covariance_probe(&probe, &pairs, AcMode::Raw),
                || covariance_probe(&probe, &pairs, AcMode::Correlation),
            );
            Ok((raw?, corr?))
        })?;
        let mut table = Table::new(self.digest, &["features", "mode", "ac"]);
        for (mode, r) in [("raw", &raw), ("correlation", &correlation)] {
            for (features, v) in [
                ("input", r.input),
                ("spatial", r.spatial),
                ("channel", r.channel),
            ] {
                table.push(vec![features.into(), mode.into(), num(v)]);
            }
        }
        self.emit("covariance", &table)?;
        Ok(Outcome::Covariance { raw, correlation })
    }

    fn ablation(&mut self) -> Result<Outcome> {
        let cfg = self.cfg;
        let ab = &cfg.ablation;
        let train = self.timed("data", || training_pairs(cfg))?;
        let tests = self.timed("test_data", || test_pairs(cfg, &ab.splits))?;
        let labels: Vec<&str> = ab.splits.iter().map(Degradation::label).collect();
        let cov_split = labels
            .iter()
            .position(|l| *l == ab.covariance_split)
            .expect("validated");

        let bicubic = labels
            .iter()
            .zip(&tests)
            .map(|(label, pairs)| {
                let scores = pairs
                    .par_iter()
                    .map(|p| {
                        let up =
                            p.lr.iter()
                                .map(|f| Ok(resize_bicubic(f, cfg.model.scale as f64)?.clamp01()))
                                .collect::<Result<Vec<_>>>()?;
                        frame_scores(&p.hr, &up)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(mean_score(label, &scores))
            })
            .collect::<Result<Vec<_>>>()?;

        let ckpt_dir = self.path("checkpoints");
        let start = Instant::now();
        let variants = ab
            .variants
            .par_iter()
            .map(|v| {
                let model_cfg =
                    resolved_model(cfg, &cfg.model.clone().with_variant(v.fusion, v.block_kind));
                let (model, mut store) = Model::init(&model_cfg)?;
                let trace = train_stage1(&model, &mut store, &train, &cfg.train, 0)?;
                let mut scores = Vec::new();
                let mut hidden = Vec::new();
                for (s, (label, pairs)) in labels.iter().zip(&tests).enumerate() {
                    let evals = pairs
                        .par_iter()
                        .map(|p| {
                            let r = rollout(&model, &store, &p.lr)?;
                            let out: Vec<Tensor> = r.outputs.iter().map(Tensor::clamp01).collect();
                            Ok((frame_scores(&p.hr, &out)?, r.hidden))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let (per_clip, hid): (Vec<_>, Vec<_>) = evals.into_iter().unzip();
                    scores.push(mean_score(label, &per_clip));
                    if s == cov_split {
                        hidden = hid.into_iter().flatten().collect();
                    }
                }
                let batch = FeatureBatch::new(hidden)?;
                let ckpt = Checkpoint {
                    config: model_cfg,
                    step: trace.len(),
                    loss_trace: trace.clone(),
                    params: store,
                };
                if ab.save_checkpoints {
                    crate::report::write_file(
                        &ckpt_dir.join(format!("{}.rvfc", v.name)),
                        &ckpt.to_bytes(),
                    )?;
                }
                Ok(VariantOutcome {
                    variant: v.clone(),
                    params: ckpt.params.numel(),
                    loss_trace: trace,
                    scores,
                    hidden_ac_raw: ac_indicator(&batch, AcMode::Raw)?,
                    hidden_ac_correlation: ac_indicator(&batch, AcMode::Correlation)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        self.durations
            .insert("variants".into(), start.elapsed().as_secs_f64());
        if ab.save_checkpoints {
            self.artifacts.push(ckpt_dir);
        }

        let mut metrics = Table::new(
            self.digest,
            &["variant", "fusion", "block_kind", "split", "psnr", "ssim"],
        );
        for s in &bicubic {
            metrics.push(vec![
                "bicubic".into(),
                "-".into(),
                "-".into(),
                s.split.clone(),
                num(s.psnr),
                num(s.ssim),
            ]);
        }
        let mut ac = Table::new(
            self.digest,
            &["variant", "split", "ac_raw", "ac_correlation"],
        );
        let mut loss = Table::new(self.digest, &["variant", "step", "loss"]);
        for v in &variants {
            let (name, fusion, block) = (
                &v.variant.name,
                v.variant.fusion.name(),
                v.variant.block_kind.name(),
            );
            for s in &v.scores {
                metrics.push(vec![
                    name.clone(),
                    fusion.into(),
                    block.into(),
                    s.split.clone(),
                    num(s.psnr),
                    num(s.ssim),
                ]);
            }
            ac.push(vec![
                name.clone(),
                ab.covariance_split.clone(),
                num(v.hidden_ac_raw),
                num(v.hidden_ac_correlation),
            ]);
            for (i, l) in v.loss_trace.iter().enumerate() {
                loss.push(vec![name.clone(), i.to_string(), num(*l)]);
            }
        }
        self.emit("ablation", &metrics)?;
        self.emit("ablation_ac", &ac)?;
        self.emit("ablation_loss", &loss)?;
        Ok(Outcome::Ablation(AblationOutcome { bicubic, variants }))
    }
}

fn probe_setup(
    cfg: &ExperimentConfig,
    count: usize,
) -> Result<(AttentionProbe, Vec<(Tensor, Tensor)>)> {
    let p = &cfg.probe;
    let probe = AttentionProbe::new(&resolved_probe(cfg))?;
    let pairs = probe_pairs(derive(cfg.seed, "probe"), count, p.size, p.scale)?;
    Ok((probe, pairs))
}

/// Sums of per-frame PSNR and SSIM, and the frame count.
fn frame_scores(hr: &[Tensor], out: &[Tensor]) -> Result<(f64, f64, usize)> {
    let mut acc = (0.0, 0.0, 0);
    for (h, o) in hr.iter().zip(out) {
        acc.0 += psnr(h, o)?;
        acc.1 += ssim(h, o)?;
        acc.2 += 1;
    }
    Ok(acc)
}

fn mean_score(split: &str, per_clip: &[(f64, f64, usize)]) -> SplitScore {
    let (p, s, n) = per_clip
        .iter()
        .fold((0.0, 0.0, 0), |a, c| (a.0 + c.0, a.1 + c.1, a.2 + c.2));
    SplitScore {
        split: split.into(),
        psnr: p / n as f64,
        ssim: s / n as f64,
    }
}

/// Synthetic HR clip written as numbered PNGs, for seeding a corpus.
pub fn write_synthetic_corpus(
    dir: &Path,
    seed: u64,
    frames: usize,
    size: usize,
) -> Result<Vec<PathBuf>> {
    let clip = synthetic_clip(seed, frames, size, size, 1)?;
    let names = frames::numbered_names(frames);
    frames::save_frames(dir, &names, &clip)?;
    Ok(names.iter().map(|n| dir.join(n)).collect())
}

//! Subcommands that work directly on frame directories.

use std::path::{Path, PathBuf};

use rvf_core::degradation::{degrade_sequence, Degradation, DegradationSpec, JPEG_JITTER};
use rvf_core::diagnostics::{radial_power_spectrum, Metric};
use rvf_core::rng::derive_index;
use rvf_core::Tensor;
use serde::Serialize;

use crate::digest::{sha256_hex, ContentDigest};
use crate::error::{CliError, Result};
use crate::frames;
use crate::report::{num, write_file, Table};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Random blur, downscale, noise and jittered JPEG drawn once per clip.
    Realworld,
    Blur,
    Noise,
    Jpeg,
    Resize,
}

#[derive(Clone, Debug, Serialize)]
pub struct DegradeArgs {
    pub preset: Preset,
    pub seed: u64,
    pub scale: usize,
    pub sigma: Option<f64>,
    pub quality: Option<u8>,
    pub factor: Option<f64>,
}

impl DegradeArgs {
    /// The fixed operator of a non-random preset.
    pub fn operator(&self) -> Option<Degradation> {
        match self.preset {
            Preset::Realworld => None,
            Preset::Blur => Some(Degradation::Blur {
                sigma: self.sigma.unwrap_or(2.0),
            }),
            Preset::Noise => Some(Degradation::Noise {
                sigma: self.sigma.unwrap_or(0.05),
            }),
            Preset::Jpeg => Some(Degradation::Jpeg {
                quality: self.quality.unwrap_or(30),
            }),
            Preset::Resize => Some(Degradation::Resize {
                factor: self.factor.unwrap_or(1.0 / self.scale as f64),
            }),
        }
    }
}

/// Digest of an invocation's settings and of the frames it reads (not their paths).
fn invocation_digest(args: &impl Serialize, dirs: &[&Path]) -> Result<String> {
    let mut d = ContentDigest::new();
    d.part(
        "args",
        serde_json::to_string(args)
            .expect("arguments serialize")
            .as_bytes(),
    );
    for dir in dirs {
        for path in frames::list_frames(dir)? {
            let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
            d.part(&frames::frame_name(&path), &bytes);
        }
    }
    Ok(d.hex())
}

#[derive(Serialize)]
struct SpecRecord<'a> {
    frame: &'a str,
    spec: &'a DegradationSpec,
}

/// Degrades every frame of `input`; writes the frames, `specs.jsonl` (one
/// spec per frame) and `digests.csv` to `output`.
pub fn degrade(input: &Path, output: &Path, args: &DegradeArgs) -> Result<Table> {
    if args.scale == 0 {
        return Err(CliError::Config("`--scale` must be positive".into()));
    }
    let op = args.operator();
    if let Some(op) = &op {
        op.validate().map_err(|e| CliError::Config(e.to_string()))?;
    }
    let digest = invocation_digest(args, &[input])?;
    let (names, hr): (Vec<String>, Vec<Tensor>) = frames::load_frames(input)?.into_iter().unzip();
    let (out, specs) = match op {
        None => degrade_sequence(&hr, args.scale, args.seed, JPEG_JITTER)?,
        Some(op) => {
            let specs: Vec<_> = (0..hr.len())
                .map(|t| DegradationSpec::new(op.clone(), derive_index(args.seed, t as u64)))
                .collect();
            let out = hr
                .iter()
                .zip(&specs)
                .map(|(f, s)| s.apply(f))
                .collect::<rvf_core::Result<Vec<_>>>()?;
            (out, specs)
        }
    };
    let encoded = frames::save_frames(output, &names, &out)?;
    let mut jsonl = String::new();
    for (name, spec) in names.iter().zip(&specs) {
        jsonl.push_str(
            &serde_json::to_string(&SpecRecord { frame: name, spec }).expect("spec serializes"),
        );
        jsonl.push('\n');
    }
    write_file(&output.join("specs.jsonl"), jsonl.as_bytes())?;
    let mut table = Table::new(&digest, &["frame_id", "sha256"]);
    for (name, bytes) in names.iter().zip(&encoded) {
        table.push(vec![name.clone(), sha256_hex(bytes)]);
    }
    table.write(&output.join("digests.csv"))?;
    Ok(table)
}

#[derive(Serialize)]
struct MetricArgs {
    metrics: Vec<&'static str>,
}

/// Per-frame metrics of `output` against `reference`, paired in lexicographic
/// order, plus a `mean` row per metric.
pub fn metrics(reference: &Path, output: &Path, metrics: &[Metric]) -> Result<Table> {
    if metrics.is_empty() {
        return Err(CliError::Config("`--metrics` names no metric".into()));
    }
    let args = MetricArgs {
        metrics: metrics.iter().map(|m| m.name()).collect(),
    };
    let digest = invocation_digest(&args, &[reference, output])?;
    let refs = frames::load_frames(reference)?;
    let outs = frames::load_frames(output)?;
    if refs.len() != outs.len() {
        return Err(CliError::Config(format!(
            "`--ref` has {} frames but `--out` has {}",
            refs.len(),
            outs.len()
        )));
    }
    let mut table = Table::new(&digest, &["frame_id", "metric", "value"]);
    for &m in metrics {
        let mut total = 0.0;
        for ((_, r), (name, o)) in refs.iter().zip(&outs) {
            let v = m.eval(r, o)?;
            total += v;
            table.push(vec![name.clone(), m.name().into(), num(v)]);
        }
        table.push(vec![
            "mean".into(),
            m.name().into(),
            num(total / refs.len() as f64),
        ]);
    }
    Ok(table)
}

#[derive(Serialize)]
struct RpsArgs {
    bins: usize,
}

/// Radial power spectrum of every frame; metric `rps_<bin>`.
pub fn rps(input: &Path, bins: usize) -> Result<Table> {
    if bins == 0 {
        return Err(CliError::Config("`--bins` must be positive".into()));
    }
    let digest = invocation_digest(&RpsArgs { bins }, &[input])?;
    let mut table = Table::new(&digest, &["frame_id", "metric", "value"]);
    for (name, frame) in frames::load_frames(input)? {
        let s = radial_power_spectrum(&frame, bins)?;
        for (b, p) in s.power.iter().enumerate() {
            table.push(vec![name.clone(), format!("rps_{b:03}"), num(*p)]);
        }
    }
    Ok(table)
}

/// Writes `table` to `csv` or prints it.
pub fn emit(table: &Table, csv: Option<&PathBuf>) -> Result<()> {
    match csv {
        Some(path) => table.write(path),
        None => {
            print!("{}", table.render());
            Ok(())
        }
    }
}

//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use rvf_core::degradation::Degradation;
use rvf_core::diagnostics::AcMode;
use rvf_core::vsr::{BlockKind, ClipConfig, Fusion, ModelConfig, ProbeConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::digest::ContentDigest;
use crate::error::{CliError, Result};
use crate::frames;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Train,
    Infer,
    Sensitivity,
    Covariance,
    Ablation,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Train => "train",
            ExperimentKind::Infer => "infer",
            ExperimentKind::Sensitivity => "sensitivity",
            ExperimentKind::Covariance => "covariance",
            ExperimentKind::Ablation => "ablation",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Set by the subcommand when absent.
    #[serde(default)]
    pub kind: Option<ExperimentKind>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub probe: ProbeSection,
    #[serde(default)]
    pub ablation: AblationSection,
    #[serde(default)]
    pub infer: InferSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            kind: None,
            seed: 0,
            output_dir: default_output_dir(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            data: DataConfig::default(),
            probe: ProbeSection::default(),
            ablation: AblationSection::default(),
            infer: InferSection::default(),
        }
    }
}

/// Training and evaluation clips.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub frames: usize,
    /// HR side length of synthetic clips.
    pub size: usize,
    pub train_clips: usize,
    pub test_clips: usize,
    /// Directory of HR PNG frames to train on instead of synthetic clips;
    /// consecutive windows of `frames` frames form the clips.
    pub hr_dir: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            frames: 5,
            size: 64,
            train_clips: 8,
            test_clips: 6,
            hr_dir: None,
        }
    }
}

impl DataConfig {
    pub fn clip(&self, scale: usize) -> ClipConfig {
        ClipConfig {
            frames: self.frames,
            size: self.size,
            scale,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSection {
    /// Frame pairs averaged per table cell.
    pub pairs: usize,
    /// Pairs in the covariance batch.
    pub covariance_samples: usize,
    /// LR side length of probe frames.
    pub size: usize,
    pub scale: usize,
    pub degradations: Vec<Degradation>,
    pub ac_mode: AcMode,
    pub attention: ProbeConfig,
}

impl Default for ProbeSection {
    fn default() -> Self {
        ProbeSection {
            pairs: 20,
            covariance_samples: 100,
            size: 32,
            scale: 4,
            degradations: default_splits_blur_first(),
            ac_mode: AcMode::Correlation,
            attention: ProbeConfig::default(),
        }
    }
}

fn default_splits_blur_first() -> Vec<Degradation> {
    vec![
        Degradation::Blur { sigma: 2.0 },
        Degradation::Noise { sigma: 0.05 },
        Degradation::Jpeg { quality: 30 },
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    pub fusion: Fusion,
    pub block_kind: BlockKind,
}

impl Variant {
    pub fn new(name: &str, fusion: Fusion, block_kind: BlockKind) -> Self {
        Variant {
            name: name.into(),
            fusion,
            block_kind,
        }
    }
}

/// The four-variant lattice: concatenation fusion with spatial or channel
/// attention blocks, then channel attention fusion with channel attention or
/// improved channel attention blocks.
pub fn default_variants() -> Vec<Variant> {
    vec![
        Variant::new("sp_baseline", Fusion::Concat, BlockKind::Spatial),
        Variant::new("ch_baseline", Fusion::Concat, BlockKind::Channel),
        Variant::new("realviformer_minus", Fusion::Channel, BlockKind::Channel),
        Variant::new("realviformer", Fusion::Channel, BlockKind::Ica),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationSection {
    pub variants: Vec<Variant>,
    /// Test splits; each clip is downsampled and corrupted by one operator.
    pub splits: Vec<Degradation>,
    /// Split whose hidden states feed the covariance indicator.
    pub covariance_split: String,
    /// Write each trained model to `checkpoints/<name>.rvfc`.
    pub save_checkpoints: bool,
}

impl Default for AblationSection {
    fn default() -> Self {
        AblationSection {
            variants: default_variants(),
            splits: vec![
                Degradation::Noise { sigma: 0.05 },
                Degradation::Jpeg { quality: 30 },
                Degradation::Blur { sigma: 2.0 },
            ],
            covariance_split: "noise".into(),
            save_checkpoints: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferSection {
    pub checkpoint: Option<PathBuf>,
    pub input_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Fixes `kind` to the one a subcommand runs; a different explicit kind is an error.
    pub fn with_kind(mut self, kind: ExperimentKind) -> Result<Self> {
        match self.kind {
            Some(k) if k != kind => Err(CliError::Config(format!(
                "`kind = \"{}\"` does not match subcommand `{}`",
                k.name(),
                kind.name()
            ))),
            _ => {
                self.kind = Some(kind);
                Ok(self)
            }
        }
    }

    pub fn kind(&self) -> Result<ExperimentKind> {
        self.kind
            .ok_or_else(|| CliError::Config("missing key `kind`".into()))
    }

    /// Checks values and that referenced paths exist.
    pub fn validate(&self) -> Result<()> {
        let kind = self.kind()?;
        let key = |k: &str, e: rvf_core::Error| CliError::Config(format!("`{k}`: {e}"));
        self.model.validate().map_err(|e| key("model", e))?;
        if self.model.init_seed != 0 || self.probe.attention.seed != 0 {
            return Err(CliError::Config(
                "`model.init_seed` and `probe.attention.seed` are derived from the top-level `seed`; leave them unset".into(),
            ));
        }
        self.train.validate().map_err(|e| key("train", e))?;
        self.data
            .clip(self.model.scale)
            .validate()
            .map_err(|e| key("data", e))?;
        if matches!(kind, ExperimentKind::Train | ExperimentKind::Ablation)
            && self.data.train_clips == 0
            && self.data.hr_dir.is_none()
        {
            return Err(CliError::Config(
                "`data.train_clips` must be at least 1".into(),
            ));
        }
        if kind == ExperimentKind::Ablation {
            if self.data.test_clips == 0 {
                return Err(CliError::Config(
                    "`data.test_clips` must be at least 1".into(),
                ));
            }
            if self.ablation.variants.is_empty() {
                return Err(CliError::Config(
                    "`ablation.variants` must not be empty".into(),
                ));
            }
            let mut names: Vec<_> = self
                .ablation
                .variants
                .iter()
                .map(|v| v.name.as_str())
                .collect();
            names.sort_unstable();
            if names.windows(2).any(|w| w[0] == w[1])
                || names
                    .iter()
                    .any(|n| n.is_empty() || n.contains([',', '/', '\\']))
            {
                return Err(CliError::Config(
                    "`ablation.variants` names must be unique, non-empty and free of `,` `/` `\\`"
                        .into(),
                ));
            }
            for d in &self.ablation.splits {
                d.validate().map_err(|e| key("ablation.splits", e))?;
            }
            if !self
                .ablation
                .splits
                .iter()
                .any(|d| d.label() == self.ablation.covariance_split)
            {
                return Err(CliError::Config(format!(
                    "`ablation.covariance_split` = `{}` names no split",
                    self.ablation.covariance_split
                )));
            }
        }
        if matches!(
            kind,
            ExperimentKind::Sensitivity | ExperimentKind::Covariance
        ) {
            let p = &self.probe;
            let count = if kind == ExperimentKind::Sensitivity {
                p.pairs
            } else {
                p.covariance_samples
            };
            if count == 0 || p.size == 0 || p.scale == 0 {
                return Err(CliError::Config(
                    "`probe` needs positive `pairs`, `covariance_samples`, `size` and `scale`"
                        .into(),
                ));
            }
            if kind == ExperimentKind::Covariance && p.covariance_samples < 2 {
                return Err(CliError::Config(
                    "`probe.covariance_samples` must be at least 2".into(),
                ));
            }
            for d in &p.degradations {
                d.validate().map_err(|e| key("probe.degradations", e))?;
            }
        }
        if let Some(dir) = &self.data.hr_dir {
            require_dir(dir)?;
        }
        if kind == ExperimentKind::Infer {
            let ckpt = self
                .infer
                .checkpoint
                .as_ref()
                .ok_or_else(|| CliError::Config("missing key `infer.checkpoint`".into()))?;
            if !ckpt.is_file() {
                return Err(CliError::io(
                    ckpt,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "checkpoint not found"),
                ));
            }
            let dir = self
                .infer
                .input_dir
                .as_ref()
                .ok_or_else(|| CliError::Config("missing key `infer.input_dir`".into()))?;
            require_dir(dir)?;
        }
        Ok(())
    }

    /// Canonical JSON of the whole configuration.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("configuration serializes")
    }

    /// Digest of the configuration and of every input file it references.
    /// Paths do not enter it, only file contents, so a run moved to another
    /// directory keeps its digest.
    pub fn digest(&self) -> Result<String> {
        let mut anon = self.clone();
        anon.output_dir = PathBuf::new();
        let placeholder = |p: &mut Option<PathBuf>, name: &str| {
            if p.is_some() {
                *p = Some(PathBuf::from(name));
            }
        };
        placeholder(&mut anon.data.hr_dir, "hr_dir");
        placeholder(&mut anon.infer.input_dir, "input_dir");
        placeholder(&mut anon.infer.checkpoint, "checkpoint");
        let mut d = ContentDigest::new();
        d.part("config", anon.canonical_json().as_bytes());
        let dirs = [self.data.hr_dir.as_ref(), self.infer.input_dir.as_ref()];
        for dir in dirs.into_iter().flatten() {
            for path in frames::list_frames(dir)? {
                let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
                d.part(&frames::frame_name(&path), &bytes);
            }
        }
        if let Some(ckpt) = &self.infer.checkpoint {
            let bytes = std::fs::read(ckpt).map_err(|e| CliError::io(ckpt, e))?;
            d.part("checkpoint", &bytes);
        }
        Ok(d.hex())
    }
}

fn require_dir(dir: &Path) -> Result<()> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(CliError::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "directory not found"),
        ))
    }
}

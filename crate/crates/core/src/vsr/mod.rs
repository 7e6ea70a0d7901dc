//! Recurrent video super-resolution: block-matching alignment, the
//! reconstruction model and its baseline variants, stage-1 training,
//! checkpoints, synthetic data and the attention probes.

mod baseline;
mod checkpoint;
mod config;
mod flow;
mod model;
mod optimizer;
mod probes;
mod sequence;
mod synthetic;
mod train;

pub use baseline::baseline_model;
pub use checkpoint::Checkpoint;
pub use config::{BlockKind, Fusion, ModelConfig};
pub use flow::{estimate_flow, BLOCK, RADIUS, TIE_TOLERANCE};
pub use model::{Block, FusionModule, Model, Reconstruction, StepOut, Upsampler, LEAKY_SLOPE};
pub use optimizer::{clip_grad_norm, Optimizer, OptimizerConfig};
pub use probes::{
    covariance_probe, probe_pairs, sensitivity_experiment, AttentionKind, AttentionProbe,
    CovarianceReport, ProbeConfig,
};
pub use sequence::{rollout, run_sequence, sequence_graph, Rollout, VideoSequence};
pub use synthetic::{
    downsample_clip, random_pair, split_pair, synthetic_clip, ClipConfig, MAX_SPEED,
};
pub use train::{sequence_loss, train_stage1, TrainConfig, TrainingPair, SSIM_WEIGHT};

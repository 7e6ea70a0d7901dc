use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::diagnostics::{reconstruction_loss, CHARBONNIER_EPS};
use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::tensor::Tensor;

use super::model::Model;
use super::optimizer::{clip_grad_norm, Optimizer, OptimizerConfig};
use super::sequence::sequence_graph;

/// Weight of the `1 − SSIM` term relative to the Charbonnier term.
pub const SSIM_WEIGHT: f64 = 0.001;

/// A degraded low-resolution clip and its clean high-resolution target.
#[derive(Clone, Debug)]
pub struct TrainingPair {
    pub lr: Vec<Tensor>,
    pub hr: Vec<Tensor>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: usize,
    pub optimizer: OptimizerConfig,
    pub charbonnier_eps: f64,
    pub ssim_weight: f64,
    /// Joint gradient-norm cap; `0` disables clipping.
    pub clip_grad_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 500,
            optimizer: OptimizerConfig::default(),
            charbonnier_eps: CHARBONNIER_EPS,
            ssim_weight: SSIM_WEIGHT,
            clip_grad_norm: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if !(self.charbonnier_eps > 0.0) || self.ssim_weight < 0.0 || self.clip_grad_norm < 0.0 {
            return Err(Error::Config(
                "training `charbonnier_eps` must be positive; `ssim_weight` and `clip_grad_norm` non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Sequence loss: per-frame `charbonnier + λ(1 − SSIM)` averaged over time.
pub fn sequence_loss(
    model: &Model,
    store: &ParamStore,
    pair: &TrainingPair,
    cfg: &TrainConfig,
) -> Result<f64> {
    let mut g = Graph::new();
    let p = store.bind(&mut g, false);
    let loss = build_loss(model, &mut g, &p, pair, cfg)?;
    Ok(g.value(loss).data()[0])
}

fn build_loss(
    model: &Model,
    g: &mut Graph,
    p: &crate::nn::Bound,
    pair: &TrainingPair,
    cfg: &TrainConfig,
) -> Result<crate::autodiff::Var> {
    if pair.lr.len() != pair.hr.len() || pair.lr.is_empty() {
        return Err(Error::param(
            "pair",
            "LR and HR clips must be non-empty and of equal length",
        ));
    }
    let outs = sequence_graph(model, g, p, &pair.lr)?;
    let mut total = None;
    for (o, hr) in outs.iter().zip(&pair.hr) {
        if g.shape(o.output) != hr.shape() {
            return Err(Error::dim("training target", g.shape(o.output), hr.shape()));
        }
        let target = g.constant(hr.clone());
        let l = reconstruction_loss(g, o.output, target, cfg.charbonnier_eps, cfg.ssim_weight)?;
        total = Some(match total {
            None => l,
            Some(t) => g.add(t, l)?,
        });
    }
    let total = total.expect("non-empty clip");
    Ok(g.mul_scalar(total, 1.0 / outs.len() as f64))
}

/// Runs `cfg.steps` optimizer steps cycling through `data`; returns the loss
/// before each update. `first_step` numbers the steps in error messages.
pub fn train_stage1(
    model: &Model,
    store: &mut ParamStore,
    data: &[TrainingPair],
    cfg: &TrainConfig,
    first_step: usize,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::param("data", "training needs at least one pair"));
    }
    let mut opt = Optimizer::new(cfg.optimizer.clone())?;
    let mut trace = Vec::with_capacity(cfg.steps);
    for i in 0..cfg.steps {
        let pair = &data[i % data.len()];
        let mut g = Graph::new();
        let p = store.bind(&mut g, true);
        let loss = build_loss(model, &mut g, &p, pair, cfg)?;
        let value = g.value(loss).data()[0];
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss {
                step: first_step + i,
                value,
            });
        }
        trace.push(value);
        let grads = g.backward(loss)?;
        let mut grads = p.collect_grads(&grads, store)?;
        if cfg.clip_grad_norm > 0.0 {
            clip_grad_norm(&mut grads, cfg.clip_grad_norm);
        }
        opt.step(store, &grads)?;
    }
    Ok(trace)
}

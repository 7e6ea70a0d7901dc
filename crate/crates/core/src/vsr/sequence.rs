use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{Bound, ParamStore};
use crate::tensor::Tensor;

use super::flow::estimate_flow;
use super::model::{Model, StepOut};

/// `T ≥ 1` frames of equal `3×H×W` shape.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoSequence {
    pub frames: Vec<Tensor>,
    pub scale: usize,
}

impl VideoSequence {
    pub fn new(frames: Vec<Tensor>, scale: usize) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(Error::param(
                "frames",
                "a sequence needs at least one frame",
            ));
        };
        let (c, _, _) = first.chw()?;
        if c != 3 {
            return Err(Error::dim("video frame", first.shape(), &[3]));
        }
        if let Some(bad) = frames.iter().find(|f| f.shape() != first.shape()) {
            return Err(Error::dim("video frame", first.shape(), bad.shape()));
        }
        if scale == 0 {
            return Err(Error::param("scale", "must be positive"));
        }
        Ok(VideoSequence { frames, scale })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Aligns `h_{t−1}` to frame `t`. The first step gets a zero state.
fn warped_hidden(
    g: &mut Graph,
    prev: Option<(Var, &Tensor)>,
    frame: &Tensor,
    channels: usize,
) -> Result<Var> {
    match prev {
        None => {
            let (_, h, w) = frame.chw()?;
            Ok(g.constant(Tensor::zeros(&[channels, h, w])))
        }
        Some((h_prev, prev_frame)) => {
            let flow = estimate_flow(prev_frame, frame)?;
            g.warp(h_prev, &flow)
        }
    }
}

/// Unrolls the whole sequence on one graph (used for training).
pub fn sequence_graph(
    model: &Model,
    g: &mut Graph,
    p: &Bound,
    frames: &[Tensor],
) -> Result<Vec<StepOut>> {
    let mut outs: Vec<StepOut> = Vec::with_capacity(frames.len());
    for (t, frame) in frames.iter().enumerate() {
        let prev = (t > 0).then(|| (outs[t - 1].hidden, &frames[t - 1]));
        let hw = warped_hidden(g, prev, frame, model.hidden_channels())?;
        outs.push(model.step(g, p, frame, hw)?);
    }
    Ok(outs)
}

/// Unclipped outputs and hidden states of an inference rollout.
#[derive(Clone, Debug)]
pub struct Rollout {
    pub outputs: Vec<Tensor>,
    pub hidden: Vec<Tensor>,
}

/// Step-by-step inference; each step runs on a fresh graph.
pub fn rollout(model: &Model, store: &ParamStore, frames: &[Tensor]) -> Result<Rollout> {
    let mut outputs = Vec::with_capacity(frames.len());
    let mut hidden: Vec<Tensor> = Vec::with_capacity(frames.len());
    for (t, frame) in frames.iter().enumerate() {
        let mut g = Graph::new();
        let p = store.bind(&mut g, false);
        let prev = match t {
            0 => None,
            _ => Some((g.constant(hidden[t - 1].clone()), &frames[t - 1])),
        };
        let hw = warped_hidden(&mut g, prev, frame, model.hidden_channels())?;
        let out = model.step(&mut g, &p, frame, hw)?;
        outputs.push(g.value(out.output).clone());
        hidden.push(g.value(out.hidden).clone());
    }
    Ok(Rollout { outputs, hidden })
}

/// Super-resolves every frame; outputs are clipped to `[0, 1]`.
pub fn run_sequence(
    model: &Model,
    store: &ParamStore,
    video: &VideoSequence,
) -> Result<VideoSequence> {
    if video.scale != 1 && video.scale != model.cfg.scale {
        return Err(Error::Config(format!(
            "sequence scale {} does not match model scale {}",
            video.scale, model.cfg.scale
        )));
    }
    let r = rollout(model, store, &video.frames)?;
    VideoSequence::new(
        r.outputs.iter().map(Tensor::clamp01).collect(),
        model.cfg.scale,
    )
}

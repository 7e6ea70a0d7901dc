//! Central finite-difference verification of tape gradients.

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::kernels::ConvSpec;
use crate::nn::{Bound, ParamStore};
use crate::rng::{self, Stream};
use crate::tensor::Tensor;

/// Finite-difference step used throughout the test suites.
pub const FD_STEP: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Fraction of coordinates with relative error below `1e-3`.
    pub frac_within_1e3: f64,
    pub max_rel_err: f64,
    /// `(input, coordinate, analytic, numeric)` of the worst coordinate.
    pub worst: (usize, usize, f64, f64),
}

impl GradCheckReport {
    /// rel. err < 1e-3 on at least 95% of coordinates and < 1e-2 on all.
    pub fn passes(&self) -> bool {
        self.frac_within_1e3 >= 0.95 && self.max_rel_err < 1e-2
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Projects a tensor-valued output to a scalar with fixed pseudo-random weights,
/// so that every output coordinate contributes to the checked gradient.
pub fn random_projection(g: &mut Graph, out: Var, seed: u64) -> Result<Var> {
    let s = Stream::new(seed);
    let w = Tensor::from_fn(g.shape(out), |i| s.uniform_range(i as u64, -1.0, 1.0));
    let w = g.constant(w);
    let p = g.mul(out, w)?;
    Ok(g.sum(p))
}

fn eval_loss<F>(inputs: &[Tensor], build: &F) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let loss = build(&mut g, &vars)?;
    Ok(g.value(loss).data()[0])
}

/// Compares tape gradients of `build` against central differences at up to
/// `samples_per_input` coordinates per input (all of them when the input is smaller).
pub fn check_gradients<F>(
    inputs: &[Tensor],
    build: F,
    samples_per_input: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let loss = build(&mut g, &vars)?;
    let grads = g.backward(loss)?;

    let pick = Stream::new(seed);
    let mut errors = Vec::new();
    let mut worst = (0, 0, 0.0, 0.0);
    let mut max_rel = 0.0f64;
    let mut perturbed = inputs.to_vec();
    for (k, (var, input)) in vars.iter().zip(inputs).enumerate() {
        let analytic = grads.get_or_zeros(*var, input);
        let n = input.numel();
        let coords: Vec<usize> = if n <= samples_per_input {
            (0..n).collect()
        } else {
            (0..samples_per_input)
                .map(|i| {
                    pick.child_index(k as u64)
                        .int_range(i as u64, 0, n as i64 - 1) as usize
                })
                .collect()
        };
        for idx in coords {
            let orig = input.data()[idx];
            perturbed[k].data_mut()[idx] = orig + FD_STEP;
            let plus = eval_loss(&perturbed, &build)?;
            perturbed[k].data_mut()[idx] = orig - FD_STEP;
            let minus = eval_loss(&perturbed, &build)?;
            perturbed[k].data_mut()[idx] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = analytic.data()[idx];
            let rel = relative_error(a, numeric);
            if !rel.is_finite() {
                return Err(Error::Usage(format!(
                    "non-finite gradient at input {k} coord {idx}"
                )));
            }
            if rel >= max_rel {
                max_rel = rel;
                worst = (k, idx, a, numeric);
            }
            errors.push(rel);
        }
    }
    let checked = errors.len();
    let within = errors.iter().filter(|&&e| e < 1e-3).count();
    Ok(GradCheckReport {
        checked,
        frac_within_1e3: within as f64 / checked.max(1) as f64,
        max_rel_err: max_rel,
        worst,
    })
}

type Build = Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var> + Send + Sync>;

/// A named differentiable computation with fixed inputs, reduced to a scalar.
pub struct GradCase {
    pub name: String,
    pub inputs: Vec<Tensor>,
    build: Build,
}

impl GradCase {
    pub fn new<F>(name: impl Into<String>, inputs: Vec<Tensor>, build: F) -> Self
    where
        F: Fn(&mut Graph, &[Var]) -> Result<Var> + Send + Sync + 'static,
    {
        GradCase {
            name: name.into(),
            inputs,
            build: Box::new(build),
        }
    }

    /// Case whose tensor output is projected to a scalar with fixed random weights.
    pub fn projected<F>(name: impl Into<String>, inputs: Vec<Tensor>, seed: u64, build: F) -> Self
    where
        F: Fn(&mut Graph, &[Var]) -> Result<Var> + Send + Sync + 'static,
    {
        Self::new(name, inputs, move |g, v| {
            let out = build(g, v)?;
            random_projection(g, out, seed)
        })
    }

    /// Module case: differentiates w.r.t. `xs` and every tensor of `store`,
    /// which is rebound by name from the graph inputs.
    pub fn module<F>(
        name: impl Into<String>,
        xs: Vec<Tensor>,
        store: &ParamStore,
        seed: u64,
        forward: F,
    ) -> Self
    where
        F: Fn(&mut Graph, &Bound, &[Var]) -> Result<Var> + Send + Sync + 'static,
    {
        let n = xs.len();
        let names: Vec<String> = store.names().cloned().collect();
        let mut inputs = xs;
        inputs.extend(store.iter().map(|(_, t)| t.clone()));
        Self::projected(name, inputs, seed, move |g, v| {
            let bound = Bound::from_pairs(names.iter().cloned().zip(v[n..].iter().copied()));
            forward(g, &bound, &v[..n])
        })
    }

    pub fn run(&self, samples_per_input: usize, seed: u64) -> Result<GradCheckReport> {
        check_gradients(
            &self.inputs,
            |g, v| (self.build)(g, v),
            samples_per_input,
            seed,
        )
    }
}

fn away_from_zero(t: Tensor) -> Tensor {
    t.map(|v| v + 0.2 * v.signum())
}

/// One case per differentiable tape operation.
pub fn op_cases(seed: u64) -> Vec<GradCase> {
    let s = Stream::new(seed);
    let r = |label: &str, shape: &[usize]| s.child(label).uniform_tensor(shape, -1.0, 1.0);
    let pos = |label: &str, shape: &[usize]| s.child(label).uniform_tensor(shape, 0.5, 2.0);
    let k = rng::derive(seed, "projection");
    let flow = s.child("flow").uniform_tensor(&[2, 5, 6], -2.5, 2.5);
    vec![
        GradCase::projected("add", vec![r("a", &[3, 4]), r("b", &[3, 4])], k, |g, v| {
            g.add(v[0], v[1])
        }),
        GradCase::projected("sub", vec![r("a", &[3, 4]), r("b", &[3, 4])], k, |g, v| {
            g.sub(v[0], v[1])
        }),
        GradCase::projected("mul", vec![r("a", &[3, 4]), r("b", &[3, 4])], k, |g, v| {
            g.mul(v[0], v[1])
        }),
        GradCase::projected(
            "div",
            vec![r("a", &[3, 4]), pos("b", &[3, 4])],
            k,
            |g, v| g.div(v[0], v[1]),
        ),
        GradCase::projected("add_scalar", vec![r("a", &[5])], k, |g, v| {
            Ok(g.add_scalar(v[0], 0.7))
        }),
        GradCase::projected("mul_scalar", vec![r("a", &[5])], k, |g, v| {
            Ok(g.mul_scalar(v[0], -1.3))
        }),
        GradCase::projected("sqrt", vec![pos("a", &[2, 5])], k, |g, v| Ok(g.sqrt(v[0]))),
        GradCase::projected("sigmoid", vec![r("a", &[2, 5])], k, |g, v| {
            Ok(g.sigmoid(v[0]))
        }),
        GradCase::projected("gelu", vec![r("a", &[2, 5]).map(|x| 3.0 * x)], k, |g, v| {
            Ok(g.gelu(v[0]))
        }),
        GradCase::projected(
            "leaky_relu",
            vec![away_from_zero(r("a", &[2, 5]))],
            k,
            |g, v| Ok(g.leaky_relu(v[0], 0.1)),
        ),
        GradCase::projected(
            "matmul",
            vec![r("a", &[3, 4]), r("b", &[4, 2])],
            k,
            |g, v| g.matmul(v[0], v[1]),
        ),
        GradCase::projected(
            "matmul_batched",
            vec![r("a", &[2, 3, 4]), r("b", &[2, 4, 5])],
            k,
            |g, v| g.matmul(v[0], v[1]),
        ),
        GradCase::projected("transpose", vec![r("a", &[2, 3, 4])], k, |g, v| {
            g.transpose(v[0])
        }),
        GradCase::projected(
            "softmax",
            vec![r("a", &[2, 4, 3]).map(|x| 2.0 * x)],
            k,
            |g, v| g.softmax(v[0], 1),
        ),
        GradCase::projected("reshape", vec![r("a", &[2, 6])], k, |g, v| {
            g.reshape(v[0], &[3, 2, 2])
        }),
        GradCase::projected(
            "conv2d",
            vec![r("x", &[4, 7, 6]), r("w", &[6, 2, 3, 3]), r("b", &[6])],
            k,
            |g, v| g.conv2d(v[0], v[1], Some(v[2]), ConvSpec::new(2, 1, 2)),
        ),
        GradCase::projected(
            "conv2d_depthwise",
            vec![r("x", &[3, 5, 5]), r("w", &[6, 1, 3, 3])],
            k,
            |g, v| g.conv2d(v[0], v[1], None, ConvSpec::new(1, 1, 3)),
        ),
        GradCase::projected(
            "layer_norm",
            vec![r("x", &[5, 3, 4]), r("gamma", &[5]), r("beta", &[5])],
            k,
            |g, v| g.layer_norm(v[0], v[1], v[2], crate::nn::LN_EPS),
        ),
        GradCase::projected("bilinear_warp", vec![r("x", &[3, 5, 6])], k, move |g, v| {
            g.warp(v[0], &flow)
        }),
        GradCase::projected("pixel_shuffle", vec![r("x", &[8, 2, 3])], k, |g, v| {
            g.pixel_shuffle(v[0], 2)
        }),
        GradCase::projected("pixel_unshuffle", vec![r("x", &[2, 4, 6])], k, |g, v| {
            g.pixel_unshuffle(v[0], 2)
        }),
        GradCase::projected(
            "concat",
            vec![r("a", &[2, 3, 3]), r("b", &[1, 3, 3])],
            k,
            |g, v| g.concat(&[v[0], v[1]]),
        ),
        GradCase::projected("slice", vec![r("a", &[5, 2, 2])], k, |g, v| {
            g.slice(v[0], 1, 3)
        }),
        GradCase::projected(
            "mul_channels",
            vec![r("x", &[3, 2, 4]), r("w", &[3, 1])],
            k,
            |g, v| g.mul_channels(v[0], v[1]),
        ),
        GradCase::projected(
            "div_batch",
            vec![r("x", &[2, 3, 3]), pos("s", &[2])],
            k,
            |g, v| g.div_batch(v[0], v[1]),
        ),
        GradCase::projected("l2_normalize", vec![r("x", &[3, 6])], k, |g, v| {
            Ok(g.l2_normalize(v[0], 1e-12))
        }),
        GradCase::projected("max_last", vec![r("x", &[4, 5])], k, |g, v| {
            Ok(g.max_last(v[0]))
        }),
        GradCase::new("sum", vec![r("x", &[3, 4])], |g, v| Ok(g.sum(v[0]))),
        GradCase::new("mean", vec![r("x", &[3, 4])], |g, v| Ok(g.mean(v[0]))),
        GradCase::projected("window_partition", vec![r("x", &[2, 4, 6])], k, |g, v| {
            g.window_partition(v[0], 2)
        }),
        GradCase::projected("window_merge", vec![r("x", &[6, 2, 4])], k, |g, v| {
            g.window_merge(v[0], 2, 4, 6)
        }),
        GradCase::projected("pad_reflect", vec![r("x", &[2, 3, 4])], k, |g, v| {
            g.pad_reflect(v[0], 2, 1)
        }),
        GradCase::projected("crop", vec![r("x", &[2, 5, 5])], k, |g, v| {
            g.crop(v[0], 3, 4)
        }),
    ]
}

/// Cases for the attention blocks, differentiated w.r.t. inputs and all parameters.
pub fn attention_cases(seed: u64) -> Result<Vec<GradCase>> {
    use crate::attention::*;
    use crate::nn::ParamBuilder;

    let s = Stream::new(seed);
    let r = |label: &str, shape: &[usize]| s.child(label).uniform_tensor(shape, -1.0, 1.0);
    let k = rng::derive(seed, "projection");
    let mut cases = Vec::new();

    let cfg = AttentionConfig {
        heads: 2,
        dim: 4,
        key_dim: 4,
        proj_dim: 4,
        window: 2,
        ..Default::default()
    };
    let mut store = ParamStore::new();
    let sa = SpatialWindowAttention::new(&mut ParamBuilder::new(&mut store, seed), "sa", &cfg)?;
    cases.push(GradCase::module(
        "spatial_attention",
        vec![r("x", &[4, 5, 4]), r("y", &[4, 5, 4])],
        &store,
        k,
        move |g, p, v| Ok(sa.forward(g, p, v[0], v[1])?.features),
    ));

    let mut store = ParamStore::new();
    let ca = ChannelAttention::new(&mut ParamBuilder::new(&mut store, seed), "ca", &cfg)?;
    cases.push(GradCase::module(
        "channel_attention",
        vec![r("x", &[4, 4, 4]), r("y", &[4, 4, 4])],
        &store,
        k,
        move |g, p, v| Ok(ca.forward(g, p, v[0], v[1])?.features),
    ));

    let ica_cfg = AttentionConfig {
        heads: 2,
        dim: 8,
        key_dim: 8,
        squeeze_ratio: 2,
        ..Default::default()
    };
    let mut store = ParamStore::new();
    let ica =
        ImprovedChannelAttention::new(&mut ParamBuilder::new(&mut store, seed), "ica", &ica_cfg)?;
    // The zero-initialized rescale head would leave its first layer without gradient.
    let fc2 = ica.rescale.fc2.weight.clone();
    *store.get_mut(&fc2)? = s
        .child("fc2")
        .uniform_tensor(&[1, RESCALE_HIDDEN], -1.0, 1.0);
    cases.push(GradCase::module(
        "ica",
        vec![r("x", &[8, 4, 4])],
        &store,
        k,
        move |g, p, v| Ok(ica.forward(g, p, v[0])?.output),
    ));

    let mut store = ParamStore::new();
    let caf = ChannelAttentionFusion::new(&mut ParamBuilder::new(&mut store, seed), "caf", &cfg)?;
    cases.push(GradCase::module(
        "caf",
        vec![r("f", &[4, 4, 3]), r("h", &[4, 4, 3])],
        &store,
        k,
        move |g, p, v| caf.forward(g, p, v[0], v[1]),
    ));

    let mut store = ParamStore::new();
    let ffn = GatedFeedForward::new(&mut ParamBuilder::new(&mut store, seed), "ffn", 3);
    cases.push(GradCase::module(
        "gdfn",
        vec![r("x", &[3, 4, 4])],
        &store,
        k,
        move |g, p, v| ffn.forward(g, p, v[0]),
    ));
    Ok(cases)
}

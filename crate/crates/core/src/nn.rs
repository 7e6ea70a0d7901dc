//! Named parameter storage and the small set of layers the models are built from.
//!
//! Layers hold only names and hyper-parameters. Tensors live in a
//! [`ParamStore`]; for a forward pass the store is bound onto a [`Graph`] and
//! layers resolve their parameters by name.

use std::collections::BTreeMap;

use crate::autodiff::{Gradients, Graph, Var};
use crate::error::{Error, Result};
use crate::kernels::ConvSpec;
use crate::rng::{self, Stream};
use crate::tensor::Tensor;

pub const LN_EPS: f64 = 1e-6;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, mut t: Tensor) {
        t.round_to_f32();
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total scalar parameter count.
    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    /// Registers every tensor on the graph, as trainable leaves or as constants.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|(k, t)| (k.clone(), g.leaf(t.clone(), trainable)))
            .collect();
        Bound { vars }
    }
}

/// Parameter handles on one graph.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, Var)>) -> Self {
        Bound {
            vars: pairs.into_iter().collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    /// Gradients keyed by parameter name; parameters that did not reach the loss get zeros.
    pub fn collect_grads(
        &self,
        grads: &Gradients,
        store: &ParamStore,
    ) -> Result<BTreeMap<String, Tensor>> {
        self.vars
            .iter()
            .map(|(name, v)| Ok((name.clone(), grads.get_or_zeros(*v, store.get(name)?))))
            .collect()
    }
}

/// Creates parameters under a dotted prefix with deterministic, name-keyed initialization.
pub struct ParamBuilder<'a> {
    store: &'a mut ParamStore,
    prefix: String,
    seed: u64,
}

impl<'a> ParamBuilder<'a> {
    pub fn new(store: &'a mut ParamStore, seed: u64) -> Self {
        ParamBuilder {
            store,
            prefix: String::new(),
            seed,
        }
    }

    pub fn pp(&mut self, name: &str) -> ParamBuilder<'_> {
        let prefix = self.path(name);
        ParamBuilder {
            store: self.store,
            prefix,
            seed: self.seed,
        }
    }

    pub fn path(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        }
    }

    fn stream(&self, full: &str) -> Stream {
        Stream::new(rng::derive(self.seed, full))
    }

    /// Kaiming-uniform with `a = √5`: `U(−1/√fan_in, 1/√fan_in)`.
    pub fn kaiming(&mut self, name: &str, shape: &[usize], fan_in: usize) -> String {
        let full = self.path(name);
        let bound = 1.0 / (fan_in as f64).sqrt();
        let s = self.stream(&full);
        let t = Tensor::from_fn(shape, |i| s.uniform_range(i as u64, -bound, bound));
        self.store.insert(full.clone(), t);
        full
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> String {
        let full = self.path(name);
        self.store.insert(full.clone(), Tensor::full(shape, value));
        full
    }
}

/// Seeded matrix with orthonormal rows, reshaped to `shape` (rows = `shape[0]`).
/// With more rows than columns, each consecutive group of `cols` rows is orthonormal.
pub fn orthogonal(shape: &[usize], seed: u64) -> Tensor {
    let rows = shape[0];
    let cols: usize = shape[1..].iter().product();
    let s = Stream::new(seed);
    let mut out: Vec<f64> = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let mut v: Vec<f64> = (0..cols).map(|j| s.normal((r * cols + j) as u64)).collect();
        let group = r - r % cols;
        // Modified Gram-Schmidt against earlier rows of the same group.
        for q in out[group * cols..].chunks(cols) {
            let d: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        out.extend(v.iter().map(|a| a / norm));
    }
    Tensor::new(shape, out).expect("length matches shape")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    pub weight: String,
    pub bias: Option<String>,
    pub spec: ConvSpec,
}

impl Conv2d {
    /// `k×k` convolution `cin → cout` with same padding.
    pub fn new(
        pb: &mut ParamBuilder,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        bias: bool,
    ) -> Self {
        Self::with_spec(pb, name, cin, cout, k, bias, ConvSpec::same(k))
    }

    pub fn with_spec(
        pb: &mut ParamBuilder,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        bias: bool,
        spec: ConvSpec,
    ) -> Self {
        let mut pb = pb.pp(name);
        let icg = cin / spec.groups;
        let weight = pb.kaiming("weight", &[cout, icg, k, k], icg * k * k);
        let bias = bias.then(|| pb.constant("bias", &[cout], 0.0));
        Conv2d { weight, bias, spec }
    }

    /// Depth-wise `k×k` convolution, `cin → cin * multiplier`.
    pub fn depthwise(
        pb: &mut ParamBuilder,
        name: &str,
        cin: usize,
        multiplier: usize,
        k: usize,
        bias: bool,
    ) -> Self {
        Self::with_spec(
            pb,
            name,
            cin,
            cin * multiplier,
            k,
            bias,
            ConvSpec::new(1, k / 2, cin),
        )
    }

    /// Zeroes the kernel and bias of an already-registered conv.
    pub fn zero_init(&self, store: &mut ParamStore) -> Result<()> {
        store.get_mut(&self.weight)?.data_mut().fill(0.0);
        if let Some(b) = &self.bias {
            store.get_mut(b)?.data_mut().fill(0.0);
        }
        Ok(())
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let w = p.get(&self.weight)?;
        let b = self.bias.as_deref().map(|b| p.get(b)).transpose()?;
        g.conv2d(x, w, b, self.spec)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm {
    pub weight: String,
    pub bias: String,
}

impl LayerNorm {
    pub fn new(pb: &mut ParamBuilder, name: &str, channels: usize) -> Self {
        let mut pb = pb.pp(name);
        LayerNorm {
            weight: pb.constant("weight", &[channels], 1.0),
            bias: pb.constant("bias", &[channels], 0.0),
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        g.layer_norm(x, p.get(&self.weight)?, p.get(&self.bias)?, LN_EPS)
    }
}

/// Fully connected layer applied independently to each row of an `N×in` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: String,
    pub bias: String,
    pub fan_in: usize,
}

impl Linear {
    pub fn new(pb: &mut ParamBuilder, name: &str, fan_in: usize, fan_out: usize) -> Self {
        let mut pb = pb.pp(name);
        Linear {
            weight: pb.kaiming("weight", &[fan_out, fan_in], fan_in),
            bias: pb.constant("bias", &[fan_out], 0.0),
            fan_in,
        }
    }

    /// Same layout as [`Linear::new`] with weight and bias at zero.
    pub fn zeroed(pb: &mut ParamBuilder, name: &str, fan_in: usize, fan_out: usize) -> Self {
        let mut pb = pb.pp(name);
        Linear {
            weight: pb.constant("weight", &[fan_out, fan_in], 0.0),
            bias: pb.constant("bias", &[fan_out], 0.0),
            fan_in,
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let [n, fin] = g.shape(x)[..] else {
            return Err(Error::dim("linear", g.shape(x), &[0, self.fan_in]));
        };
        if fin != self.fan_in {
            return Err(Error::dim("linear", g.shape(x), &[n, self.fan_in]));
        }
        // Rows become pixels of a 1×1 convolution: in×N×1 → out×N×1.
        let w = p.get(&self.weight)?;
        let fout = g.shape(w)[0];
        let w4 = g.reshape(w, &[fout, fin, 1, 1])?;
        let xt = g.transpose(x)?;
        let xt = g.reshape(xt, &[fin, n, 1])?;
        let y = g.conv2d(xt, w4, Some(p.get(&self.bias)?), ConvSpec::new(1, 0, 1))?;
        let y = g.reshape(y, &[fout, n])?;
        g.transpose(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_rows_are_orthonormal() {
        let t = orthogonal(&[12, 6, 1, 1], 3);
        let d = t.data();
        for a in 0..12 {
            for b in 0..12 {
                if a / 6 != b / 6 {
                    continue;
                }
                let dot: f64 = (0..6).map(|j| d[a * 6 + j] * d[b * 6 + j]).sum();
                assert!((dot - if a == b { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn init_is_keyed_by_name_not_order() {
        let mut a = ParamStore::new();
        let mut b = ParamStore::new();
        {
            let mut pa = ParamBuilder::new(&mut a, 5);
            pa.kaiming("x", &[4], 4);
            pa.kaiming("y", &[4], 4);
        }
        {
            let mut pb = ParamBuilder::new(&mut b, 5);
            pb.kaiming("y", &[4], 4);
            pb.kaiming("x", &[4], 4);
        }
        assert_eq!(a, b);
    }

    #[test]
    fn kaiming_bound_and_f32_grid() {
        let mut s = ParamStore::new();
        let name = ParamBuilder::new(&mut s, 1)
            .pp("conv")
            .kaiming("weight", &[8, 4, 3, 3], 36);
        let t = s.get(&name).unwrap();
        assert_eq!(name, "conv.weight");
        assert!(t.max_abs() <= 1.0 / 6.0);
        assert!(t.data().iter().all(|&v| v == v as f32 as f64));
    }

    #[test]
    fn linear_matches_manual_product() {
        let mut s = ParamStore::new();
        let lin = Linear::new(&mut ParamBuilder::new(&mut s, 2), "fc", 2, 3);
        s.get_mut(&lin.bias)
            .unwrap()
            .data_mut()
            .copy_from_slice(&[0.5, -1.0, 0.25]);
        let mut g = Graph::new();
        let p = s.bind(&mut g, false);
        let x = g.constant(Tensor::new(&[2, 2], vec![1.0, 2.0, -3.0, 0.5]).unwrap());
        let y = lin.forward(&mut g, &p, x).unwrap();
        let w = s.get(&lin.weight).unwrap().data();
        let b = s.get(&lin.bias).unwrap().data();
        let xv = g.value(x).data();
        for r in 0..2 {
            for o in 0..3 {
                let want = w[o * 2] * xv[r * 2] + w[o * 2 + 1] * xv[r * 2 + 1] + b[o];
                assert!((g.value(y).data()[r * 3 + o] - want).abs() < 1e-12);
            }
        }
    }
}

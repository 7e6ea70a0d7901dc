#![allow(dead_code)]

pub mod oracles;

use rvf_core::nn::ParamStore;
use rvf_core::rng::Stream;
use rvf_core::Tensor;

use oracles::Img;

pub fn rand(shape: &[usize], seed: u64) -> Tensor {
    Stream::new(seed).uniform_tensor(shape, -1.0, 1.0)
}

pub fn img(t: &Tensor) -> Img {
    let (c, h, w) = t.chw().unwrap();
    Img::new(c, h, w, t.data().to_vec())
}

pub fn param(store: &ParamStore, name: &str) -> Vec<f64> {
    store
        .get(name)
        .unwrap_or_else(|_| panic!("missing {name}"))
        .data()
        .to_vec()
}

/// Overwrites every parameter with random values so oracles see non-trivial
/// norms, biases and gates.
pub fn randomize(store: &mut ParamStore, seed: u64) {
    let names: Vec<String> = store.names().cloned().collect();
    for (i, name) in names.iter().enumerate() {
        let t = store.get(name).unwrap();
        let mut r = Stream::new(seed ^ (i as u64 * 7919)).uniform_tensor(t.shape(), -0.8, 0.8);
        if name.ends_with("alpha") {
            r = r.map(|v| 0.5 + v.abs());
        }
        store.insert(name.clone(), r);
    }
}

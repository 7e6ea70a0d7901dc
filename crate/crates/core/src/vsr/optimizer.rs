use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerConfig {
    /// `v ← μ v + g`, `w ← w − lr v`.
    Sgd { lr: f64, momentum: f64 },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Adam {
            lr: 2e-3,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            OptimizerConfig::Sgd { lr, momentum } => lr > 0.0 && (0.0..1.0).contains(&momentum),
            OptimizerConfig::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => {
                lr > 0.0 && (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid optimizer settings {self:?}"
            )))
        }
    }
}

#[derive(Clone, Debug)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    first: BTreeMap<String, Tensor>,
    second: BTreeMap<String, Tensor>,
    steps: u64,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Optimizer {
            cfg,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
            steps: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update. Parameters are kept on the `f32` grid.
    pub fn step(&mut self, store: &mut ParamStore, grads: &BTreeMap<String, Tensor>) -> Result<()> {
        self.steps += 1;
        let t = self.steps as i32;
        for (name, g) in grads {
            let w = store.get_mut(name)?;
            if w.shape() != g.shape() {
                return Err(Error::dim("optimizer", w.shape(), g.shape()));
            }
            let m = self
                .first
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(g.shape()));
            match self.cfg {
                OptimizerConfig::Sgd { lr, momentum } => {
                    for ((wi, mi), gi) in w.data_mut().iter_mut().zip(m.data_mut()).zip(g.data()) {
                        *mi = momentum * *mi + gi;
                        *wi -= lr * *mi;
                    }
                }
                OptimizerConfig::Adam {
                    lr,
                    beta1,
                    beta2,
                    eps,
                } => {
                    let v = self
                        .second
                        .entry(name.clone())
                        .or_insert_with(|| Tensor::zeros(g.shape()));
                    let (c1, c2) = (1.0 - beta1.powi(t), 1.0 - beta2.powi(t));
                    let it = w
                        .data_mut()
                        .iter_mut()
                        .zip(m.data_mut())
                        .zip(v.data_mut())
                        .zip(g.data());
                    for (((wi, mi), vi), gi) in it {
                        *mi = beta1 * *mi + (1.0 - beta1) * gi;
                        *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                        *wi -= lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
                    }
                }
            }
            w.round_to_f32();
        }
        Ok(())
    }
}

/// Scales all gradients so their joint L2 norm is at most `max_norm`; returns the original norm.
pub fn clip_grad_norm(grads: &mut BTreeMap<String, Tensor>, max_norm: f64) -> f64 {
    let norm = grads
        .values()
        .flat_map(|t| t.data().iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        for t in grads.values_mut() {
            t.data_mut().iter_mut().for_each(|v| *v *= k);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic_step(cfg: OptimizerConfig, w0: f64, steps: usize) -> f64 {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::scalar(w0));
        let mut opt = Optimizer::new(cfg).unwrap();
        for _ in 0..steps {
            let w = store.get("w").unwrap().data()[0];
            let grads = BTreeMap::from([("w".to_string(), Tensor::scalar(w - 3.0))]);
            opt.step(&mut store, &grads).unwrap();
        }
        store.get("w").unwrap().data()[0]
    }

    #[test]
    fn sgd_single_step_closed_form() {
        let w = quadratic_step(
            OptimizerConfig::Sgd {
                lr: 0.1,
                momentum: 0.0,
            },
            0.0,
            1,
        );
        assert!((w - 0.3).abs() < 1e-7);
    }

    #[test]
    fn momentum_and_adam_converge_on_quadratic() {
        let w = quadratic_step(
            OptimizerConfig::Sgd {
                lr: 0.1,
                momentum: 0.5,
            },
            0.0,
            200,
        );
        assert!((w - 3.0).abs() < 1e-5);
        let adam = OptimizerConfig::Adam {
            lr: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        };
        let w = quadratic_step(adam, 0.0, 2000);
        assert!((w - 3.0).abs() < 1e-2);
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let adam = OptimizerConfig::Adam {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-12,
        };
        assert!((quadratic_step(adam, 0.0, 1) - 0.01).abs() < 1e-7);
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut g = BTreeMap::from([("a".to_string(), Tensor::new(&[2], vec![3.0, 4.0]).unwrap())]);
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g["a"].data()[0] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn invalid_settings_are_rejected() {
        assert!(Optimizer::new(OptimizerConfig::Sgd {
            lr: -1.0,
            momentum: 0.0
        })
        .is_err());
    }
}

use serde::{Deserialize, Serialize};

use super::model::{Gradients, Sequential};
use super::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NesterovConfig {
    pub lr: f64,
    pub momentum: f64,
}

impl Default for NesterovConfig {
    fn default() -> Self {
        Self {
            lr: 5e-3,
            momentum: 0.9,
        }
    }
}

pub trait Optimizer<T: Scalar> {
    fn step(&mut self, model: &mut Sequential<T>, grads: &Gradients<T>);
}

/// One zeroed state tensor per parameter of every trainable layer. Frozen
/// and parameterless layers get `None` and are never touched.
fn zero_state<T: Scalar>(model: &Sequential<T>) -> Vec<Option<Vec<Tensor<T>>>> {
    model
        .layers
        .iter()
        .map(|l| {
            l.is_trainable()
                .then(|| l.params.iter().map(|p| Tensor::zeros(p.shape())).collect())
        })
        .collect()
}

pub struct Adam<T> {
    cfg: AdamConfig,
    t: i32,
    m: Vec<Option<Vec<Tensor<T>>>>,
    v: Vec<Option<Vec<Tensor<T>>>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(model: &Sequential<T>, cfg: AdamConfig) -> Self {
        Self {
            cfg,
            t: 0,
            m: zero_state(model),
            v: zero_state(model),
        }
    }
}

impl<T: Scalar> Optimizer<T> for Adam<T> {
    fn step(&mut self, model: &mut Sequential<T>, grads: &Gradients<T>) {
        self.t += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t);
        let bc2 = 1.0 - c.beta2.powi(self.t);
        let (b1, b2) = (T::from_f64_lossy(c.beta1), T::from_f64_lossy(c.beta2));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let step = T::from_f64_lossy(c.lr / bc1);
        let inv_sqrt_bc2 = T::from_f64_lossy(1.0 / bc2.sqrt());
        let eps = T::from_f64_lossy(c.eps);
        for (i, layer) in model.layers.iter_mut().enumerate() {
            let (Some(ms), Some(vs), Some(gs)) =
                (self.m[i].as_mut(), self.v[i].as_mut(), grads.get(i))
            else {
                continue;
            };
            if layer.frozen {
                continue;
            }
            for (((p, m), v), g) in layer.params.iter_mut().zip(ms).zip(vs).zip(gs) {
                for (((p, m), v), &g) in p
                    .data_mut()
                    .iter_mut()
                    .zip(m.data_mut())
                    .zip(v.data_mut())
                    .zip(g.data())
                {
                    *m = b1 * *m + one_b1 * g;
                    *v = b2 * *v + one_b2 * g * g;
                    *p = *p - step * *m / (v.sqrt() * inv_sqrt_bc2 + eps);
                }
            }
        }
    }
}

/// SGD with Nesterov momentum in lookahead form:
/// `v <- mu*v - lr*g; theta <- theta + mu*v - lr*g`.
pub struct SgdNesterov<T> {
    cfg: NesterovConfig,
    velocity: Vec<Option<Vec<Tensor<T>>>>,
}

impl<T: Scalar> SgdNesterov<T> {
    pub fn new(model: &Sequential<T>, cfg: NesterovConfig) -> Self {
        Self {
            cfg,
            velocity: zero_state(model),
        }
    }
}

impl<T: Scalar> Optimizer<T> for SgdNesterov<T> {
    fn step(&mut self, model: &mut Sequential<T>, grads: &Gradients<T>) {
        let mu = T::from_f64_lossy(self.cfg.momentum);
        let lr = T::from_f64_lossy(self.cfg.lr);
        for (i, layer) in model.layers.iter_mut().enumerate() {
            let (Some(vs), Some(gs)) = (self.velocity[i].as_mut(), grads.get(i)) else {
                continue;
            };
            if layer.frozen {
                continue;
            }
            for ((p, v), g) in layer.params.iter_mut().zip(vs).zip(gs) {
                for ((p, v), &g) in p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                    *v = mu * *v - lr * g;
                    *p = *p + mu * *v - lr * g;
                }
            }
        }
    }
}

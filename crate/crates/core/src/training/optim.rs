use serde::{Deserialize, Serialize};

use crate::model::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

/// Per-parameter optimizer state.
pub(crate) struct OptimizerState<T> {
    kind: Optimizer,
    lr: f64,
    step: i32,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(kind: Optimizer, lr: f64, params: &[Tensor<T>]) -> Self {
        let zeros = || params.iter().map(|p| vec![T::zero(); p.data.len()]).collect();
        OptimizerState { kind, lr, step: 0, m: zeros(), v: zeros() }
    }

    pub fn apply(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>]) {
        self.step += 1;
        let c = |x: f64| T::from_f64(x).unwrap();
        match self.kind {
            Optimizer::Sgd => {
                let lr = c(self.lr);
                for (p, g) in params.iter_mut().zip(grads) {
                    for (w, &d) in p.data.iter_mut().zip(&g.data) {
                        *w -= lr * d;
                    }
                }
            }
            Optimizer::Adam => {
                let (b1, b2) = (c(BETA1), c(BETA2));
                let bc1 = c(1.0 - BETA1.powi(self.step));
                let bc2 = c(1.0 - BETA2.powi(self.step));
                let (lr, eps) = (c(self.lr), c(EPSILON));
                for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    for (j, (w, &d)) in p.data.iter_mut().zip(&g.data).enumerate() {
                        let m = &mut self.m[i][j];
                        let v = &mut self.v[i][j];
                        *m = b1 * *m + (T::one() - b1) * d;
                        *v = b2 * *v + (T::one() - b2) * d * d;
                        *w -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
                    }
                }
            }
        }
    }
}

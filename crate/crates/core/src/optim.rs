//! Adaptive-moment optimizer over the parameters of one network.

use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::networks::{Mlp, MlpGrads};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.5,
            beta2: 0.9,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step: i32,
    m: MlpGrads,
    v: MlpGrads,
}

fn update2(p: &mut Array2<f64>, g: &Array2<f64>, m: &mut Array2<f64>, v: &mut Array2<f64>, k: &Coefs) {
    Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| k.apply(p, g, m, v));
}

fn update1(p: &mut Array1<f64>, g: &Array1<f64>, m: &mut Array1<f64>, v: &mut Array1<f64>, k: &Coefs) {
    Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| k.apply(p, g, m, v));
}

struct Coefs {
    beta1: f64,
    beta2: f64,
    step_size: f64,
    bias2: f64,
    epsilon: f64,
}

impl Coefs {
    #[inline]
    fn apply(&self, p: &mut f64, g: f64, m: &mut f64, v: &mut f64) {
        *m = self.beta1 * *m + (1.0 - self.beta1) * g;
        *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
        *p -= self.step_size * *m / ((*v / self.bias2).sqrt() + self.epsilon);
    }
}

impl Adam {
    pub fn new(net: &Mlp, config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: MlpGrads::zeros(&net.shape),
            v: MlpGrads::zeros(&net.shape),
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &MlpGrads) {
        self.step += 1;
        let c = &self.config;
        let coefs = Coefs {
            beta1: c.beta1,
            beta2: c.beta2,
            step_size: c.learning_rate / (1.0 - c.beta1.powi(self.step)),
            bias2: 1.0 - c.beta2.powi(self.step),
            epsilon: c.epsilon,
        };
        update2(&mut net.w1, &grads.w1, &mut self.m.w1, &mut self.v.w1, &coefs);
        update1(&mut net.b1, &grads.b1, &mut self.m.b1, &mut self.v.b1, &coefs);
        update2(&mut net.w2, &grads.w2, &mut self.m.w2, &mut self.v.w2, &coefs);
        update1(&mut net.b2, &grads.b2, &mut self.m.b2, &mut self.v.b2, &coefs);
    }
}

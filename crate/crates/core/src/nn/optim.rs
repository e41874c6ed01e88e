use serde::{Deserialize, Serialize};

use super::graph::Mat;
use super::params::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
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

/// Adam with bias-corrected moments. Reads the store's accumulated gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Mat>,
    v: Vec<Mat>,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros: Vec<Mat> = store.iter().map(|(_, p)| Mat::zeros(p.value.dim())).collect();
        Self {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, store: &mut ParamStore) {
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let ids: Vec<_> = store.ids().collect();
        for (k, id) in ids.into_iter().enumerate() {
            let grad = store.grad(id).clone();
            let m = &mut self.m[k];
            let v = &mut self.v[k];
            ndarray::Zip::from(&mut *m)
                .and(&mut *v)
                .and(&grad)
                .for_each(|m, v, &g| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                });
            ndarray::Zip::from(store.value_mut(id))
                .and(&*m)
                .and(&*v)
                .for_each(|p, &m, &v| {
                    let m_hat = m / bc1;
                    let v_hat = v / bc2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::Gradients;
    use ndarray::array;

    fn store_with_grad(value: Mat, grad: Mat) -> ParamStore {
        let mut s = ParamStore::default();
        let id = s.add("p", value);
        let mut g = Gradients::zeros_like(&s);
        g.accumulate(id, &grad);
        s.accumulate(&g);
        s
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = store_with_grad(array![[1.0, -2.0]], array![[0.0, 0.0]]);
        let mut adam = Adam::new(AdamConfig::default(), &s);
        for _ in 0..5 {
            adam.update(&mut s);
        }
        assert_eq!(s.value(s.find("p").unwrap()), &array![[1.0, -2.0]]);
    }

    #[test]
    fn first_step_matches_closed_form() {
        let g = array![[0.5, -3.0, 1e-3]];
        let mut s = store_with_grad(array![[0.0, 0.0, 0.0]], g.clone());
        let cfg = AdamConfig {
            lr: 0.01,
            ..AdamConfig::default()
        };
        let mut adam = Adam::new(cfg, &s);
        adam.update(&mut s);
        let id = s.find("p").unwrap();
        for (p, g) in s.value(id).iter().zip(g.iter()) {
            let want = -0.01 * g / (g.abs() + 1e-8);
            assert!((p - want).abs() < 1e-15, "{p} vs {want}");
        }
    }

    #[test]
    fn constant_gradient_descends() {
        let mut s = store_with_grad(array![[0.0, 0.0]], array![[2.0, -0.1]]);
        let mut adam = Adam::new(AdamConfig::default(), &s);
        for _ in 0..100 {
            adam.update(&mut s);
        }
        let v = s.value(s.find("p").unwrap());
        assert!(v[[0, 0]] < 0.0);
        assert!(v[[0, 1]] > 0.0);
    }
}

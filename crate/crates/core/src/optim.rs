use serde::{Deserialize, Serialize};

use crate::autodiff::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam step over every parameter in `store`, using the
/// accumulated gradients. Weight decay is decoupled: `θ ← θ − lr·wd·θ` is
/// applied before the Adam delta.
pub fn adam_step(store: &mut ParamStore, lr: f64, adam: &AdamConfig, weight_decay: f64) {
    store.step += 1;
    let t = store.step as f64;
    let bias1 = 1.0 - adam.beta1.powf(t);
    let bias2 = 1.0 - adam.beta2.powf(t);
    let decay = 1.0 - lr * weight_decay;
    for p in store.iter_mut() {
        let theta = p.value.data_mut();
        let g = p.grad.data();
        let m = p.first_moment.data_mut();
        let v = p.second_moment.data_mut();
        for i in 0..theta.len() {
            theta[i] *= decay;
            m[i] = adam.beta1 * m[i] + (1.0 - adam.beta1) * g[i];
            v[i] = adam.beta2 * v[i] + (1.0 - adam.beta2) * g[i] * g[i];
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            theta[i] -= lr * m_hat / (v_hat.sqrt() + adam.eps);
        }
    }
}

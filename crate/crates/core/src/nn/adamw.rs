use ndarray::{ArrayD, Zip};
use serde::{Deserialize, Serialize};

use super::params::{Grads, NetworkParams};
use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay, applied to weights only.
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub config: AdamWConfig,
    pub step: u64,
    pub m: Vec<ArrayD<f64>>,
    pub v: Vec<ArrayD<f64>>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, params: &NetworkParams) -> Self {
        let zeros = params.zeros_like().0;
        Self {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Moments must shape-match the parameters (used after loading).
    pub fn check(&self, params: &NetworkParams) -> Result<(), NnError> {
        for (i, p) in params.params().iter().enumerate() {
            for (what, t) in [("first moment", self.m.get(i)), ("second moment", self.v.get(i))] {
                let found = t.map(|t| t.shape().to_vec()).unwrap_or_default();
                if found != p.value.shape() {
                    return Err(NnError::LayerShape {
                        layer: format!("{} ({what})", p.name),
                        expected: p.value.shape().to_vec(),
                        found,
                    });
                }
            }
        }
        if self.m.len() != params.len() || self.v.len() != params.len() {
            return Err(NnError::Shape {
                what: "optimizer moment count".into(),
                expected: params.len(),
                found: self.m.len(),
            });
        }
        Ok(())
    }

    /// `θ ← θ − lr·m̂/(√v̂ + ε) − lr·decay·θ` with bias-corrected moments.
    pub fn step(&mut self, params: &mut NetworkParams, grads: &Grads) {
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for (i, p) in params.params_mut().iter_mut().enumerate() {
            let decay = if p.decay { c.weight_decay } else { 0.0 };
            Zip::from(&mut p.value)
                .and(&mut self.m[i])
                .and(&mut self.v[i])
                .and(&grads.0[i])
                .for_each(|th, m, v, &g| {
                    *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                    *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                    let mh = *m / bc1;
                    let vh = *v / bc2;
                    *th = *th - c.lr * mh / (vh.sqrt() + c.eps) - c.lr * decay * *th;
                });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Param;
    use ndarray::IxDyn;

    fn single(v: f64, decay: bool) -> NetworkParams {
        NetworkParams::new(vec![Param {
            name: "w".into(),
            value: ArrayD::from_elem(IxDyn(&[1]), v),
            decay,
        }])
    }

    #[test]
    fn first_step_hand_value() {
        let mut p = single(1.0, true);
        let mut opt = AdamW::new(AdamWConfig::default(), &p);
        opt.step(&mut p, &Grads(vec![ArrayD::from_elem(IxDyn(&[1]), 1.0)]));
        let expected = 1.0 - 1e-3 * 1.0 / (1.0 + 1e-8) - 1e-3 * 1e-5 * 1.0;
        assert!((p.params()[0].value[[0]] - expected).abs() < 1e-15);
        assert!((p.params()[0].value[[0]] - 0.99899999).abs() < 1e-8);
    }

    #[test]
    fn zero_grad_zero_decay_noop() {
        let mut p = single(0.7, true);
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut opt = AdamW::new(cfg, &p);
        for _ in 0..5 {
            opt.step(&mut p, &Grads(vec![ArrayD::zeros(IxDyn(&[1]))]));
        }
        assert_eq!(p.params()[0].value[[0]], 0.7);
    }

    #[test]
    fn bias_excluded_from_decay() {
        let mut p = single(2.0, false);
        let mut opt = AdamW::new(AdamWConfig::default(), &p);
        opt.step(&mut p, &Grads(vec![ArrayD::zeros(IxDyn(&[1]))]));
        assert_eq!(p.params()[0].value[[0]], 2.0);
    }
}

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use super::params::{Grads, NetworkParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AeLossWeights {
    pub latent: f64,
    pub weight_decay: f64,
}

impl Default for AeLossWeights {
    fn default() -> Self {
        Self {
            latent: 5e-7,
            weight_decay: 5e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AeLoss {
    pub value: f64,
    /// Mean absolute coordinate error alone.
    pub l1: f64,
    pub grad_recon: Array2<f64>,
    pub grad_latent: Array1<f64>,
    /// Gradient of the weight penalty; biases get zeros.
    pub grad_params: Grads,
}

/// Mean absolute error over all coordinates and its subgradient (0 at ties).
pub fn l1_mean(pred: &ArrayView2<f64>, target: &ArrayView2<f64>) -> (f64, Array2<f64>) {
    let n = pred.len().max(1) as f64;
    let mut grad = Array2::zeros(pred.raw_dim());
    let mut total = 0.0;
    Zip::from(&mut grad).and(pred).and(target).for_each(|g, &p, &t| {
        let d = p - t;
        total += d.abs();
        *g = if d > 0.0 {
            1.0 / n
        } else if d < 0.0 {
            -1.0 / n
        } else {
            0.0
        };
    });
    (total / n, grad)
}

/// `mean|recon - target| + λ_latent·‖z‖² + λ_wd·Σ‖W‖²`.
pub fn ae_loss(
    recon: &ArrayView2<f64>,
    target: &ArrayView2<f64>,
    latent: &ArrayView1<f64>,
    params: &NetworkParams,
    weights: AeLossWeights,
) -> AeLoss {
    let (l1, grad_recon) = l1_mean(recon, target);
    let zz = latent.dot(latent);
    let mut grad_params = params.zeros_like();
    for (g, p) in grad_params.0.iter_mut().zip(params.params()) {
        if p.decay {
            *g = &p.value * (2.0 * weights.weight_decay);
        }
    }
    AeLoss {
        value: l1 + weights.latent * zz + weights.weight_decay * params.weight_sq_norm(),
        l1,
        grad_recon,
        grad_latent: latent * (2.0 * weights.latent),
        grad_params,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_everything_zero_loss() {
        let x = Array2::<f64>::ones((5, 3));
        let p = NetworkParams::new(vec![]);
        let l = ae_loss(
            &x.view(),
            &x.view(),
            &Array1::zeros(4).view(),
            &p,
            AeLossWeights::default(),
        );
        assert_eq!(l.value, 0.0);
        assert!(l.grad_recon.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_coordinate_off_by_two() {
        let v = 7;
        let t = Array2::<f64>::zeros((v, 3));
        let mut r = t.clone();
        r[[3, 1]] = 2.0;
        let (l1, _) = l1_mean(&r.view(), &t.view());
        assert!((l1 - 2.0 / (3.0 * v as f64)).abs() < 1e-15);
    }

    #[test]
    fn latent_term() {
        let t = Array2::<f64>::zeros((1, 3));
        let p = NetworkParams::new(vec![]);
        let w = AeLossWeights {
            latent: 0.5,
            weight_decay: 0.0,
        };
        let l = ae_loss(&t.view(), &t.view(), &array![1.0, 2.0].view(), &p, w);
        assert!((l.value - 2.5).abs() < 1e-15);
        assert_eq!(l.grad_latent, array![1.0, 2.0]);
    }
}

//! Latent-space utilities: code statistics, interpolation and sampling.

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::autoencoder::{Autoencoder, Normalizer};
use super::params::NetworkParams;
use super::NnError;
use crate::mesh::TriMesh;

/// Per-dimension mean and population std of the codes of `meshes`.
pub fn latent_statistics(
    ae: &Autoencoder,
    params: &NetworkParams,
    normalizer: &Normalizer,
    meshes: &[TriMesh],
) -> Result<(Array1<f64>, Array1<f64>), NnError> {
    if meshes.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let xs: Vec<Array2<f64>> = meshes
        .iter()
        .map(|m| normalizer.normalize(&m.vertices().view()))
        .collect();
    let zs = ae.encode_all(params, &xs)?;
    Ok((zs.mean_axis(Axis(0)).expect("nonempty"), zs.std_axis(Axis(0), 0.0)))
}

/// `(1 - t)·a + t·b` for `steps` evenly spaced `t` in `[0, 1]`; the first
/// and last codes are `a` and `b` exactly.
pub fn interpolate_latents(a: &Array1<f64>, b: &Array1<f64>, steps: usize) -> Vec<Array1<f64>> {
    assert!(steps >= 2, "need at least the two endpoints");
    (0..steps)
        .map(|i| {
            if i == 0 {
                return a.clone();
            }
            if i == steps - 1 {
                return b.clone();
            }
            let t = i as f64 / (steps - 1) as f64;
            a * (1.0 - t) + b * t
        })
        .collect()
}

/// Gaussian codes `mean + std ⊙ ε`; unit Gaussian without statistics.
pub fn sample_latents(
    latent: usize,
    stats: Option<&(Array1<f64>, Array1<f64>)>,
    count: usize,
    seed: u64,
) -> Vec<Array1<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let eps = Array1::from_shape_fn(latent, |_| StandardNormal.sample(&mut rng));
            match stats {
                Some((mu, sd)) => mu + &(sd * &eps),
                None => eps,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_endpoints_exact() {
        let a = Array1::from(vec![0.1, -0.3, 7.0]);
        let b = Array1::from(vec![1.0 / 3.0, 2.0, -1e-9]);
        let path = interpolate_latents(&a, &b, 11);
        assert_eq!(path.len(), 11);
        assert_eq!(path[0], a);
        assert_eq!(path[10], b);
        assert!((&path[5] - &((&a + &b) * 0.5)).iter().all(|d| d.abs() < 1e-15));
    }

    #[test]
    fn sampling_is_seeded() {
        assert_eq!(sample_latents(4, None, 3, 9), sample_latents(4, None, 3, 9));
        assert_ne!(sample_latents(4, None, 1, 9), sample_latents(4, None, 1, 10));
    }
}

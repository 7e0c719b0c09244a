//! Trainable layers, the Chebyshev mesh autoencoder, AdamW and checkpoints.
//!
//! Gradients are written by hand per layer; there is no general autodiff.
//! Every reverse pass is covered by a central finite-difference check.

mod adamw;
mod autoencoder;
pub mod checkpoint;
mod latent;
mod layers;
mod loss;
mod params;
mod train;

use serde::{Deserialize, Serialize};

pub use adamw::{AdamW, AdamWConfig};
pub use autoencoder::{Autoencoder, DecoderCache, EncoderCache, Normalizer};
pub use latent::{interpolate_latents, latent_statistics, sample_latents};
pub(crate) use layers::{dense_bwd, dense_fwd};
pub use layers::{leaky_relu, leaky_relu_grad, ChebConvGrads, ChebConvLayer, DenseGrads, DenseLayer};
pub use loss::{ae_loss, l1_mean, AeLoss, AeLossWeights};
pub use params::{Grads, NetworkParams, Param, PARAMS_VERSION};
pub use train::{
    batch_gradient, evaluate_l1, train_autoencoder, write_metrics_csv, EpochMetrics, TrainConfig, TrainingRun,
};

use crate::coarsening::{level_sizes, CoarsenError};
use crate::spectral::SpectralError;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    Shape {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("shape mismatch for layer {layer}: expected {expected:?}, found {found:?}")]
    LayerShape {
        layer: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("missing layer {0}")]
    MissingLayer(String),
    #[error("invalid network spec: {0}")]
    Spec(String),
    #[error("network spec mismatch: checkpoint has {found}, trainer configured with {expected}")]
    SpecMismatch { expected: String, found: String },
    #[error("all samples must share the template topology (sample {0} differs)")]
    TopologyMismatch(usize),
    #[error("empty dataset")]
    EmptyDataset,
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Coarsen(#[from] CoarsenError),
}

/// Architecture hyperparameters of the mesh autoencoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub template_vertices: usize,
    /// Graph reduction factor after each encoder convolution.
    pub factors: Vec<usize>,
    /// Encoder filter counts per level; the decoder mirrors them.
    pub filters: Vec<usize>,
    pub latent: usize,
    pub cheb_order: usize,
    pub leaky_slope: f64,
}

impl NetworkSpec {
    /// Filters (16, 32, 32, 48), factors (4, 4, 2, 2), Z = 64, r = 3, slope 0.2.
    pub fn defaults(template_vertices: usize) -> Self {
        Self {
            template_vertices,
            factors: vec![4, 4, 2, 2],
            filters: vec![16, 32, 32, 48],
            latent: 64,
            cheb_order: 3,
            leaky_slope: 0.2,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.filters.len() != self.factors.len() {
            return Err(NnError::Spec(format!(
                "{} filter widths for {} reduction factors",
                self.filters.len(),
                self.factors.len()
            )));
        }
        if self.factors.is_empty() {
            return Err(NnError::Spec("at least one level is required".into()));
        }
        if self.latent == 0 || self.cheb_order == 0 || self.template_vertices == 0 {
            return Err(NnError::Spec("latent size, order and vertex count must be >= 1".into()));
        }
        if self.filters.iter().chain(&self.factors).any(|&v| v == 0) {
            return Err(NnError::Spec("filters and factors must be >= 1".into()));
        }
        if !(self.leaky_slope.is_finite()) {
            return Err(NnError::Spec("leaky slope must be finite".into()));
        }
        Ok(())
    }

    pub fn level_sizes(&self) -> Vec<usize> {
        level_sizes(self.template_vertices, &self.factors)
    }

    /// Decoder output channels for decoder conv `i` (the last maps to xyz).
    fn decoder_channels(&self) -> Vec<(usize, usize)> {
        let l = self.filters.len();
        (0..l)
            .map(|i| {
                let level = l - 1 - i;
                let cin = self.filters[level];
                let cout = if level == 0 { 3 } else { self.filters[level - 1] };
                (cin, cout)
            })
            .collect()
    }

    /// Every trainable tensor: (name, shape, decays), in storage order.
    pub fn layer_shapes(&self) -> Vec<(String, Vec<usize>, bool)> {
        let r = self.cheb_order;
        let l = self.filters.len();
        let sizes = self.level_sizes();
        let flat = sizes[l] * self.filters[l - 1];
        let mut out = Vec::new();
        let mut cin = 3;
        for (k, &cout) in self.filters.iter().enumerate() {
            out.push((format!("enc.conv{k}.weight"), vec![r, cin, cout], true));
            out.push((format!("enc.conv{k}.bias"), vec![cout], false));
            cin = cout;
        }
        out.push(("enc.dense.weight".into(), vec![flat, self.latent], true));
        out.push(("enc.dense.bias".into(), vec![self.latent], false));
        out.push(("dec.dense.weight".into(), vec![self.latent, flat], true));
        out.push(("dec.dense.bias".into(), vec![flat], false));
        for (i, (cin, cout)) in self.decoder_channels().into_iter().enumerate() {
            out.push((format!("dec.conv{i}.weight"), vec![r, cin, cout], true));
            out.push((format!("dec.conv{i}.bias"), vec![cout], false));
        }
        out
    }
}

/// Scalar parameter counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub encoder: usize,
    pub decoder: usize,
    pub total: usize,
}

/// Closed-form parameter count for `spec` on a hierarchy with the given level sizes.
pub fn count_params(spec: &NetworkSpec, level_sizes: &[usize]) -> Result<ParamCount, NnError> {
    spec.validate()?;
    let l = spec.filters.len();
    if level_sizes.len() != l + 1 {
        return Err(NnError::Spec(format!(
            "hierarchy has {} levels, spec needs {}",
            level_sizes.len(),
            l + 1
        )));
    }
    let r = spec.cheb_order;
    let conv = |cin: usize, cout: usize| r * cin * cout + cout;
    let flat = level_sizes[l] * spec.filters[l - 1];
    let dense = |i: usize, o: usize| i * o + o;
    let mut encoder = dense(flat, spec.latent);
    let mut cin = 3;
    for &f in &spec.filters {
        encoder += conv(cin, f);
        cin = f;
    }
    let mut decoder = dense(spec.latent, flat);
    for (i, &f) in spec.filters.iter().enumerate() {
        let cout = if i == 0 { 3 } else { spec.filters[i - 1] };
        decoder += conv(f, cout);
    }
    Ok(ParamCount {
        encoder,
        decoder,
        total: encoder + decoder,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_decoder_count() {
        // Z = 2, one coarse level of 4 vertices x 8 channels, one conv 8 -> 3, r = 3
        let spec = NetworkSpec {
            template_vertices: 8,
            factors: vec![2],
            filters: vec![8],
            latent: 2,
            cheb_order: 3,
            leaky_slope: 0.2,
        };
        let c = count_params(&spec, &[8, 4]).unwrap();
        assert_eq!(c.decoder, 96 + 75);
        assert_eq!(c.decoder, 171);
    }

    #[test]
    fn default_sizes_follow_ceil_rule() {
        let spec = NetworkSpec::defaults(7907);
        assert_eq!(spec.level_sizes(), vec![7907, 1977, 495, 248, 124]);
        let c = count_params(&spec, &spec.level_sizes()).unwrap();
        let rel = (c.decoder as f64 - 393_080.0).abs() / 393_080.0;
        assert!(rel < 0.05, "decoder count {} off by {rel}", c.decoder);
    }

    #[test]
    fn doubling_latent_doubles_only_dense_weight_block() {
        let mut spec = NetworkSpec::defaults(500);
        spec.latent = 8;
        let sizes = spec.level_sizes();
        let a = count_params(&spec, &sizes).unwrap();
        spec.latent = 16;
        let b = count_params(&spec, &sizes).unwrap();
        let flat = sizes[4] * 48;
        // decoder dense weight grows by 8·flat, encoder dense by 8·flat + 8 bias
        assert_eq!(b.decoder - a.decoder, 8 * flat);
        assert_eq!(b.encoder - a.encoder, 8 * flat + 8);
    }

    #[test]
    fn mismatched_spec_rejected() {
        let mut spec = NetworkSpec::defaults(500);
        spec.filters.pop();
        assert!(spec.validate().is_err());
    }
}

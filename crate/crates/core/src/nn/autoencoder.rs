use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{cheb_conv_bwd, cheb_conv_fwd, dense_bwd, dense_fwd, leaky_relu, leaky_relu_grad};
use super::params::{uniform_tensor, Grads, NetworkParams, Param};
use super::{NetworkSpec, NnError};
use crate::coarsening::MeshHierarchy;
use crate::sparse::CsrMatrix;
use crate::spectral::{build_laplacian, GraphLaplacian};

/// Per-vertex mean and a single global scale. Networks see `(x - mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Array2<f64>,
    pub scale: f64,
}

impl Normalizer {
    pub fn identity(n: usize) -> Self {
        Self {
            mean: Array2::zeros((n, 3)),
            scale: 1.0,
        }
    }

    /// Mean shape and the RMS deviation from it over all coordinates.
    pub fn fit(samples: &[Array2<f64>]) -> Result<Self, NnError> {
        let first = samples.first().ok_or(NnError::EmptyDataset)?;
        let mut mean = Array2::<f64>::zeros(first.raw_dim());
        for s in samples {
            mean += s;
        }
        mean /= samples.len() as f64;
        let mut ss = 0.0;
        for s in samples {
            ss += (s - &mean).iter().map(|v| v * v).sum::<f64>();
        }
        let rms = (ss / (samples.len() * first.len()) as f64).sqrt();
        Ok(Self {
            mean,
            scale: if rms > 0.0 { rms } else { 1.0 },
        })
    }

    pub fn normalize(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        (x - &self.mean) / self.scale
    }

    pub fn denormalize(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        x * self.scale + &self.mean
    }
}

/// Intermediate values of one encoder pass.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    terms: Vec<Vec<Array2<f64>>>,
    pre: Vec<Array2<f64>>,
    flat: Array1<f64>,
}

/// Intermediate values of one decoder pass.
#[derive(Debug, Clone)]
pub struct DecoderCache {
    latent: Array1<f64>,
    terms: Vec<Vec<Array2<f64>>>,
    pre: Vec<Array2<f64>>,
}

/// The mesh autoencoder bound to a fixed hierarchy. Parameters live outside
/// so that the same model can evaluate several parameter sets.
#[derive(Debug, Clone)]
pub struct Autoencoder {
    spec: NetworkSpec,
    hierarchy: Arc<MeshHierarchy>,
    laplacians: Vec<GraphLaplacian>,
    down_t: Vec<CsrMatrix>,
    up_t: Vec<CsrMatrix>,
    shapes: Vec<(String, Vec<usize>, bool)>,
}

impl Autoencoder {
    pub fn new(spec: NetworkSpec, hierarchy: Arc<MeshHierarchy>) -> Result<Self, NnError> {
        spec.validate()?;
        let sizes = hierarchy.sizes();
        if sizes != spec.level_sizes() || hierarchy.factors() != spec.factors.as_slice() {
            return Err(NnError::Spec(format!(
                "hierarchy levels {sizes:?} do not match spec levels {:?}",
                spec.level_sizes()
            )));
        }
        let l = spec.filters.len();
        let laplacians = (0..l)
            .map(|k| build_laplacian(hierarchy.level(k), None))
            .collect::<Result<Vec<_>, _>>()?;
        let down_t = (0..l).map(|k| hierarchy.down_transform(k).transpose()).collect();
        let up_t = (0..l).map(|k| hierarchy.up_transform(k).transpose()).collect();
        let shapes = spec.layer_shapes();
        Ok(Self {
            spec,
            hierarchy,
            laplacians,
            down_t,
            up_t,
            shapes,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn hierarchy(&self) -> &Arc<MeshHierarchy> {
        &self.hierarchy
    }

    pub fn num_vertices(&self) -> usize {
        self.spec.template_vertices
    }

    /// Zero-mean uniform weights with standard deviation 1/√(fan_in·r)
    /// (r = 1 for dense layers), zero biases.
    pub fn init_params(&self, seed: u64) -> NetworkParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = self.spec.cheb_order as f64;
        let params = self
            .shapes
            .iter()
            .map(|(name, shape, decay)| {
                let value = if *decay {
                    let (fan_in, order) = if shape.len() == 3 {
                        (shape[1], r)
                    } else {
                        (shape[0], 1.0)
                    };
                    uniform_tensor(shape, (3.0 / (fan_in as f64 * order)).sqrt(), &mut rng)
                } else {
                    ndarray::ArrayD::zeros(ndarray::IxDyn(shape))
                };
                Param {
                    name: name.clone(),
                    value,
                    decay: *decay,
                }
            })
            .collect();
        NetworkParams::new(params)
    }

    /// Every layer present once, in order, with the expected shape.
    pub fn check_params(&self, params: &NetworkParams) -> Result<(), NnError> {
        for (name, shape, _) in &self.shapes {
            let p = params.get(name).ok_or_else(|| NnError::MissingLayer(name.clone()))?;
            if p.value.shape() != shape.as_slice() {
                return Err(NnError::LayerShape {
                    layer: name.clone(),
                    expected: shape.clone(),
                    found: p.value.shape().to_vec(),
                });
            }
        }
        if params.len() != self.shapes.len() || params.params().iter().zip(&self.shapes).any(|(p, s)| p.name != s.0) {
            return Err(NnError::Spec("parameter set has extra or reordered layers".into()));
        }
        Ok(())
    }

    fn levels(&self) -> usize {
        self.spec.filters.len()
    }

    fn enc_conv(&self, k: usize) -> (usize, usize) {
        (2 * k, 2 * k + 1)
    }

    fn enc_dense(&self) -> (usize, usize) {
        let l = self.levels();
        (2 * l, 2 * l + 1)
    }

    fn dec_dense(&self) -> (usize, usize) {
        let l = self.levels();
        (2 * l + 2, 2 * l + 3)
    }

    fn dec_conv(&self, i: usize) -> (usize, usize) {
        let l = self.levels();
        (2 * l + 4 + 2 * i, 2 * l + 5 + 2 * i)
    }

    fn coarse_shape(&self) -> (usize, usize) {
        let l = self.levels();
        (self.hierarchy.sizes()[l], self.spec.filters[l - 1])
    }

    pub fn encode(&self, params: &NetworkParams, x: &ArrayView2<f64>) -> Result<Array1<f64>, NnError> {
        Ok(self.encode_cached(params, x)?.0)
    }

    pub fn encode_cached(
        &self,
        params: &NetworkParams,
        x: &ArrayView2<f64>,
    ) -> Result<(Array1<f64>, EncoderCache), NnError> {
        let n = self.num_vertices();
        if x.dim() != (n, 3) {
            return Err(NnError::Shape {
                what: "autoencoder input rows".into(),
                expected: n,
                found: x.nrows(),
            });
        }
        let slope = self.spec.leaky_slope;
        let mut h = x.to_owned();
        let mut terms = Vec::with_capacity(self.levels());
        let mut pres = Vec::with_capacity(self.levels());
        for k in 0..self.levels() {
            let (w, b) = self.enc_conv(k);
            let (pre, t) = cheb_conv_fwd(params.cube(w), params.vec(b), &self.laplacians[k], h.view())?;
            let act = leaky_relu(&pre, slope);
            h = self
                .hierarchy
                .down_transform(k)
                .mul_dense(&act.view())
                .map_err(crate::spectral::SpectralError::from)?;
            terms.push(t);
            pres.push(pre);
        }
        let flat = Array1::from_iter(h.iter().copied());
        let (w, b) = self.enc_dense();
        let z = dense_fwd(params.mat(w), params.vec(b), flat.view())?;
        Ok((z, EncoderCache { terms, pre: pres, flat }))
    }

    pub fn decode(&self, params: &NetworkParams, z: &ArrayView1<f64>) -> Result<Array2<f64>, NnError> {
        Ok(self.decode_cached(params, z)?.0)
    }

    pub fn decode_cached(
        &self,
        params: &NetworkParams,
        z: &ArrayView1<f64>,
    ) -> Result<(Array2<f64>, DecoderCache), NnError> {
        let l = self.levels();
        let slope = self.spec.leaky_slope;
        let (w, b) = self.dec_dense();
        let flat = dense_fwd(params.mat(w), params.vec(b), z.view())?;
        let mut h = flat
            .into_shape_with_order(self.coarse_shape())
            .expect("dense output matches coarse shape");
        let mut terms = Vec::with_capacity(l);
        let mut pres = Vec::with_capacity(l);
        for i in 0..l {
            let level = l - 1 - i;
            let up = self
                .hierarchy
                .up_transform(level)
                .mul_dense(&h.view())
                .map_err(crate::spectral::SpectralError::from)?;
            let (w, b) = self.dec_conv(i);
            let (pre, t) = cheb_conv_fwd(params.cube(w), params.vec(b), &self.laplacians[level], up.view())?;
            h = if i + 1 < l {
                leaky_relu(&pre, slope)
            } else {
                pre.clone()
            };
            terms.push(t);
            pres.push(pre);
        }
        Ok((
            h,
            DecoderCache {
                latent: z.to_owned(),
                terms,
                pre: pres,
            },
        ))
    }

    /// Reconstruction and latent code.
    pub fn forward(&self, params: &NetworkParams, x: &ArrayView2<f64>) -> Result<(Array2<f64>, Array1<f64>), NnError> {
        let z = self.encode(params, x)?;
        let y = self.decode(params, &z.view())?;
        Ok((y, z))
    }

    /// Reverse pass through the decoder. Parameter gradients are accumulated
    /// into `grads` when given; returns the gradient with respect to the latent.
    pub fn decoder_backward(
        &self,
        params: &NetworkParams,
        cache: &DecoderCache,
        grad_out: &ArrayView2<f64>,
        mut grads: Option<&mut Grads>,
    ) -> Result<Array1<f64>, NnError> {
        let l = self.levels();
        let slope = self.spec.leaky_slope;
        let mut g = grad_out.to_owned();
        for i in (0..l).rev() {
            let level = l - 1 - i;
            if i + 1 < l {
                g = leaky_relu_grad(&cache.pre[i], &g, slope);
            }
            let (w, b) = self.dec_conv(i);
            let gh = match grads.as_deref_mut() {
                Some(gr) => {
                    let (gw, gb) = split_two(gr, w, b);
                    cheb_conv_bwd(
                        params.cube(w),
                        &self.laplacians[level],
                        &cache.terms[i],
                        g.view(),
                        Some(gw.view_mut().into_dimensionality().expect("rank-3 grad")),
                        Some(gb.view_mut().into_dimensionality().expect("rank-1 grad")),
                        true,
                    )?
                }
                None => cheb_conv_bwd(
                    params.cube(w),
                    &self.laplacians[level],
                    &cache.terms[i],
                    g.view(),
                    None,
                    None,
                    true,
                )?,
            }
            .expect("input gradient requested");
            g = self.up_t[level]
                .mul_dense(&gh.view())
                .map_err(crate::spectral::SpectralError::from)?;
        }
        let gflat = Array1::from_iter(g.iter().copied());
        let (w, b) = self.dec_dense();
        let gz = match grads {
            Some(gr) => {
                let (gw, gb) = split_two(gr, w, b);
                dense_bwd(
                    params.mat(w),
                    cache.latent.view(),
                    gflat.view(),
                    Some(gw.view_mut().into_dimensionality().expect("rank-2 grad")),
                    Some(gb.view_mut().into_dimensionality().expect("rank-1 grad")),
                    true,
                )
            }
            None => dense_bwd(params.mat(w), cache.latent.view(), gflat.view(), None, None, true),
        };
        Ok(gz.expect("input gradient requested"))
    }

    /// Reverse pass through the encoder from a latent gradient, accumulating
    /// parameter gradients into `grads`.
    pub fn encoder_backward(
        &self,
        params: &NetworkParams,
        cache: &EncoderCache,
        grad_latent: &ArrayView1<f64>,
        grads: &mut Grads,
    ) -> Result<(), NnError> {
        let l = self.levels();
        let slope = self.spec.leaky_slope;
        let (w, b) = self.enc_dense();
        let gflat = {
            let (gw, gb) = split_two(grads, w, b);
            dense_bwd(
                params.mat(w),
                cache.flat.view(),
                grad_latent.view(),
                Some(gw.view_mut().into_dimensionality().expect("rank-2 grad")),
                Some(gb.view_mut().into_dimensionality().expect("rank-1 grad")),
                true,
            )
            .expect("input gradient requested")
        };
        let mut g = gflat
            .into_shape_with_order(self.coarse_shape())
            .expect("flat gradient matches coarse shape");
        for k in (0..l).rev() {
            let ga = self.down_t[k]
                .mul_dense(&g.view())
                .map_err(crate::spectral::SpectralError::from)?;
            let gpre = leaky_relu_grad(&cache.pre[k], &ga, slope);
            let (w, b) = self.enc_conv(k);
            let (gw, gb) = split_two(grads, w, b);
            let gin = cheb_conv_bwd(
                params.cube(w),
                &self.laplacians[k],
                &cache.terms[k],
                gpre.view(),
                Some(gw.view_mut().into_dimensionality().expect("rank-3 grad")),
                Some(gb.view_mut().into_dimensionality().expect("rank-1 grad")),
                k > 0,
            )?;
            if let Some(gin) = gin {
                g = gin;
            }
        }
        Ok(())
    }

    /// Mean absolute reconstruction error per coordinate, in normalized units.
    pub fn reconstruction_l1(&self, params: &NetworkParams, x: &ArrayView2<f64>) -> Result<f64, NnError> {
        let (y, _) = self.forward(params, x)?;
        Ok((&y - x).mapv(f64::abs).mean().unwrap_or(0.0))
    }

    /// Stack of latent codes for many inputs.
    pub fn encode_all(&self, params: &NetworkParams, xs: &[Array2<f64>]) -> Result<Array2<f64>, NnError> {
        let mut out = Array2::zeros((xs.len(), self.spec.latent));
        for (row, x) in out.axis_iter_mut(Axis(0)).zip(xs) {
            let z = self.encode(params, &x.view())?;
            let mut row = row;
            row.assign(&z);
        }
        Ok(out)
    }
}

/// Disjoint mutable borrows of a weight and its bias (`w < b`).
fn split_two(g: &mut Grads, w: usize, b: usize) -> (&mut ndarray::ArrayD<f64>, &mut ndarray::ArrayD<f64>) {
    debug_assert!(w < b);
    let (lo, hi) = g.0.split_at_mut(b);
    (&mut lo[w], &mut hi[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coarsening::build_hierarchy;
    use crate::mesh::primitives;
    use crate::nn::count_params;

    pub(crate) fn toy() -> (Autoencoder, NetworkParams) {
        // 42-vertex icosphere, two levels
        let mesh = primitives::icosphere(1);
        let spec = NetworkSpec {
            template_vertices: 42,
            factors: vec![2, 2],
            filters: vec![4, 5],
            latent: 3,
            cheb_order: 3,
            leaky_slope: 0.2,
        };
        let h = Arc::new(build_hierarchy(&mesh, &spec.factors).unwrap());
        let ae = Autoencoder::new(spec, h).unwrap();
        let p = ae.init_params(7);
        (ae, p)
    }

    #[test]
    fn shapes_and_counts() {
        let (ae, p) = toy();
        let x = primitives::icosphere(1).into_vertices();
        let (y, z) = ae.forward(&p, &x.view()).unwrap();
        assert_eq!(y.dim(), x.dim());
        assert_eq!(z.len(), 3);
        let c = count_params(ae.spec(), &ae.hierarchy().sizes()).unwrap();
        assert_eq!(c.total, p.num_scalars());
        ae.check_params(&p).unwrap();
    }

    #[test]
    fn decode_is_pure() {
        let (ae, p) = toy();
        let z = Array1::from(vec![0.3, -0.2, 1.1]);
        let a = ae.decode(&p, &z.view()).unwrap();
        let b = ae.decode(&p, &z.view()).unwrap();
        assert_eq!(a.as_slice().unwrap(), b.as_slice().unwrap());
    }

    #[test]
    fn wrong_layer_shape_named() {
        let (ae, mut p) = toy();
        let i = p.index_of("dec.conv1.bias").unwrap();
        p.params_mut()[i].value = ndarray::ArrayD::zeros(ndarray::IxDyn(&[7]));
        match ae.check_params(&p) {
            Err(NnError::LayerShape { layer, .. }) => assert_eq!(layer, "dec.conv1.bias"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn full_network_matches_finite_differences() {
        let (ae, p) = toy();
        let x = primitives::icosphere(1).into_vertices();
        let proj = Array2::from_shape_fn((42, 3), |(i, j)| ((i * 7 + j * 3) as f64 * 0.61).sin());
        let objective = |p: &NetworkParams| {
            let (y, _) = ae.forward(p, &x.view()).unwrap();
            (&y * &proj).sum()
        };
        let (z, ec) = ae.encode_cached(&p, &x.view()).unwrap();
        let (_, dc) = ae.decode_cached(&p, &z.view()).unwrap();
        let mut g = p.zeros_like();
        let gz = ae.decoder_backward(&p, &dc, &proj.view(), Some(&mut g)).unwrap();
        ae.encoder_backward(&p, &ec, &gz.view(), &mut g).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for t in 0..p.len() {
            for e in 0..p.params()[t].value.len() {
                let mut q = p.clone();
                q.params_mut()[t].value.as_slice_mut().unwrap()[e] += h;
                let fp = objective(&q);
                q.params_mut()[t].value.as_slice_mut().unwrap()[e] -= 2.0 * h;
                let fm = objective(&q);
                let fd = (fp - fm) / (2.0 * h);
                let an = g.0[t].as_slice().unwrap()[e];
                worst = worst.max((fd - an).abs() / (fd.abs().max(an.abs()).max(1e-6)));
            }
        }
        assert!(worst < 1e-3, "worst relative error {worst}");
    }

    #[test]
    fn normalizer_round_trip() {
        let a = Array2::from_shape_fn((4, 3), |(i, j)| (i * 3 + j) as f64);
        let b = &a * 2.0;
        let nz = Normalizer::fit(&[a.clone(), b]).unwrap();
        let back = nz.denormalize(&nz.normalize(&a.view()).view());
        assert!((back - &a).iter().all(|v| v.abs() < 1e-12));
    }
}

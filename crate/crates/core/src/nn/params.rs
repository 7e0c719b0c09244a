use ndarray::{ArrayD, ArrayView2, ArrayView3, ArrayViewMut2, ArrayViewMut3, Ix1, Ix2, Ix3, IxDyn};
use rand::Rng;

/// Version tag written into every parameter set and checkpoint.
pub const PARAMS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: ArrayD<f64>,
    /// Weights decay and are L2-regularized; biases are not.
    pub decay: bool,
}

/// Named trainable tensors in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub version: u32,
    params: Vec<Param>,
}

impl NetworkParams {
    pub fn new(params: Vec<Param>) -> Self {
        Self {
            version: PARAMS_VERSION,
            params,
        }
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Total number of scalars.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zeros_like(&self) -> Grads {
        Grads(self.params.iter().map(|p| ArrayD::zeros(p.value.raw_dim())).collect())
    }

    pub fn mat(&self, i: usize) -> ArrayView2<'_, f64> {
        self.params[i]
            .value
            .view()
            .into_dimensionality::<Ix2>()
            .expect("rank-2 param")
    }

    pub fn cube(&self, i: usize) -> ArrayView3<'_, f64> {
        self.params[i]
            .value
            .view()
            .into_dimensionality::<Ix3>()
            .expect("rank-3 param")
    }

    pub fn vec(&self, i: usize) -> ndarray::ArrayView1<'_, f64> {
        self.params[i]
            .value
            .view()
            .into_dimensionality::<Ix1>()
            .expect("rank-1 param")
    }

    /// Sum of squared entries over decaying (weight) tensors.
    pub fn weight_sq_norm(&self) -> f64 {
        self.params
            .iter()
            .filter(|p| p.decay)
            .map(|p| p.value.iter().map(|v| v * v).sum::<f64>())
            .sum()
    }
}

/// Gradient buffers aligned with a [`NetworkParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads(pub Vec<ArrayD<f64>>);

impl Grads {
    pub fn mat_mut(&mut self, i: usize) -> ArrayViewMut2<'_, f64> {
        self.0[i].view_mut().into_dimensionality::<Ix2>().expect("rank-2 grad")
    }

    pub fn cube_mut(&mut self, i: usize) -> ArrayViewMut3<'_, f64> {
        self.0[i].view_mut().into_dimensionality::<Ix3>().expect("rank-3 grad")
    }

    pub fn vec_mut(&mut self, i: usize) -> ndarray::ArrayViewMut1<'_, f64> {
        self.0[i].view_mut().into_dimensionality::<Ix1>().expect("rank-1 grad")
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.0 {
            a.mapv_inplace(|v| v * s);
        }
    }

    pub fn is_all_zero(&self) -> bool {
        self.0.iter().all(|a| a.iter().all(|&v| v == 0.0))
    }

    pub fn flat(&self) -> Vec<f64> {
        self.0.iter().flat_map(|a| a.iter().copied()).collect()
    }
}

/// Uniform in `[-bound, bound]`.
pub(crate) fn uniform_tensor(shape: &[usize], bound: f64, rng: &mut impl Rng) -> ArrayD<f64> {
    ArrayD::from_shape_fn(IxDyn(shape), |_| rng.random_range(-bound..=bound))
}

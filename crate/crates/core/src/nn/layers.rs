//! Layer primitives with hand-written reverse passes.

use ndarray::{
    s, Array1, Array2, Array3, ArrayView1, ArrayView2, ArrayView3, ArrayViewMut1, ArrayViewMut2, ArrayViewMut3, Axis,
    Dimension, Zip,
};

use super::NnError;
use crate::spectral::{chebyshev_basis, chebyshev_sum, GraphLaplacian};

fn shape_err(what: &str, expected: usize, found: usize) -> NnError {
    NnError::Shape {
        what: what.to_string(),
        expected,
        found,
    }
}

/// `y = Σ_j T_j(L̃)·x·W_j + b`. Returns the output and the Chebyshev terms
/// `T_j(L̃)·x`, which the reverse pass reuses.
pub(crate) fn cheb_conv_fwd(
    weight: ArrayView3<f64>,
    bias: ArrayView1<f64>,
    lap: &GraphLaplacian,
    x: ArrayView2<f64>,
) -> Result<(Array2<f64>, Vec<Array2<f64>>), NnError> {
    let (order, fin, fout) = weight.dim();
    if x.ncols() != fin {
        return Err(shape_err("cheb conv input channels", fin, x.ncols()));
    }
    if bias.len() != fout {
        return Err(shape_err("cheb conv bias", fout, bias.len()));
    }
    let terms = chebyshev_basis(lap, &x, order)?;
    let mut y = Array2::zeros((x.nrows(), fout));
    for (j, t) in terms.iter().enumerate() {
        ndarray::linalg::general_mat_mul(1.0, t, &weight.slice(s![j, .., ..]), 1.0, &mut y);
    }
    y += &bias;
    Ok((y, terms))
}

/// Reverse pass of [`cheb_conv_fwd`]. Parameter gradients are accumulated
/// into the given buffers; the input gradient is returned when requested.
/// `L̃` is symmetric, so `T_j(L̃)ᵀ = T_j(L̃)` and the input gradient is a
/// Chebyshev sum evaluated by Clenshaw's recurrence.
pub(crate) fn cheb_conv_bwd(
    weight: ArrayView3<f64>,
    lap: &GraphLaplacian,
    terms: &[Array2<f64>],
    grad_out: ArrayView2<f64>,
    grad_w: Option<ArrayViewMut3<f64>>,
    grad_b: Option<ArrayViewMut1<f64>>,
    want_input: bool,
) -> Result<Option<Array2<f64>>, NnError> {
    let (order, _fin, fout) = weight.dim();
    if grad_out.ncols() != fout {
        return Err(shape_err("cheb conv upstream channels", fout, grad_out.ncols()));
    }
    if let Some(mut gw) = grad_w {
        for (j, t) in terms.iter().enumerate() {
            let mut slot = gw.slice_mut(s![j, .., ..]);
            ndarray::linalg::general_mat_mul(1.0, &t.t(), &grad_out, 1.0, &mut slot);
        }
    }
    if let Some(mut gb) = grad_b {
        gb += &grad_out.sum_axis(Axis(0));
    }
    if !want_input {
        return Ok(None);
    }
    let hs: Vec<Array2<f64>> = (0..order)
        .map(|j| grad_out.dot(&weight.slice(s![j, .., ..]).t()))
        .collect();
    Ok(Some(chebyshev_sum(lap, &hs)?))
}

pub(crate) fn dense_fwd(
    weight: ArrayView2<f64>,
    bias: ArrayView1<f64>,
    x: ArrayView1<f64>,
) -> Result<Array1<f64>, NnError> {
    if x.len() != weight.nrows() {
        return Err(shape_err("dense input", weight.nrows(), x.len()));
    }
    if bias.len() != weight.ncols() {
        return Err(shape_err("dense bias", weight.ncols(), bias.len()));
    }
    Ok(x.dot(&weight) + bias)
}

pub(crate) fn dense_bwd(
    weight: ArrayView2<f64>,
    x: ArrayView1<f64>,
    grad_out: ArrayView1<f64>,
    grad_w: Option<ArrayViewMut2<f64>>,
    grad_b: Option<ArrayViewMut1<f64>>,
    want_input: bool,
) -> Option<Array1<f64>> {
    if let Some(mut gw) = grad_w {
        let xc = x.view().insert_axis(Axis(1));
        let gr = grad_out.view().insert_axis(Axis(0));
        ndarray::linalg::general_mat_mul(1.0, &xc, &gr, 1.0, &mut gw);
    }
    if let Some(mut gb) = grad_b {
        gb += &grad_out;
    }
    want_input.then(|| weight.dot(&grad_out))
}

pub fn leaky_relu<D: Dimension>(x: &ndarray::Array<f64, D>, slope: f64) -> ndarray::Array<f64, D> {
    x.mapv(|v| if v > 0.0 { v } else { slope * v })
}

/// Gradient through leaky ReLU given the pre-activation input.
pub fn leaky_relu_grad<D: Dimension>(
    pre: &ndarray::Array<f64, D>,
    grad_out: &ndarray::Array<f64, D>,
    slope: f64,
) -> ndarray::Array<f64, D> {
    let mut g = grad_out.clone();
    Zip::from(&mut g).and(pre).for_each(|g, &p| {
        if p <= 0.0 {
            *g *= slope;
        }
    });
    g
}

/// A standalone Chebyshev graph-convolution layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebConvLayer {
    /// `order × F_in × F_out`.
    pub weights: Array3<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChebConvGrads {
    pub input: Array2<f64>,
    pub weights: Array3<f64>,
    pub bias: Array1<f64>,
}

impl ChebConvLayer {
    pub fn new(weights: Array3<f64>, bias: Array1<f64>) -> Result<Self, NnError> {
        if weights.dim().0 == 0 {
            return Err(shape_err("Chebyshev order", 1, 0));
        }
        if bias.len() != weights.dim().2 {
            return Err(shape_err("cheb conv bias", weights.dim().2, bias.len()));
        }
        Ok(Self { weights, bias })
    }

    pub fn order(&self) -> usize {
        self.weights.dim().0
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn forward(&self, lap: &GraphLaplacian, x: &ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        Ok(cheb_conv_fwd(self.weights.view(), self.bias.view(), lap, x.view())?.0)
    }

    pub fn backward(
        &self,
        lap: &GraphLaplacian,
        x: &ArrayView2<f64>,
        grad_out: &ArrayView2<f64>,
    ) -> Result<ChebConvGrads, NnError> {
        let (_, terms) = cheb_conv_fwd(self.weights.view(), self.bias.view(), lap, x.view())?;
        if grad_out.nrows() != x.nrows() {
            return Err(shape_err("cheb conv upstream rows", x.nrows(), grad_out.nrows()));
        }
        let mut gw = Array3::zeros(self.weights.raw_dim());
        let mut gb = Array1::zeros(self.bias.raw_dim());
        let gx = cheb_conv_bwd(
            self.weights.view(),
            lap,
            &terms,
            grad_out.view(),
            Some(gw.view_mut()),
            Some(gb.view_mut()),
            true,
        )?
        .expect("input gradient requested");
        Ok(ChebConvGrads {
            input: gx,
            weights: gw,
            bias: gb,
        })
    }
}

/// Fully connected layer `y = x·W + b` on a single row vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `in × out`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub input: Array1<f64>,
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseLayer {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>) -> Result<Self, NnError> {
        if bias.len() != weights.ncols() {
            return Err(shape_err("dense bias", weights.ncols(), bias.len()));
        }
        Ok(Self { weights, bias })
    }

    pub fn forward(&self, x: &ArrayView1<f64>) -> Result<Array1<f64>, NnError> {
        dense_fwd(self.weights.view(), self.bias.view(), x.view())
    }

    pub fn backward(&self, x: &ArrayView1<f64>, grad_out: &ArrayView1<f64>) -> Result<DenseGrads, NnError> {
        if x.len() != self.weights.nrows() {
            return Err(shape_err("dense input", self.weights.nrows(), x.len()));
        }
        if grad_out.len() != self.weights.ncols() {
            return Err(shape_err("dense upstream", self.weights.ncols(), grad_out.len()));
        }
        let mut gw = Array2::zeros(self.weights.raw_dim());
        let mut gb = Array1::zeros(self.bias.raw_dim());
        let gx = dense_bwd(
            self.weights.view(),
            x.view(),
            grad_out.view(),
            Some(gw.view_mut()),
            Some(gb.view_mut()),
            true,
        )
        .expect("input gradient requested");
        Ok(DenseGrads {
            input: gx,
            weights: gw,
            bias: gb,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives;
    use crate::spectral::build_laplacian;
    use ndarray::array;

    #[test]
    fn order_one_identity_passthrough() {
        let m = primitives::icosphere(1);
        let lap = build_laplacian(m.topology(), None).unwrap();
        let mut w = Array3::zeros((1, 3, 3));
        for i in 0..3 {
            w[[0, i, i]] = 1.0;
        }
        let layer = ChebConvLayer::new(w, Array1::zeros(3)).unwrap();
        let y = layer.forward(&lap, &m.vertices().view()).unwrap();
        assert_eq!(&y, m.vertices());
    }

    #[test]
    fn zero_weights_give_bias_rows() {
        let m = primitives::icosphere(1);
        let lap = build_laplacian(m.topology(), None).unwrap();
        let layer = ChebConvLayer::new(Array3::zeros((3, 3, 2)), array![0.5, -2.0]).unwrap();
        let y = layer.forward(&lap, &m.vertices().view()).unwrap();
        for row in y.rows() {
            assert_eq!(row.to_vec(), vec![0.5, -2.0]);
        }
    }

    #[test]
    fn bias_grad_is_column_sum_and_zero_upstream_is_zero() {
        let m = primitives::icosphere(1);
        let lap = build_laplacian(m.topology(), None).unwrap();
        let w = Array3::from_shape_fn((3, 3, 2), |(a, b, c)| (a + 2 * b + 3 * c) as f64 * 0.1 - 0.4);
        let layer = ChebConvLayer::new(w, array![0.1, 0.2]).unwrap();
        let g = Array2::from_shape_fn((42, 2), |(i, c)| (i as f64 * 0.37 + c as f64).sin());
        let grads = layer.backward(&lap, &m.vertices().view(), &g.view()).unwrap();
        assert_eq!(grads.bias, g.sum_axis(Axis(0)));
        let zero = layer
            .backward(&lap, &m.vertices().view(), &Array2::zeros((42, 2)).view())
            .unwrap();
        assert!(zero
            .input
            .iter()
            .chain(zero.weights.iter())
            .chain(zero.bias.iter())
            .all(|&v| v == 0.0));
    }

    #[test]
    fn leaky_relu_definition() {
        let x = array![-1.0, 3.0, 0.0];
        assert_eq!(leaky_relu(&x, 0.2), array![-0.2, 3.0, 0.0]);
        let g = leaky_relu_grad(&x, &array![1.0, 1.0, 1.0], 0.2);
        assert_eq!(g, array![0.2, 1.0, 0.2]);
    }

    #[test]
    fn dense_identity() {
        let layer = DenseLayer::new(Array2::eye(3), Array1::zeros(3)).unwrap();
        let x = array![1.0, -2.0, 0.5];
        assert_eq!(layer.forward(&x.view()).unwrap(), x);
        assert!(layer.forward(&array![1.0].view()).is_err());
    }
}

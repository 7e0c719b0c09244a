//! Graph Laplacians, the graph Fourier transform and Chebyshev filtering.
//!
//! The non-normalized Laplacian `L = D - W` is used throughout. The fast
//! filter never forms the rescaled operator `2L/λmax - I` explicitly; it is
//! applied through [`GraphLaplacian::apply_rescaled`]. The dense
//! eigendecomposition exists only as a reference and is size-capped.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{s, Array1, Array2, ArrayView2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::exec::Exec;
use crate::mesh::Topology;
use crate::sparse::{CsrMatrix, SparseError};

/// Default cap on the dense eigendecomposition.
pub const DEFAULT_DENSE_LIMIT: usize = 2000;

/// Relative inflation applied to the power-iteration estimate of λmax.
pub const LAMBDA_MAX_INFLATION: f64 = 1.01;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SpectralError {
    #[error("edge ({0}, {1}) has nonpositive or non-finite weight {2}")]
    NonPositiveWeight(usize, usize, f64),
    #[error("edge weight given for ({0}, {1}) which is not an edge of the topology")]
    UnknownEdge(usize, usize),
    #[error("no weight given for edge ({0}, {1})")]
    MissingWeight(usize, usize),
    #[error(
        "dense eigendecomposition refused for n = {n} (limit {limit}); \
         use the Chebyshev filter, which never needs the eigenbasis"
    )]
    TooLarge { n: usize, limit: usize },
    #[error("dimension mismatch: expected {expected} rows, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("Chebyshev order must be at least 1 with finite coefficients")]
    BadCoefficients,
    #[error("λmax is zero (graph without edges); the rescaled Laplacian is undefined")]
    DegenerateSpectrum,
}

impl From<SparseError> for SpectralError {
    fn from(e: SparseError) -> Self {
        match e {
            SparseError::DimensionMismatch { expected, found } => SpectralError::DimensionMismatch { expected, found },
            other => panic!("unexpected sparse error: {other}"),
        }
    }
}

/// Symmetric edge weights keyed by `(lo, hi)` vertex pairs.
pub type EdgeWeights = BTreeMap<(usize, usize), f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct GraphLaplacian {
    laplacian: CsrMatrix,
    degree: Vec<f64>,
    adjacency: CsrMatrix,
    lambda_max: f64,
}

pub fn build_laplacian(topology: &Topology, weights: Option<&EdgeWeights>) -> Result<GraphLaplacian, SpectralError> {
    let n = topology.num_vertices();
    if let Some(w) = weights {
        for &(a, b) in w.keys() {
            if topology.edges().binary_search(&(a.min(b), a.max(b))).is_err() {
                return Err(SpectralError::UnknownEdge(a, b));
            }
        }
    }
    let mut weighted = Vec::with_capacity(topology.edges().len());
    for &(a, b) in topology.edges() {
        let w = match weights {
            None => 1.0,
            Some(map) => *map.get(&(a, b)).ok_or(SpectralError::MissingWeight(a, b))?,
        };
        weighted.push((a, b, w));
    }
    laplacian_from_edges(n, &weighted)
}

/// Laplacian of an arbitrary undirected weighted edge list (each edge once).
pub fn laplacian_from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<GraphLaplacian, SpectralError> {
    let mut adj = Vec::with_capacity(2 * edges.len());
    let mut degree = vec![0.0; n];
    for &(a, b, w) in edges {
        if !(w > 0.0 && w.is_finite()) {
            return Err(SpectralError::NonPositiveWeight(a, b, w));
        }
        if a >= n || b >= n || a == b {
            return Err(SpectralError::UnknownEdge(a, b));
        }
        adj.push((a, b, w));
        adj.push((b, a, w));
        degree[a] += w;
        degree[b] += w;
    }
    let adjacency = CsrMatrix::from_triplets(n, n, &adj).expect("edges in range");
    let mut lap: Vec<(usize, usize, f64)> = adj.iter().map(|&(a, b, w)| (a, b, -w)).collect();
    lap.extend(degree.iter().enumerate().map(|(i, &d)| (i, i, d)));
    let laplacian = CsrMatrix::from_triplets(n, n, &lap).expect("edges in range");
    let lambda_max = estimate_lambda_max(&laplacian, &degree);
    Ok(GraphLaplacian {
        laplacian,
        degree,
        adjacency,
        lambda_max,
    })
}

/// Power iteration to 1e-6 relative change, inflated by 1% and capped by the
/// Gershgorin bound `2 max(d)` (itself a certified upper bound).
fn estimate_lambda_max(lap: &CsrMatrix, degree: &[f64]) -> f64 {
    let n = lap.nrows();
    let gershgorin = 2.0 * degree.iter().cloned().fold(0.0, f64::max);
    if gershgorin == 0.0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x1a9_1ac1a2);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    normalize(&mut v);
    let mut lambda = 0.0;
    for _ in 0..20_000 {
        let w = lap.mul_vec(&v);
        let next: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
        v = w;
        let norm = normalize(&mut v);
        if norm == 0.0 {
            break;
        }
        if (next - lambda).abs() <= 1e-6 * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    (LAMBDA_MAX_INFLATION * lambda).min(gershgorin)
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

impl GraphLaplacian {
    pub fn laplacian(&self) -> &CsrMatrix {
        &self.laplacian
    }

    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adjacency
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn num_vertices(&self) -> usize {
        self.degree.len()
    }

    /// `out = (2/λmax)·L·x − x`.
    pub fn apply_rescaled(&self, x: &ArrayView2<f64>, out: &mut Array2<f64>) -> Result<(), SpectralError> {
        if self.lambda_max <= 0.0 {
            return Err(SpectralError::DegenerateSpectrum);
        }
        self.laplacian.mul_dense_into(x, out)?;
        let scale = 2.0 / self.lambda_max;
        Zip::from(out).and(x).for_each(|o, &xv| *o = scale * *o - xv);
        Ok(())
    }

    fn check_rows(&self, rows: usize) -> Result<(), SpectralError> {
        if rows != self.num_vertices() {
            return Err(SpectralError::DimensionMismatch {
                expected: self.num_vertices(),
                found: rows,
            });
        }
        Ok(())
    }
}

/// Chebyshev terms `[T_0(L̃)x, …, T_{order-1}(L̃)x]` by the three-term recurrence.
pub fn chebyshev_basis(
    lap: &GraphLaplacian,
    x: &ArrayView2<f64>,
    order: usize,
) -> Result<Vec<Array2<f64>>, SpectralError> {
    lap.check_rows(x.nrows())?;
    let mut terms: Vec<Array2<f64>> = Vec::with_capacity(order);
    if order == 0 {
        return Ok(terms);
    }
    terms.push(x.to_owned());
    if order == 1 {
        return Ok(terms);
    }
    let mut t1 = Array2::zeros(x.raw_dim());
    lap.apply_rescaled(x, &mut t1)?;
    terms.push(t1);
    for k in 2..order {
        let mut next = Array2::zeros(x.raw_dim());
        lap.apply_rescaled(&terms[k - 1].view(), &mut next)?;
        Zip::from(&mut next)
            .and(&terms[k - 2])
            .for_each(|n, &prev| *n = 2.0 * *n - prev);
        terms.push(next);
    }
    Ok(terms)
}

/// `Σ_k T_k(L̃)·h_k` by Clenshaw's recurrence (`order − 1` operator applications).
pub fn chebyshev_sum(lap: &GraphLaplacian, terms: &[Array2<f64>]) -> Result<Array2<f64>, SpectralError> {
    let Some(first) = terms.first() else {
        return Err(SpectralError::BadCoefficients);
    };
    for t in terms {
        lap.check_rows(t.nrows())?;
    }
    let order = terms.len();
    if order == 1 {
        return Ok(first.clone());
    }
    let dim = first.raw_dim();
    let mut b1 = Array2::<f64>::zeros(dim); // b_{k+1}
    let mut b2 = Array2::<f64>::zeros(dim); // b_{k+2}
    let mut tmp = Array2::<f64>::zeros(dim);
    for k in (1..order).rev() {
        lap.apply_rescaled(&b1.view(), &mut tmp)?;
        // b_k = h_k + 2 L̃ b_{k+1} − b_{k+2}
        Zip::from(&mut tmp)
            .and(&terms[k])
            .and(&b2)
            .for_each(|t, &h, &bb| *t = h + 2.0 * *t - bb);
        std::mem::swap(&mut b2, &mut b1);
        std::mem::swap(&mut b1, &mut tmp);
    }
    lap.apply_rescaled(&b1.view(), &mut tmp)?;
    Zip::from(&mut tmp)
        .and(&terms[0])
        .and(&b2)
        .for_each(|t, &h, &bb| *t = h + *t - bb);
    Ok(tmp)
}

/// Chebyshev expansion coefficients `α_0 … α_{r-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebCoeffs {
    coeffs: Vec<f64>,
}

impl ChebCoeffs {
    pub fn new(coeffs: Vec<f64>) -> Result<Self, SpectralError> {
        if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(SpectralError::BadCoefficients);
        }
        Ok(Self { coeffs })
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Scalar polynomial `Σ α_k T_k(t)`.
    pub fn eval(&self, t: f64) -> f64 {
        let (mut prev, mut cur) = (1.0, t);
        let mut acc = self.coeffs[0];
        for (k, &a) in self.coeffs.iter().enumerate().skip(1) {
            if k > 1 {
                let next = 2.0 * t * cur - prev;
                prev = cur;
                cur = next;
            }
            acc += a * cur;
        }
        acc
    }
}

/// Apply `Σ α_k T_k(L̃)` to every column of `signal`.
pub fn cheb_filter(
    lap: &GraphLaplacian,
    coeffs: &ChebCoeffs,
    signal: &ArrayView2<f64>,
) -> Result<Array2<f64>, SpectralError> {
    let terms = chebyshev_basis(lap, signal, coeffs.order())?;
    let mut out = Array2::zeros(signal.raw_dim());
    for (t, &a) in terms.iter().zip(coeffs.coeffs()) {
        out.scaled_add(a, t);
    }
    Ok(out)
}

/// Column-parallel [`cheb_filter`]; each column is bitwise identical to the
/// sequential result.
pub fn cheb_filter_exec(
    exec: Exec,
    lap: &GraphLaplacian,
    coeffs: &ChebCoeffs,
    signal: &ArrayView2<f64>,
) -> Result<Array2<f64>, SpectralError> {
    lap.check_rows(signal.nrows())?;
    let cols = exec.map_range(signal.ncols(), |c| {
        let col = signal.slice(s![.., c..c + 1]).to_owned();
        cheb_filter(lap, coeffs, &col.view())
    });
    let mut out = Array2::zeros(signal.raw_dim());
    for (c, col) in cols.into_iter().enumerate() {
        out.slice_mut(s![.., c..c + 1]).assign(&col?);
    }
    Ok(out)
}

/// Orthonormal eigenbasis of a Laplacian, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    pub eigenvalues: Array1<f64>,
    pub eigenvectors: Array2<f64>,
}

pub fn eigendecompose(lap: &GraphLaplacian) -> Result<EigenBasis, SpectralError> {
    eigendecompose_with_limit(lap, DEFAULT_DENSE_LIMIT)
}

pub fn eigendecompose_with_limit(lap: &GraphLaplacian, limit: usize) -> Result<EigenBasis, SpectralError> {
    let n = lap.num_vertices();
    if n > limit {
        return Err(SpectralError::TooLarge { n, limit });
    }
    let dense = lap.laplacian.to_dense();
    let m = DMatrix::from_fn(n, n, |i, j| dense[[i, j]]);
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = Array1::from_iter(order.iter().map(|&k| eig.eigenvalues[k]));
    let eigenvectors = Array2::from_shape_fn((n, n), |(i, j)| eig.eigenvectors[(i, order[j])]);
    Ok(EigenBasis {
        eigenvalues,
        eigenvectors,
    })
}

impl EigenBasis {
    fn check(&self, rows: usize) -> Result<(), SpectralError> {
        if rows != self.eigenvalues.len() {
            return Err(SpectralError::DimensionMismatch {
                expected: self.eigenvalues.len(),
                found: rows,
            });
        }
        Ok(())
    }

    /// Forward transform `Φᵀ f`.
    pub fn gft(&self, signal: &ArrayView2<f64>) -> Result<Array2<f64>, SpectralError> {
        self.check(signal.nrows())?;
        Ok(self.eigenvectors.t().dot(signal))
    }

    /// Inverse transform `Φ f̂`.
    pub fn igft(&self, coeffs: &ArrayView2<f64>) -> Result<Array2<f64>, SpectralError> {
        self.check(coeffs.nrows())?;
        Ok(self.eigenvectors.dot(coeffs))
    }

    /// `Φ · diag(h(λ_i)) · Φᵀ f` for an arbitrary spectral transfer function.
    pub fn spectral_filter(
        &self,
        transfer: impl Fn(f64) -> f64,
        signal: &ArrayView2<f64>,
    ) -> Result<Array2<f64>, SpectralError> {
        let mut hat = self.gft(signal)?;
        for (mut row, &lam) in hat.rows_mut().into_iter().zip(self.eigenvalues.iter()) {
            let h = transfer(lam);
            row.mapv_inplace(|v| v * h);
        }
        self.igft(&hat.view())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn triangle() -> Topology {
        Topology::new(3, vec![[0, 1, 2]]).unwrap()
    }

    #[test]
    fn triangle_is_complete_graph() {
        let lap = build_laplacian(&triangle(), None).unwrap();
        let l = lap.laplacian().to_dense();
        assert_eq!(l, array![[2.0, -1.0, -1.0], [-1.0, 2.0, -1.0], [-1.0, -1.0, 2.0]]);
        let eig = eigendecompose(&lap).unwrap();
        let ev = eig.eigenvalues.to_vec();
        assert!(ev[0].abs() < 1e-12);
        assert!((ev[1] - 3.0).abs() < 1e-12 && (ev[2] - 3.0).abs() < 1e-12);
        assert!(lap.lambda_max() >= 3.0 && lap.lambda_max() <= 3.0 * 1.01 + 1e-9);
    }

    #[test]
    fn weights_are_validated() {
        let t = triangle();
        let mut w = EdgeWeights::new();
        w.insert((0, 1), 1.0);
        w.insert((1, 2), 1.0);
        assert_eq!(
            build_laplacian(&t, Some(&w)).unwrap_err(),
            SpectralError::MissingWeight(0, 2)
        );
        w.insert((0, 2), -1.0);
        assert!(matches!(
            build_laplacian(&t, Some(&w)),
            Err(SpectralError::NonPositiveWeight(0, 2, _))
        ));
        w.insert((0, 2), 2.0);
        let lap = build_laplacian(&t, Some(&w)).unwrap();
        assert_eq!(lap.degree(), &[3.0, 2.0, 3.0]);
    }

    #[test]
    fn too_large_is_refused() {
        let m = crate::mesh::primitives::icosphere(1);
        let lap = build_laplacian(m.topology(), None).unwrap();
        let err = eigendecompose_with_limit(&lap, 10).unwrap_err();
        assert!(err.to_string().contains("Chebyshev"));
    }

    #[test]
    fn scalar_eval_matches_trig_form() {
        let c = ChebCoeffs::new(vec![0.3, -1.2, 0.7, 0.25]).unwrap();
        for &t in &[-1.0, -0.3, 0.0, 0.5, 1.0] {
            let th: f64 = f64::acos(t);
            let trig: f64 = c
                .coeffs()
                .iter()
                .enumerate()
                .map(|(k, a)| a * (k as f64 * th).cos())
                .sum();
            assert!((c.eval(t) - trig).abs() < 1e-12);
        }
        assert!(ChebCoeffs::new(vec![]).is_err());
    }

    #[test]
    fn clenshaw_matches_direct_sum() {
        let m = crate::mesh::primitives::icosphere(1);
        let lap = build_laplacian(m.topology(), None).unwrap();
        let x = m.vertices().clone();
        let basis = chebyshev_basis(&lap, &x.view(), 4).unwrap();
        let hs: Vec<Array2<f64>> = (0..4).map(|k| x.mapv(|v| v * (k as f64 + 0.5))).collect();
        let mut direct = Array2::zeros(x.raw_dim());
        for k in 0..4 {
            let t = chebyshev_basis(&lap, &hs[k].view(), k + 1).unwrap();
            direct += &t[k];
        }
        let fast = chebyshev_sum(&lap, &hs).unwrap();
        let err = (&fast - &direct).mapv(f64::abs).fold(0.0, |a: f64, &b| a.max(b));
        assert!(err < 1e-12, "{err}");
        assert_eq!(basis.len(), 4);
    }
}

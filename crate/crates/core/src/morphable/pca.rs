//! Linear shape basis by PCA over aligned registrations.

use std::sync::Arc;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::MorphError;
use crate::mesh::{Topology, TriMesh};

/// Mean shape, orthonormal components (flattened `3n`) and their standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeBasis {
    pub mean: TriMesh,
    /// `K × 3n`, rows orthonormal.
    pub components: Array2<f64>,
    pub stds: Array1<f64>,
}

impl ShapeBasis {
    pub fn num_components(&self) -> usize {
        self.components.nrows()
    }

    pub fn topology(&self) -> &Arc<Topology> {
        self.mean.topology()
    }

    /// Component `k` as an `n × 3` displacement field.
    pub fn component(&self, k: usize) -> Array2<f64> {
        let n = self.mean.num_vertices();
        self.components
            .row(k)
            .to_owned()
            .into_shape_with_order((n, 3))
            .expect("component length 3n")
    }

    /// `mean + Σ c_k·σ_k·component_k` (missing trailing coefficients are zero).
    pub fn synthesize_vertices(&self, coeffs: &ArrayView1<f64>) -> Result<Array2<f64>, MorphError> {
        if coeffs.len() > self.num_components() {
            return Err(MorphError::Shape(format!(
                "{} coefficients for {} components",
                coeffs.len(),
                self.num_components()
            )));
        }
        let mut flat = Array1::from_iter(self.mean.vertices().iter().copied());
        for (k, &c) in coeffs.iter().enumerate() {
            flat.scaled_add(c * self.stds[k], &self.components.row(k));
        }
        let n = self.mean.num_vertices();
        Ok(flat.into_shape_with_order((n, 3)).expect("length 3n"))
    }

    /// Coefficients (in units of σ_k) of the orthogonal projection onto the basis.
    pub fn project(&self, vertices: &ArrayView2<f64>) -> Result<Array1<f64>, MorphError> {
        if vertices.dim() != self.mean.vertices().dim() {
            return Err(MorphError::Shape(format!(
                "mesh {:?} vs basis {:?}",
                vertices.dim(),
                self.mean.vertices().dim()
            )));
        }
        let d = Array1::from_iter((vertices - self.mean.vertices()).iter().copied());
        Ok(self.components.dot(&d) / &self.stds)
    }
}

pub fn pca_synthesize(basis: &ShapeBasis, coeffs: &ArrayView1<f64>) -> Result<TriMesh, MorphError> {
    Ok(basis.mean.with_vertices(basis.synthesize_vertices(coeffs)?)?)
}

/// Principal components of the flattened meshes, by descending variance.
/// Computed from the `m × m` Gram matrix of the centered data.
pub fn pca_fit(meshes: &[TriMesh], k: usize) -> Result<ShapeBasis, MorphError> {
    let m = meshes.len();
    if m < k + 1 || k == 0 {
        return Err(MorphError::Degenerate(format!(
            "{m} meshes cannot support {k} components"
        )));
    }
    let topo = meshes[0].topology().clone();
    if let Some(i) = meshes.iter().position(|x| x.topology().as_ref() != topo.as_ref()) {
        return Err(MorphError::TopologyMismatch(i));
    }
    let n3 = 3 * meshes[0].num_vertices();
    let mut data = Array2::zeros((m, n3));
    for (mut r, mesh) in data.rows_mut().into_iter().zip(meshes) {
        r.assign(&Array1::from_iter(mesh.vertices().iter().copied()));
    }
    let mean_flat = data.mean_axis(Axis(0)).expect("nonempty");
    let centered = &data - &mean_flat;
    let gram = centered.dot(&centered.t());
    let g = DMatrix::from_fn(m, m, |i, j| gram[[i, j]]);
    let eig = g.symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let mut comps = Array2::zeros((k, n3));
    let mut stds = Array1::zeros(k);
    for (row, &idx) in order.iter().take(k).enumerate() {
        let lam = eig.eigenvalues[idx];
        if !(lam > 1e-12 * top) || top == 0.0 {
            return Err(MorphError::Degenerate(format!(
                "data has rank {row}, fewer than the {k} requested components"
            )));
        }
        let u = Array1::from_iter(eig.eigenvectors.column(idx).iter().copied());
        let mut c = centered.t().dot(&u);
        // re-orthogonalize against earlier components (modified Gram-Schmidt)
        for prev in 0..row {
            let p = comps.row(prev).to_owned();
            let d = c.dot(&p);
            c.scaled_add(-d, &p);
        }
        let norm = c.dot(&c).sqrt();
        comps.row_mut(row).assign(&(c / norm));
        stds[row] = (lam / (m - 1) as f64).sqrt();
    }
    let n = meshes[0].num_vertices();
    let mean = TriMesh::new(topo, mean_flat.into_shape_with_order((n, 3)).expect("3n"))?;
    Ok(ShapeBasis {
        mean,
        components: comps,
        stds,
    })
}

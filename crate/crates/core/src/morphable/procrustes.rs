//! Similarity Procrustes and generalized Procrustes alignment.

use nalgebra::{Matrix3, Vector3};
use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::rotation::{axis_angle, to_axis_angle};
use super::MorphError;
use crate::mesh::TriMesh;

/// `x ↦ s·R·x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

/// Serialized form: rotation as an axis-angle vector.
#[derive(Serialize, Deserialize)]
struct SimilarityRepr {
    scale: f64,
    rot: [f64; 3],
    t: [f64; 3],
}

impl Serialize for Similarity {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        SimilarityRepr {
            scale: self.scale,
            rot: to_axis_angle(&self.rotation),
            t: [self.translation.x, self.translation.y, self.translation.z],
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Similarity {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = SimilarityRepr::deserialize(d)?;
        Ok(Self {
            scale: r.scale,
            rotation: axis_angle(r.rot),
            translation: Vector3::from(r.t),
        })
    }
}

impl Default for Similarity {
    fn default() -> Self {
        Self::identity()
    }
}

impl Similarity {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply_point(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.rotation * p * self.scale + self.translation
    }

    /// Applies to every row of an `m × 3` array.
    pub fn apply(&self, points: &ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(points.raw_dim());
        for (src, mut dst) in points.rows().into_iter().zip(out.rows_mut()) {
            let q = self.apply_point(Vector3::new(src[0], src[1], src[2]));
            dst[0] = q.x;
            dst[1] = q.y;
            dst[2] = q.z;
        }
        out
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            scale: 1.0 / self.scale,
            rotation: rt,
            translation: -(rt * self.translation) / self.scale,
        }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Similarity) -> Self {
        Self {
            scale: self.scale * other.scale,
            rotation: self.rotation * other.rotation,
            translation: self.apply_point(other.translation),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcrustesFit {
    pub transform: Similarity,
    /// Sum of squared distances after alignment.
    pub residual: f64,
}

fn centroid(x: &ArrayView2<f64>) -> Vector3<f64> {
    let c = x.mean_axis(Axis(0)).expect("nonempty");
    Vector3::new(c[0], c[1], c[2])
}

fn row(x: &ArrayView2<f64>, i: usize) -> Vector3<f64> {
    Vector3::new(x[[i, 0]], x[[i, 1]], x[[i, 2]])
}

/// Proper rotation `R` maximizing `Σ ⟨R·a_i, b_i⟩` from the cross-covariance
/// `H = Σ b_i a_iᵀ`, with reflection correction.
fn rotation_from_covariance(h: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = h.svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v requested");
    let d = (u * vt).determinant().signum();
    let mut s = Matrix3::identity();
    s[(2, 2)] = d;
    // nalgebra sorts singular values descending, so the correction hits the smallest
    u * s * vt
}

fn check_shapes(source: &ArrayView2<f64>, target: &ArrayView2<f64>) -> Result<(), MorphError> {
    if source.ncols() != 3 || target.ncols() != 3 || source.nrows() != target.nrows() {
        return Err(MorphError::Shape(format!(
            "point sets {:?} and {:?}",
            source.dim(),
            target.dim()
        )));
    }
    if source.nrows() < 3 {
        return Err(MorphError::Degenerate("need at least 3 points".into()));
    }
    Ok(())
}

/// Least-squares similarity taking `source` onto `target`.
pub fn procrustes_similarity(source: &ArrayView2<f64>, target: &ArrayView2<f64>) -> Result<ProcrustesFit, MorphError> {
    check_shapes(source, target)?;
    let n = source.nrows();
    let (ms, mt) = (centroid(source), centroid(target));
    let mut h = Matrix3::zeros();
    let mut scatter = Matrix3::zeros();
    let mut var_s = 0.0;
    for i in 0..n {
        let a = row(source, i) - ms;
        let b = row(target, i) - mt;
        h += b * a.transpose();
        scatter += a * a.transpose();
        var_s += a.norm_squared();
    }
    let sv = scatter.symmetric_eigenvalues();
    let mut sv: Vec<f64> = sv.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if !(sv[0] > 0.0) || sv[1] <= 1e-12 * sv[0] {
        return Err(MorphError::Degenerate(
            "source points are collinear or coincident".into(),
        ));
    }
    let r = rotation_from_covariance(&h);
    let scale = (r.transpose() * h).trace() / var_s;
    let t = mt - r * ms * scale;
    let transform = Similarity {
        scale,
        rotation: r,
        translation: t,
    };
    let mut residual = 0.0;
    for i in 0..n {
        residual += (transform.apply_point(row(source, i)) - row(target, i)).norm_squared();
    }
    Ok(ProcrustesFit { transform, residual })
}

/// Rotation about the origin taking centered `source` closest to centered `target`.
pub(crate) fn rotation_fit(source: &ArrayView2<f64>, target: &ArrayView2<f64>) -> Matrix3<f64> {
    let mut h = Matrix3::zeros();
    for i in 0..source.nrows() {
        h += row(target, i) * row(source, i).transpose();
    }
    rotation_from_covariance(&h)
}

/// Rows multiplied by `r` (each row `p` becomes `r·p`).
pub(crate) fn rotate_rows(x: &ArrayView2<f64>, r: &Matrix3<f64>) -> Array2<f64> {
    let rt = Array2::from_shape_fn((3, 3), |(i, j)| r[(j, i)]);
    x.dot(&rt)
}

/// Mean distance over all vertex pairs and its gradient.
pub fn mean_pairwise_distance(x: &ArrayView2<f64>) -> (f64, Array2<f64>) {
    let n = x.nrows();
    let mut grad = Array2::zeros((n, 3));
    if n < 2 {
        return (0.0, grad);
    }
    let pts: Vec<[f64; 3]> = x.rows().into_iter().map(|r| [r[0], r[1], r[2]]).collect();
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let d = [pts[i][0] - pts[j][0], pts[i][1] - pts[j][1], pts[i][2] - pts[j][2]];
            let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            total += len;
            if len > 0.0 {
                for k in 0..3 {
                    grad[[i, k]] += d[k] / len;
                    grad[[j, k]] -= d[k] / len;
                }
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    grad /= pairs;
    (total / pairs, grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpaConfig {
    pub max_iterations: usize,
    /// Stop once the mean moves less than this (Frobenius norm).
    pub tolerance: f64,
}

impl Default for GpaConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GpaResult {
    pub meshes: Vec<TriMesh>,
    pub mean: TriMesh,
    /// `Σ‖x_i − mean‖²` after each iteration.
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

fn center(x: &ArrayView2<f64>) -> Array2<f64> {
    let c = x.mean_axis(Axis(0)).expect("nonempty");
    x - &c
}

fn frob(x: &ArrayView2<f64>) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Principal axes of the mean as rows of a proper rotation. Each of the first
/// two axes points toward the positive third moment; the third completes a
/// right-handed frame.
fn canonical_frame(mean: &ArrayView2<f64>) -> Matrix3<f64> {
    let mut c = Matrix3::zeros();
    for i in 0..mean.nrows() {
        let p = row(mean, i);
        c += p * p.transpose();
    }
    let eig = c.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut axes: Vec<Vector3<f64>> = order.iter().map(|&k| eig.eigenvectors.column(k).into_owned()).collect();
    for axis in axes.iter_mut().take(2) {
        let m3: f64 = (0..mean.nrows()).map(|i| row(mean, i).dot(axis).powi(3)).sum();
        let flip = if m3 == 0.0 {
            // symmetric along this axis: fall back to the largest component
            let k = axis.iamax();
            axis[k] < 0.0
        } else {
            m3 < 0.0
        };
        if flip {
            *axis = -*axis;
        }
    }
    axes[2] = axes[0].cross(&axes[1]);
    Matrix3::from_rows(&[axes[0].transpose(), axes[1].transpose(), axes[2].transpose()])
}

/// Iterative alignment to the evolving mean. Outputs are centered, rotated
/// into the mean's principal-axis frame, and scaled so that each shape agrees
/// with the unit-centroid-size mean to first order in mean inter-vertex
/// distance; hence residuals from the mean carry no first-order size change.
pub fn generalized_procrustes(meshes: &[TriMesh]) -> Result<GpaResult, MorphError> {
    generalized_procrustes_with(meshes, GpaConfig::default())
}

pub fn generalized_procrustes_with(meshes: &[TriMesh], config: GpaConfig) -> Result<GpaResult, MorphError> {
    if meshes.len() < 2 {
        return Err(MorphError::Degenerate("need at least 2 meshes".into()));
    }
    let topo = meshes[0].topology().clone();
    if let Some(i) = meshes.iter().position(|m| m.topology().as_ref() != topo.as_ref()) {
        return Err(MorphError::TopologyMismatch(i));
    }
    let mut xs: Vec<Array2<f64>> = Vec::with_capacity(meshes.len());
    for m in meshes {
        let c = center(&m.vertices().view());
        let s = frob(&c.view());
        if !(s > 0.0) {
            return Err(MorphError::Degenerate("mesh collapsed to a point".into()));
        }
        xs.push(c / s);
    }
    let mut mean = xs[0].clone();
    let mut residuals = Vec::new();
    let mut iterations = 0;
    for _ in 0..config.max_iterations {
        iterations += 1;
        let (md, g) = mean_pairwise_distance(&mean.view());
        for x in xs.iter_mut() {
            let r = rotation_fit(&x.view(), &mean.view());
            *x = rotate_rows(&x.view(), &r);
            let gx: f64 = (&g * &*x).sum();
            if !(gx > 0.0) {
                return Err(MorphError::Degenerate("shape has no extent along the mean".into()));
            }
            *x *= md / gx;
        }
        let mut next = Array2::zeros(mean.raw_dim());
        for x in &xs {
            next += x;
        }
        next /= xs.len() as f64;
        let nn = frob(&next.view());
        next /= nn;
        let moved = frob(&(&next - &mean).view());
        mean = next;
        residuals.push(xs.iter().map(|x| (x - &mean).mapv(|v| v * v).sum()).sum());
        if moved < config.tolerance {
            break;
        }
    }
    let frame = canonical_frame(&mean.view());
    let mean = rotate_rows(&mean.view(), &frame);
    let out = xs
        .iter()
        .map(|x| TriMesh::new(topo.clone(), rotate_rows(&x.view(), &frame)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GpaResult {
        meshes: out,
        mean: TriMesh::new(topo, mean)?,
        residuals,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives;
    use ndarray::array;
    use std::f64::consts::FRAC_PI_2;

    fn cloud() -> Array2<f64> {
        array![
            [0.0, 0.0, 0.0],
            [1.0, 0.2, -0.3],
            [0.4, 2.0, 0.1],
            [-0.5, 0.3, 1.7],
            [0.9, -1.1, 0.6]
        ]
    }

    #[test]
    fn identity_fit() {
        let x = cloud();
        let f = procrustes_similarity(&x.view(), &x.view()).unwrap();
        assert!((f.transform.scale - 1.0).abs() < 1e-12);
        assert!((f.transform.rotation - Matrix3::identity()).norm() < 1e-12);
        assert!(f.transform.translation.norm() < 1e-12);
        assert!(f.residual < 1e-20);
    }

    #[test]
    fn recovers_scaled_quarter_turn() {
        let x = cloud();
        let truth = Similarity {
            scale: 2.0,
            rotation: super::super::rotation::rot_z(FRAC_PI_2),
            translation: Vector3::new(1.0, 0.0, 0.0),
        };
        let y = truth.apply(&x.view());
        let f = procrustes_similarity(&x.view(), &y.view()).unwrap();
        assert!((f.transform.scale - 2.0).abs() < 1e-12);
        assert!((f.transform.rotation - truth.rotation).norm() < 1e-12);
        assert!((f.transform.translation - truth.translation).norm() < 1e-12);
        assert!(f.residual < 1e-10);
    }

    #[test]
    fn collinear_is_rank_error() {
        let x = array![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]];
        assert!(matches!(
            procrustes_similarity(&x.view(), &x.view()),
            Err(MorphError::Degenerate(_))
        ));
    }

    #[test]
    fn similarity_inverse_composes_to_identity() {
        let s = Similarity {
            scale: 1.7,
            rotation: axis_angle([0.2, -0.4, 0.9]),
            translation: Vector3::new(0.1, 2.0, -3.0),
        };
        let id = s.compose(&s.inverse());
        assert!((id.scale - 1.0).abs() < 1e-14);
        assert!((id.rotation - Matrix3::identity()).norm() < 1e-14);
        assert!(id.translation.norm() < 1e-14);
    }

    #[test]
    fn gpa_on_similar_copies() {
        let base = primitives::icosphere(1);
        let mut v = base.vertices().clone();
        for (i, mut r) in v.rows_mut().into_iter().enumerate() {
            r[0] *= 1.0 + 0.3 * (i as f64 * 0.7).sin().abs();
        }
        let base = base.with_vertices(v).unwrap();
        let meshes: Vec<TriMesh> = (0..4)
            .map(|k| {
                let s = Similarity {
                    scale: 0.5 + k as f64,
                    rotation: axis_angle([0.3 * k as f64, 1.0 - 0.2 * k as f64, 0.1]),
                    translation: Vector3::new(k as f64, -2.0, 0.5),
                };
                base.with_vertices(s.apply(&base.vertices().view())).unwrap()
            })
            .collect();
        let out = generalized_procrustes(&meshes).unwrap();
        for m in &out.meshes {
            let d = m.vertices() - out.meshes[0].vertices();
            assert!(d.iter().all(|v| v.abs() < 1e-8));
        }
        let c = out.mean.centroid();
        assert!(c.iter().all(|v| v.abs() < 1e-12));
    }
}

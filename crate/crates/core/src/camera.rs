//! Weak-perspective camera: rotate, drop depth, scale, translate.
//!
//! Pixel convention: origin top-left, +x right, +y down. The camera rotation
//! maps model axes into that frame.

use nalgebra::{Matrix2, Vector3};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::morphable::rotation::{axis_angle, axis_angle_jacobian};

#[derive(Debug, thiserror::Error)]
pub enum CameraError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("degenerate keypoints: {0}")]
    Degenerate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakPerspectiveCamera {
    /// Pixels per model unit.
    pub scale: f64,
    /// Axis-angle rotation.
    pub rot: [f64; 3],
    /// Image translation in pixels.
    pub t: [f64; 2],
}

impl Default for WeakPerspectiveCamera {
    fn default() -> Self {
        Self {
            scale: 1.0,
            rot: [0.0; 3],
            t: [0.0; 2],
        }
    }
}

fn check_points(points: &ArrayView2<f64>) -> Result<(), CameraError> {
    if points.ncols() != 3 {
        return Err(CameraError::Shape(format!(
            "points must be m x 3, got {:?}",
            points.dim()
        )));
    }
    Ok(())
}

/// `s·Π(R·p) + t` for every row.
pub fn project(cam: &WeakPerspectiveCamera, points: &ArrayView2<f64>) -> Result<Array2<f64>, CameraError> {
    check_points(points)?;
    let r = axis_angle(cam.rot);
    let mut out = Array2::zeros((points.nrows(), 2));
    for (p, mut q) in points.rows().into_iter().zip(out.rows_mut()) {
        let v = r * Vector3::new(p[0], p[1], p[2]);
        q[0] = cam.scale * v.x + cam.t[0];
        q[1] = cam.scale * v.y + cam.t[1];
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeypointLoss {
    pub value: f64,
    pub grad_scale: f64,
    pub grad_rot: [f64; 3],
    pub grad_t: [f64; 2],
    /// `J × 3`.
    pub grad_joints: Array2<f64>,
}

/// Mean absolute reprojection error over the coordinates of visible keypoints,
/// with exact (sub)gradients. No visible keypoints gives zero loss and gradients.
pub fn keypoint_loss(
    cam: &WeakPerspectiveCamera,
    joints: &ArrayView2<f64>,
    observed: &ArrayView2<f64>,
    visible: &[bool],
) -> Result<KeypointLoss, CameraError> {
    check_points(joints)?;
    let j = joints.nrows();
    if observed.dim() != (j, 2) || visible.len() != j {
        return Err(CameraError::Shape(format!(
            "{j} joints, observations {:?}, {} visibility flags",
            observed.dim(),
            visible.len()
        )));
    }
    let mut out = KeypointLoss {
        value: 0.0,
        grad_scale: 0.0,
        grad_rot: [0.0; 3],
        grad_t: [0.0; 2],
        grad_joints: Array2::zeros((j, 3)),
    };
    let count = 2 * visible.iter().filter(|&&v| v).count();
    if count == 0 {
        return Ok(out);
    }
    let inv = 1.0 / count as f64;
    let r = axis_angle(cam.rot);
    let dr = axis_angle_jacobian(cam.rot);
    for i in (0..j).filter(|&i| visible[i]) {
        let p = Vector3::new(joints[[i, 0]], joints[[i, 1]], joints[[i, 2]]);
        let v = r * p;
        let q = [cam.scale * v.x + cam.t[0], cam.scale * v.y + cam.t[1]];
        for c in 0..2 {
            let d = q[c] - observed[[i, c]];
            out.value += d.abs() * inv;
            let g = if d > 0.0 {
                inv
            } else if d < 0.0 {
                -inv
            } else {
                0.0
            };
            if g == 0.0 {
                continue;
            }
            out.grad_t[c] += g;
            out.grad_scale += g * v[c];
            for (k, dk) in dr.iter().enumerate() {
                out.grad_rot[k] += g * cam.scale * (dk * p)[c];
            }
            for a in 0..3 {
                out.grad_joints[[i, a]] += g * cam.scale * r[(c, a)];
            }
        }
    }
    Ok(out)
}

/// Rotation-free initializer: with `R = I`, the least-squares scale and
/// translation mapping the joints' xy coordinates onto the observations.
pub fn fit_camera(joints: &ArrayView2<f64>, observed: &ArrayView2<f64>) -> Result<WeakPerspectiveCamera, CameraError> {
    check_points(joints)?;
    let j = joints.nrows();
    if observed.dim() != (j, 2) {
        return Err(CameraError::Shape(format!(
            "{j} joints, observations {:?}",
            observed.dim()
        )));
    }
    if j < 3 {
        return Err(CameraError::Degenerate("need at least 3 keypoints".into()));
    }
    let n = j as f64;
    let (mut px, mut py, mut qx, mut qy) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..j {
        px += joints[[i, 0]];
        py += joints[[i, 1]];
        qx += observed[[i, 0]];
        qy += observed[[i, 1]];
    }
    let (px, py, qx, qy) = (px / n, py / n, qx / n, qy / n);
    let mut scatter = Matrix2::<f64>::zeros();
    let mut cross = 0.0;
    for i in 0..j {
        let a = [joints[[i, 0]] - px, joints[[i, 1]] - py];
        let b = [observed[[i, 0]] - qx, observed[[i, 1]] - qy];
        scatter[(0, 0)] += a[0] * a[0];
        scatter[(0, 1)] += a[0] * a[1];
        scatter[(1, 1)] += a[1] * a[1];
        cross += a[0] * b[0] + a[1] * b[1];
    }
    scatter[(1, 0)] = scatter[(0, 1)];
    let ev: nalgebra::Vector2<f64> = scatter.symmetric_eigenvalues();
    let (lo, hi) = (ev[0].min(ev[1]), ev[0].max(ev[1]));
    if !(hi > 0.0) || lo <= 1e-12 * hi {
        return Err(CameraError::Degenerate(
            "keypoints are collinear in the image plane".into(),
        ));
    }
    let scale = cross / scatter.trace();
    if !(scale > 0.0) {
        return Err(CameraError::Degenerate("best-fit scale is not positive".into()));
    }
    Ok(WeakPerspectiveCamera {
        scale,
        rot: [0.0; 3],
        t: [qx - scale * px, qy - scale * py],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn orthographic_drop_z() {
        let q = project(&WeakPerspectiveCamera::default(), &array![[0.3, -0.2, 7.0]].view()).unwrap();
        assert_eq!(q, array![[0.3, -0.2]]);
        let cam = WeakPerspectiveCamera {
            scale: 2.0,
            rot: [0.0; 3],
            t: [1.0, -1.0],
        };
        let q = project(&cam, &array![[0.5, 0.25, 3.0]].view()).unwrap();
        assert_eq!(q, array![[2.0, -0.5]]);
    }

    #[test]
    fn loss_mean_convention() {
        let joints = array![[0.0, 0.0, 0.0], [1.0, 1.0, 0.0]];
        let obs = array![[3.0, 4.0], [1.0, 1.0]];
        let l = keypoint_loss(
            &WeakPerspectiveCamera::default(),
            &joints.view(),
            &obs.view(),
            &[true, true],
        )
        .unwrap();
        assert!((l.value - 1.75).abs() < 1e-15);
        let none = keypoint_loss(
            &WeakPerspectiveCamera::default(),
            &joints.view(),
            &obs.view(),
            &[false, false],
        )
        .unwrap();
        assert_eq!(none.value, 0.0);
        assert_eq!(none.grad_scale, 0.0);
    }

    #[test]
    fn fit_recovers_scale_and_shift() {
        let joints = array![[0.0, 0.0, 1.0], [1.0, 0.0, -2.0], [0.0, 2.0, 0.5], [1.5, 1.0, 0.0]];
        let truth = WeakPerspectiveCamera {
            scale: 5.0,
            rot: [0.0; 3],
            t: [10.0, 20.0],
        };
        let obs = project(&truth, &joints.view()).unwrap();
        let cam = fit_camera(&joints.view(), &obs.view()).unwrap();
        assert!((cam.scale - 5.0).abs() < 1e-10);
        assert!((cam.t[0] - 10.0).abs() < 1e-10 && (cam.t[1] - 20.0).abs() < 1e-10);
        let line = array![[0.0, 0.0, 0.0], [1.0, 1.0, 0.0], [2.0, 2.0, 5.0]];
        assert!(fit_camera(&line.view(), &obs.slice(ndarray::s![..3, ..])).is_err());
    }
}

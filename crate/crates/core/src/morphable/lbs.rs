//! Kinematic trees, forward kinematics and linear blend skinning.

use nalgebra::{Matrix3, Vector3};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::procrustes::Similarity;
use super::rotation::euler_xyz;
use super::MorphError;
use crate::mesh::{joint_positions, JointSpec, TriMesh};

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicTree {
    /// Parent per joint, `-1` for the root. Parents precede children.
    pub parents: Vec<i64>,
    /// Rest-pose pivot of each joint, `J × 3`.
    pub rest: Array2<f64>,
    /// Skinning weights, `n × J`, rows nonnegative and summing to one.
    pub weights: Array2<f64>,
}

impl KinematicTree {
    pub fn new(parents: Vec<i64>, rest: Array2<f64>, weights: Array2<f64>) -> Result<Self, MorphError> {
        let t = Self { parents, rest, weights };
        t.validate()?;
        Ok(t)
    }

    pub fn num_joints(&self) -> usize {
        self.parents.len()
    }

    pub fn validate(&self) -> Result<(), MorphError> {
        let j = self.parents.len();
        if j == 0 {
            return Err(MorphError::Rig("tree has no joints".into()));
        }
        for (i, &p) in self.parents.iter().enumerate() {
            if p >= i as i64 || p < -1 || (p == -1) != (i == 0) {
                return Err(MorphError::Rig(format!(
                    "joint {i} has parent {p}; the root must be joint 0 and parents must precede children"
                )));
            }
        }
        if self.rest.dim() != (j, 3) || self.weights.ncols() != j {
            return Err(MorphError::Rig(format!(
                "rest {:?} / weights {:?} disagree with {j} joints",
                self.rest.dim(),
                self.weights.dim()
            )));
        }
        for (v, row) in self.weights.rows().into_iter().enumerate() {
            let s: f64 = row.sum();
            if (s - 1.0).abs() > 1e-10 || row.iter().any(|&w| w < 0.0 || !w.is_finite()) {
                return Err(MorphError::Rig(format!(
                    "weights of vertex {v} do not form a partition of unity"
                )));
            }
        }
        Ok(())
    }

    /// Copy with rest pivots taken as ring means of `mesh`, one ring per joint.
    pub fn with_rest_from(&self, mesh: &TriMesh, rings: &[JointSpec]) -> Result<Self, MorphError> {
        if rings.len() != self.num_joints() {
            return Err(MorphError::Rig(format!(
                "{} skeleton rings for {} joints",
                rings.len(),
                self.num_joints()
            )));
        }
        Ok(Self {
            parents: self.parents.clone(),
            rest: joint_positions(mesh, rings)?,
            weights: self.weights.clone(),
        })
    }

    /// World transforms `(A_j, b_j)` relative to rest: `x ↦ A_j·x + b_j`.
    pub fn forward_kinematics(&self, angles: &ArrayView2<f64>) -> Vec<(Matrix3<f64>, Vector3<f64>)> {
        let mut out: Vec<(Matrix3<f64>, Vector3<f64>)> = Vec::with_capacity(self.num_joints());
        for j in 0..self.num_joints() {
            let r = euler_xyz([angles[[j, 0]], angles[[j, 1]], angles[[j, 2]]]);
            let p = Vector3::new(self.rest[[j, 0]], self.rest[[j, 1]], self.rest[[j, 2]]);
            let local = (r, p - r * p);
            let g = if self.parents[j] < 0 {
                local
            } else {
                let (pa, pb) = out[self.parents[j] as usize];
                (pa * local.0, pa * local.1 + pb)
            };
            out.push(g);
        }
        out
    }
}

/// Per-joint Euler angles plus a global similarity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseParams {
    /// `J × 3`, radians, XYZ intrinsic.
    pub angles: Array2<f64>,
    pub global: Similarity,
}

impl PoseParams {
    pub fn rest(num_joints: usize) -> Self {
        Self {
            angles: Array2::zeros((num_joints, 3)),
            global: Similarity::identity(),
        }
    }
}

/// Skinned vertices of `rest` under `pose` (without building a mesh).
pub fn lbs_vertices(
    rest: &ArrayView2<f64>,
    tree: &KinematicTree,
    pose: &PoseParams,
) -> Result<Array2<f64>, MorphError> {
    if tree.weights.nrows() != rest.nrows() {
        return Err(MorphError::Shape(format!(
            "{} weight rows for {} vertices",
            tree.weights.nrows(),
            rest.nrows()
        )));
    }
    if pose.angles.dim() != (tree.num_joints(), 3) {
        return Err(MorphError::Shape(format!(
            "pose angles {:?} for {} joints",
            pose.angles.dim(),
            tree.num_joints()
        )));
    }
    if !(pose.global.scale > 0.0) || pose.angles.iter().any(|a| !a.is_finite()) {
        return Err(MorphError::Shape(
            "pose must have finite angles and positive scale".into(),
        ));
    }
    let g = tree.forward_kinematics(&pose.angles.view());
    let mut out = Array2::zeros(rest.raw_dim());
    for (v, mut dst) in out.rows_mut().into_iter().enumerate() {
        let x = Vector3::new(rest[[v, 0]], rest[[v, 1]], rest[[v, 2]]);
        let mut acc = Vector3::zeros();
        for (j, (a, b)) in g.iter().enumerate() {
            let w = tree.weights[[v, j]];
            if w != 0.0 {
                acc += (a * x + b) * w;
            }
        }
        let y = pose.global.apply_point(acc);
        dst[0] = y.x;
        dst[1] = y.y;
        dst[2] = y.z;
    }
    Ok(out)
}

pub fn lbs_pose(rest: &TriMesh, tree: &KinematicTree, pose: &PoseParams) -> Result<TriMesh, MorphError> {
    Ok(rest.with_vertices(lbs_vertices(&rest.vertices().view(), tree, pose)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives;
    use ndarray::array;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn quarter_turn_about_single_joint() {
        let tree = KinematicTree::new(vec![-1], array![[2.0, 1.0, 0.0]], array![[1.0]]).unwrap();
        let rest = array![[3.0, 1.0, 0.0]];
        let mut pose = PoseParams::rest(1);
        pose.angles[[0, 2]] = FRAC_PI_2;
        let out = lbs_vertices(&rest.view(), &tree, &pose).unwrap();
        let off = [out[[0, 0]] - 2.0, out[[0, 1]] - 1.0, out[[0, 2]]];
        assert!((off[0]).abs() < 1e-15 && (off[1] - 1.0).abs() < 1e-15 && off[2].abs() < 1e-15);
    }

    #[test]
    fn zero_pose_is_rest() {
        let m = primitives::icosphere(1);
        let w = Array2::from_shape_fn((42, 2), |(v, j)| {
            if j == 0 {
                (v % 3) as f64 / 2.0
            } else {
                1.0 - (v % 3) as f64 / 2.0
            }
        });
        let tree = KinematicTree::new(vec![-1, 0], array![[0.0, 0.0, 0.0], [0.0, 0.5, 0.0]], w).unwrap();
        let out = lbs_pose(&m, &tree, &PoseParams::rest(2)).unwrap();
        assert_eq!(out.vertices(), m.vertices());
    }

    #[test]
    fn rejects_bad_weights_and_cycles() {
        assert!(KinematicTree::new(vec![-1], array![[0.0, 0.0, 0.0]], array![[0.5]]).is_err());
        assert!(KinematicTree::new(vec![1, 0], Array2::zeros((2, 3)), array![[1.0, 0.0]]).is_err());
    }
}

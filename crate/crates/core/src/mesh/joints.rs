//! Joints as the mean of the vertex ring that encircles them.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{MeshError, TriMesh};

/// One joint and the ring of vertices whose centroid locates it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointSpec {
    pub joint_id: i64,
    #[serde(rename = "ring")]
    pub ring_vertex_ids: Vec<usize>,
}

/// Row `j` is the arithmetic mean of joint `j`'s ring vertices.
pub fn joint_positions(mesh: &TriMesh, joints: &[JointSpec]) -> Result<Array2<f64>, MeshError> {
    check_joint_specs(joints, mesh.num_vertices())?;
    let v = mesh.vertices();
    let mut out = Array2::zeros((joints.len(), 3));
    for (j, spec) in joints.iter().enumerate() {
        let inv = 1.0 / spec.ring_vertex_ids.len() as f64;
        for &i in &spec.ring_vertex_ids {
            for k in 0..3 {
                out[[j, k]] += v[[i, k]];
            }
        }
        for k in 0..3 {
            out[[j, k]] *= inv;
        }
    }
    Ok(out)
}

pub(crate) fn check_joint_specs(joints: &[JointSpec], num_vertices: usize) -> Result<(), MeshError> {
    for spec in joints {
        if spec.ring_vertex_ids.is_empty() {
            return Err(MeshError::EmptyRing {
                joint_id: spec.joint_id,
            });
        }
        if let Some(&index) = spec.ring_vertex_ids.iter().find(|&&i| i >= num_vertices) {
            return Err(MeshError::RingIndex {
                joint_id: spec.joint_id,
                index,
                num_vertices,
            });
        }
    }
    Ok(())
}

pub fn load_joint_specs(text: &str) -> Result<Vec<JointSpec>, MeshError> {
    serde_json::from_str(text).map_err(|e| MeshError::JointFile(e.to_string()))
}

pub fn save_joint_specs(joints: &[JointSpec]) -> String {
    serde_json::to_string_pretty(joints).expect("joint specs serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives;

    #[test]
    fn mean_of_two_and_single_vertex() {
        let mut m = primitives::icosphere(0);
        let mut v = m.vertices().clone();
        v.row_mut(0).assign(&ndarray::arr1(&[0.0, 0.0, 0.0]));
        v.row_mut(1).assign(&ndarray::arr1(&[2.0, 0.0, 0.0]));
        m = m.with_vertices(v).unwrap();
        let joints = vec![
            JointSpec {
                joint_id: 0,
                ring_vertex_ids: vec![0, 1],
            },
            JointSpec {
                joint_id: 1,
                ring_vertex_ids: vec![5],
            },
        ];
        let j = joint_positions(&m, &joints).unwrap();
        assert_eq!(j.row(0).to_vec(), vec![1.0, 0.0, 0.0]);
        assert_eq!(j.row(1), m.vertices().row(5));
    }

    #[test]
    fn empty_ring_and_bad_index() {
        let m = primitives::icosphere(0);
        let empty = [JointSpec {
            joint_id: 7,
            ring_vertex_ids: vec![],
        }];
        assert!(matches!(
            joint_positions(&m, &empty),
            Err(MeshError::EmptyRing { joint_id: 7 })
        ));
        let bad = [JointSpec {
            joint_id: 1,
            ring_vertex_ids: vec![12],
        }];
        assert!(matches!(
            joint_positions(&m, &bad),
            Err(MeshError::RingIndex { index: 12, .. })
        ));
    }

    #[test]
    fn json_sidecar_format() {
        let js = load_joint_specs(r#"[{"joint_id": 3, "ring": [0, 4, 2]}]"#).unwrap();
        assert_eq!(js[0].ring_vertex_ids, vec![0, 4, 2]);
        let back = load_joint_specs(&save_joint_specs(&js)).unwrap();
        assert_eq!(back, js);
    }
}

//! Fixed-topology triangle meshes.
//!
//! A [`Topology`] is built once and shared (via `Arc`) by every mesh in a
//! dataset; a [`TriMesh`] is just a per-vertex 3-channel signal on it.

mod joints;
mod obj;
pub mod primitives;

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

pub(crate) use joints::check_joint_specs;
pub use joints::{joint_positions, load_joint_specs, save_joint_specs, JointSpec};
pub use obj::{format_sig, parse_obj, serialize_obj, ObjError};

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("invalid topology: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidTopology(Vec<Violation>),
    #[error("vertex matrix has {found} rows, topology has {expected} vertices")]
    VertexCount { expected: usize, found: usize },
    #[error("vertex matrix must have 3 columns, found {0}")]
    NotThreeColumns(usize),
    #[error("non-finite coordinate at vertex {0}")]
    NonFinite(usize),
    #[error("joint {joint_id} has an empty ring")]
    EmptyRing { joint_id: i64 },
    #[error("joint {joint_id} references vertex {index} but the mesh has {num_vertices}")]
    RingIndex {
        joint_id: i64,
        index: usize,
        num_vertices: usize,
    },
    #[error("joint spec file: {0}")]
    JointFile(String),
}

/// One broken topology rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NoVertices,
    IndexOutOfRange { face: usize, index: usize },
    DegenerateFace { face: usize },
    AsymmetricEdge { a: usize, b: usize },
    RingMismatch { vertex: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoVertices => write!(f, "vertex count must be positive"),
            Violation::IndexOutOfRange { face, index } => {
                write!(f, "range: face {face} references vertex {index}")
            }
            Violation::DegenerateFace { face } => {
                write!(f, "degenerate-face: face {face} repeats a vertex")
            }
            Violation::AsymmetricEdge { a, b } => {
                write!(f, "edge-symmetry: ({a}, {b}) has no reverse")
            }
            Violation::RingMismatch { vertex } => {
                write!(f, "ring: vertex {vertex} ring disagrees with edge set")
            }
        }
    }
}

/// Check the face-level rules without building anything.
pub fn validate_faces(num_vertices: usize, faces: &[[usize; 3]]) -> Vec<Violation> {
    let mut out = Vec::new();
    if num_vertices == 0 {
        out.push(Violation::NoVertices);
    }
    for (fi, f) in faces.iter().enumerate() {
        for &i in f {
            if i >= num_vertices {
                out.push(Violation::IndexOutOfRange { face: fi, index: i });
            }
        }
        if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
            out.push(Violation::DegenerateFace { face: fi });
        }
    }
    out
}

/// Shared mesh connectivity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TopologyRepr", into = "TopologyRepr")]
pub struct Topology {
    num_vertices: usize,
    faces: Vec<[usize; 3]>,
    edges: Vec<(usize, usize)>,
    rings: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct TopologyRepr {
    num_vertices: usize,
    faces: Vec<[usize; 3]>,
}

impl TryFrom<TopologyRepr> for Topology {
    type Error = MeshError;
    fn try_from(r: TopologyRepr) -> Result<Self, MeshError> {
        Topology::new(r.num_vertices, r.faces)
    }
}

impl From<Topology> for TopologyRepr {
    fn from(t: Topology) -> Self {
        TopologyRepr {
            num_vertices: t.num_vertices,
            faces: t.faces,
        }
    }
}

impl Topology {
    pub fn new(num_vertices: usize, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        let violations = validate_faces(num_vertices, &faces);
        if !violations.is_empty() {
            return Err(MeshError::InvalidTopology(violations));
        }
        let mut set = BTreeSet::new();
        for f in &faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                set.insert((a.min(b), a.max(b)));
            }
        }
        let edges: Vec<(usize, usize)> = set.into_iter().collect();
        let mut rings = vec![Vec::new(); num_vertices];
        for &(a, b) in &edges {
            rings[a].push(b);
            rings[b].push(a);
        }
        for r in &mut rings {
            r.sort_unstable();
        }
        Ok(Self {
            num_vertices,
            faces,
            edges,
            rings,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Unordered edges as `(lo, hi)` pairs in lexicographic order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Sorted 1-ring of vertex `i`.
    pub fn ring(&self, i: usize) -> &[usize] {
        &self.rings[i]
    }

    pub fn rings(&self) -> &[Vec<usize>] {
        &self.rings
    }

    /// Full invariant check, including the derived edge and ring tables.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = validate_faces(self.num_vertices, &self.faces);
        if !out.is_empty() {
            return out;
        }
        let mut directed = BTreeSet::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                directed.insert((a, b));
                directed.insert((b, a));
            }
        }
        for &(a, b) in &directed {
            if !directed.contains(&(b, a)) {
                out.push(Violation::AsymmetricEdge { a, b });
            }
        }
        for (i, ring) in self.rings.iter().enumerate() {
            let expected: Vec<usize> = directed.range((i, 0)..(i + 1, 0)).map(|&(_, j)| j).collect();
            if *ring != expected {
                out.push(Violation::RingMismatch { vertex: i });
            }
        }
        out
    }

    /// Number of connected components of the edge graph.
    pub fn num_components(&self) -> usize {
        let mut seen = vec![false; self.num_vertices];
        let mut count = 0;
        for s in 0..self.num_vertices {
            if seen[s] {
                continue;
            }
            count += 1;
            let mut stack = vec![s];
            seen[s] = true;
            while let Some(v) = stack.pop() {
                for &w in &self.rings[v] {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
        }
        count
    }
}

/// Vertex positions on a shared topology.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    topology: Arc<Topology>,
    vertices: Array2<f64>,
}

impl TriMesh {
    pub fn new(topology: Arc<Topology>, vertices: Array2<f64>) -> Result<Self, MeshError> {
        if vertices.ncols() != 3 {
            return Err(MeshError::NotThreeColumns(vertices.ncols()));
        }
        if vertices.nrows() != topology.num_vertices() {
            return Err(MeshError::VertexCount {
                expected: topology.num_vertices(),
                found: vertices.nrows(),
            });
        }
        if let Some(i) = vertices
            .rows()
            .into_iter()
            .position(|r| r.iter().any(|v| !v.is_finite()))
        {
            return Err(MeshError::NonFinite(i));
        }
        Ok(Self { topology, vertices })
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topology
    }

    pub fn vertices(&self) -> &Array2<f64> {
        &self.vertices
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.nrows()
    }

    pub fn into_vertices(self) -> Array2<f64> {
        self.vertices
    }

    /// Same topology, new positions.
    pub fn with_vertices(&self, vertices: Array2<f64>) -> Result<Self, MeshError> {
        Self::new(self.topology.clone(), vertices)
    }

    pub fn vertex(&self, i: usize) -> [f64; 3] {
        let r = self.vertices.row(i);
        [r[0], r[1], r[2]]
    }

    /// Unnormalized face normal (cross product of two edges); length is twice the area.
    pub fn face_normal(&self, face: usize) -> [f64; 3] {
        let [a, b, c] = self.topology.faces()[face];
        triangle_normal(self.vertex(a), self.vertex(b), self.vertex(c))
    }

    pub fn triangle_areas(&self) -> Vec<f64> {
        (0..self.topology.faces().len())
            .map(|f| 0.5 * norm3(self.face_normal(f)))
            .collect()
    }

    pub fn edge_lengths(&self) -> Vec<f64> {
        self.topology
            .edges()
            .iter()
            .map(|&(a, b)| dist(self.vertices.row(a), self.vertices.row(b)))
            .collect()
    }

    pub fn centroid(&self) -> [f64; 3] {
        let m = self.vertices.mean_axis(ndarray::Axis(0)).expect("nonempty");
        [m[0], m[1], m[2]]
    }
}

pub(crate) fn triangle_normal(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> [f64; 3] {
    let u = sub3(b, a);
    let v = sub3(c, a);
    cross3(u, v)
}

pub(crate) fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn norm3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

fn dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn icosahedron_is_valid() {
        let m = primitives::icosphere(0);
        assert!(m.topology().validate().is_empty());
        assert_eq!(m.num_vertices(), 12);
        assert_eq!(m.topology().edges().len(), 30);
    }

    #[test]
    fn degenerate_and_range_violations() {
        let v = validate_faces(3, &[[0, 0, 1]]);
        assert_eq!(v, vec![Violation::DegenerateFace { face: 0 }]);
        let v = validate_faces(3, &[[0, 1, 3]]);
        assert_eq!(v, vec![Violation::IndexOutOfRange { face: 0, index: 3 }]);
        assert!(matches!(
            Topology::new(3, vec![[0, 1, 3]]),
            Err(MeshError::InvalidTopology(_))
        ));
        assert!(v[0].to_string().contains("range"));
    }

    #[test]
    fn rings_are_symmetric() {
        let m = primitives::icosphere(2);
        let t = m.topology();
        for i in 0..t.num_vertices() {
            for &j in t.ring(i) {
                assert!(t.ring(j).contains(&i));
            }
        }
        assert_eq!(t.num_components(), 1);
    }

    #[test]
    fn trimesh_rejects_bad_vertices() {
        let t = Arc::new(Topology::new(3, vec![[0, 1, 2]]).unwrap());
        assert!(TriMesh::new(t.clone(), Array2::zeros((2, 3))).is_err());
        let bad = array![[0.0, 0.0, 0.0], [1.0, f64::NAN, 0.0], [0.0, 1.0, 0.0]];
        assert!(matches!(TriMesh::new(t, bad), Err(MeshError::NonFinite(1))));
    }
}

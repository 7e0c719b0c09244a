//! Procedural articulated rigs and the rig file format.
//!
//! A rig is a template mesh in millimetres, a kinematic tree with skinning
//! weights and angle limits, one vertex ring per joint (its pivot is the
//! ring mean) and a list of keypoint rings observed by cameras.

use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::lbs::KinematicTree;
use super::MorphError;
use crate::mesh::{joint_positions, parse_obj, primitives, serialize_obj, JointSpec, Topology, TriMesh};

/// Per-axis `[lo, hi]` angle limits, radians.
pub type Limits = [[f64; 2]; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct Rig {
    pub name: String,
    pub template: TriMesh,
    pub tree: KinematicTree,
    pub limits: Vec<Limits>,
    pub skeleton: Vec<JointSpec>,
    pub keypoints: Vec<JointSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct JointRecord {
    id: i64,
    parent: i64,
    rest: [f64; 3],
    limits: Limits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RigFile {
    name: String,
    template_obj: String,
    joints: Vec<JointRecord>,
    /// `(vertex, joint, weight)` triples, zero weights omitted.
    weights: Vec<(usize, usize, f64)>,
    skeleton_rings: Vec<JointSpec>,
    keypoints: Vec<JointSpec>,
}

pub const RIG_FILE: &str = "rig.json";
pub const TEMPLATE_FILE: &str = "template.obj";

impl Rig {
    pub fn num_joints(&self) -> usize {
        self.tree.num_joints()
    }

    pub fn validate(&self) -> Result<(), MorphError> {
        self.tree.validate()?;
        let j = self.num_joints();
        if self.tree.weights.nrows() != self.template.num_vertices() {
            return Err(MorphError::Rig("weight rows do not match template vertices".into()));
        }
        if self.limits.len() != j || self.skeleton.len() != j {
            return Err(MorphError::Rig(format!(
                "limits/skeleton rings must list all {j} joints"
            )));
        }
        if self.limits.iter().flatten().any(|l| !(l[0] <= l[1])) {
            return Err(MorphError::Rig("angle limit with lo > hi".into()));
        }
        joint_positions(&self.template, &self.skeleton)?;
        joint_positions(&self.template, &self.keypoints)?;
        Ok(())
    }

    /// Writes `rig.json` and `template.obj` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), MorphError> {
        std::fs::create_dir_all(dir)?;
        let file = RigFile {
            name: self.name.clone(),
            template_obj: TEMPLATE_FILE.into(),
            joints: (0..self.num_joints())
                .map(|j| JointRecord {
                    id: j as i64,
                    parent: self.tree.parents[j],
                    rest: [self.tree.rest[[j, 0]], self.tree.rest[[j, 1]], self.tree.rest[[j, 2]]],
                    limits: self.limits[j],
                })
                .collect(),
            weights: self
                .tree
                .weights
                .indexed_iter()
                .filter(|(_, &w)| w != 0.0)
                .map(|((v, j), &w)| (v, j, w))
                .collect(),
            skeleton_rings: self.skeleton.clone(),
            keypoints: self.keypoints.clone(),
        };
        let json = serde_json::to_string_pretty(&file).map_err(|e| MorphError::Rig(e.to_string()))?;
        std::fs::write(dir.join(RIG_FILE), json + "\n")?;
        std::fs::write(dir.join(TEMPLATE_FILE), serialize_obj(&self.template))?;
        Ok(())
    }

    /// Reads a rig file; the template path is resolved relative to it.
    pub fn load(path: &Path) -> Result<Self, MorphError> {
        let path = if path.is_dir() {
            path.join(RIG_FILE)
        } else {
            path.to_path_buf()
        };
        let text = std::fs::read_to_string(&path).map_err(|e| MorphError::Rig(format!("{}: {e}", path.display())))?;
        let file: RigFile =
            serde_json::from_str(&text).map_err(|e| MorphError::Rig(format!("{}: {e}", path.display())))?;
        let obj_path = path.parent().unwrap_or(Path::new(".")).join(&file.template_obj);
        let obj =
            std::fs::read_to_string(&obj_path).map_err(|e| MorphError::Rig(format!("{}: {e}", obj_path.display())))?;
        let template = parse_obj(&obj)?;
        let j = file.joints.len();
        if file.joints.iter().enumerate().any(|(i, r)| r.id != i as i64) {
            return Err(MorphError::Rig("joint ids must be 0..J in order".into()));
        }
        let mut weights = Array2::zeros((template.num_vertices(), j));
        for &(v, jj, w) in &file.weights {
            if v >= template.num_vertices() || jj >= j {
                return Err(MorphError::Rig(format!("weight triple ({v}, {jj}) out of range")));
            }
            weights[[v, jj]] += w;
        }
        let rest = Array2::from_shape_fn((j, 3), |(i, k)| file.joints[i].rest[k]);
        let tree = KinematicTree::new(file.joints.iter().map(|r| r.parent).collect(), rest, weights)?;
        let rig = Rig {
            name: file.name,
            template,
            tree,
            limits: file.joints.iter().map(|r| r.limits).collect(),
            skeleton: file.skeleton_rings,
            keypoints: file.keypoints,
        };
        rig.validate()?;
        Ok(rig)
    }
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Joint ring indices along a tube with `rings` rings split into `bones` bones.
fn tube_joint_rings(rings: usize, bones: usize) -> Vec<usize> {
    (0..bones).map(|b| b * rings / bones).collect()
}

/// An articulated tube along +y: `bones` joints in a chain, joints at rings
/// `b·rings/bones`, blended weights across each joint, keypoints at every
/// joint, the tip, and two off-axis marker vertices per bone (so twist about
/// the bone is observable).
pub fn tube_rig_with(rings: usize, segments: usize, radius: f64, length: f64, bones: usize) -> Rig {
    assert!(bones >= 1 && rings >= 2 * bones && segments >= 4);
    let mesh = primitives::tube(rings, segments, radius, length);
    let n = mesh.num_vertices();
    let id = |r: usize, s: usize| 1 + r * segments + (s % segments);
    let ring_y = |r: usize| length * r as f64 / (rings - 1) as f64;
    let joint_rings = tube_joint_rings(rings, bones);
    let joint_y: Vec<f64> = joint_rings.iter().map(|&r| ring_y(r)).collect();
    let blend = 0.5 * length / bones as f64 * 0.5;
    let mut weights = Array2::zeros((n, bones));
    for v in 0..n {
        let y = mesh.vertices()[[v, 1]];
        let mut w = vec![0.0; bones];
        w[0] = 1.0;
        for b in 1..bones {
            let t = smoothstep((y - joint_y[b] + blend) / (2.0 * blend));
            let moved = w[b - 1] * t;
            w[b - 1] -= moved;
            w[b] += moved;
        }
        for (b, wb) in w.into_iter().enumerate() {
            weights[[v, b]] = wb;
        }
    }
    let skeleton: Vec<JointSpec> = joint_rings
        .iter()
        .enumerate()
        .map(|(b, &r)| JointSpec {
            joint_id: b as i64,
            ring_vertex_ids: (0..segments).map(|s| id(r, s)).collect(),
        })
        .collect();
    let rest = joint_positions(&mesh, &skeleton).expect("rings in range");
    let parents = (0..bones as i64).map(|b| b - 1).collect();
    let tree = KinematicTree::new(parents, rest, weights).expect("valid tube tree");
    let mut keypoints = skeleton.clone();
    keypoints.push(JointSpec {
        joint_id: bones as i64,
        ring_vertex_ids: (0..segments).map(|s| id(rings - 1, s)).collect(),
    });
    let mut next = bones as i64 + 1;
    for b in 0..bones {
        let end = if b + 1 < bones { joint_rings[b + 1] } else { rings - 1 };
        let mid = (joint_rings[b] + end) / 2;
        for s in [0, segments / 4] {
            keypoints.push(JointSpec {
                joint_id: next,
                ring_vertex_ids: vec![id(mid, s)],
            });
            next += 1;
        }
    }
    let mut limits = vec![[[-0.3, 0.3], [-0.4, 0.4], [-1.0, 1.0]]; bones];
    limits[0] = [[0.0, 0.0]; 3];
    Rig {
        name: "tube".into(),
        template: mesh,
        tree,
        limits,
        skeleton,
        keypoints,
    }
}

/// The shipped tube: 40 rings of 16 vertices plus two poles (642 vertices),
/// 156 mm long, 10 mm radius, four joints.
pub fn tube_rig() -> Rig {
    tube_rig_with(40, 16, 10.0, 156.0, 4)
}

/// A one-bend finger: two joints (root, knuckle).
pub fn finger_rig() -> Rig {
    let mut rig = tube_rig_with(12, 8, 8.0, 60.0, 2);
    rig.name = "finger".into();
    rig
}

struct HandBuilder {
    verts: Vec<[f64; 3]>,
    faces: Vec<[usize; 3]>,
}

impl HandBuilder {
    fn push(&mut self, p: [f64; 3]) -> usize {
        self.verts.push(p);
        self.verts.len() - 1
    }

    /// Replaces the quad with boundary cycle `cycle` (a→d→c→b, as it runs in
    /// the removed faces) by an extruded prism of `rings` rings along `dir`
    /// capped by a pole. Returns the ring vertex lists, base ring first.
    fn extrude(
        &mut self,
        quad_faces: [usize; 2],
        cycle: [usize; 4],
        dir: [f64; 3],
        rings: usize,
        step: f64,
        taper: f64,
    ) -> Vec<Vec<usize>> {
        let mut gone = quad_faces;
        gone.sort_unstable();
        self.faces.remove(gone[1]);
        self.faces.remove(gone[0]);
        let base: Vec<[f64; 3]> = cycle.iter().map(|&v| self.verts[v]).collect();
        let c = [0, 1, 2].map(|k| base.iter().map(|p| p[k]).sum::<f64>() / 4.0);
        let mut all = vec![cycle.to_vec()];
        for k in 1..=rings {
            let shrink = 1.0 - taper * k as f64 / rings as f64;
            let ring: Vec<usize> = base
                .iter()
                .map(|p| {
                    let q = [0, 1, 2].map(|a| c[a] + (p[a] - c[a]) * shrink + dir[a] * step * k as f64);
                    self.push(q)
                })
                .collect();
            all.push(ring);
        }
        for k in 0..rings {
            let (lo, hi) = (&all[k], &all[k + 1]);
            for i in 0..4 {
                let (u, v) = (lo[i], lo[(i + 1) % 4]);
                let (u2, v2) = (hi[i], hi[(i + 1) % 4]);
                self.faces.push([u, v, v2]);
                self.faces.push([u, v2, u2]);
            }
        }
        let last = all[rings].clone();
        let lc = [0, 1, 2].map(|a| last.iter().map(|&v| self.verts[v][a]).sum::<f64>() / 4.0);
        let tip = self.push([0, 1, 2].map(|a| lc[a] + dir[a] * step * 0.6));
        for i in 0..4 {
            self.faces.push([last[i], last[(i + 1) % 4], tip]);
        }
        all.push(vec![tip]);
        all
    }
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// A low-poly five-chain hand: a flattened palm cylinder along x with four
/// fingers extruded from its upper strip and a thumb from its front face.
/// Sixteen joints: the palm root plus three per finger.
pub fn hand_rig() -> Rig {
    const PR: usize = 9;
    const PS: usize = 12;
    let (ry, rz) = (45.0, 15.0);
    let mut b = HandBuilder {
        verts: Vec::new(),
        faces: Vec::new(),
    };
    let x_of = |r: usize| -40.0 + 10.0 * r as f64;
    b.push([x_of(0) - 8.0, 0.0, 0.0]);
    for r in 0..PR {
        for s in 0..PS {
            let th = std::f64::consts::TAU * (s as f64 - 0.5) / PS as f64;
            b.push([x_of(r), ry * th.cos(), rz * th.sin()]);
        }
    }
    let top = b.push([x_of(PR - 1) + 8.0, 0.0, 0.0]);
    let id = |r: usize, s: usize| 1 + r * PS + (s % PS);
    for s in 0..PS {
        b.faces.push([0, id(0, s + 1), id(0, s)]);
    }
    let mut quad_at = std::collections::BTreeMap::new();
    for r in 0..PR - 1 {
        for s in 0..PS {
            let (a, bb) = (id(r, s), id(r, s + 1));
            let (d, c) = (id(r + 1, s), id(r + 1, s + 1));
            quad_at.insert((r, s), (b.faces.len(), [a, bb, c, d]));
            b.faces.push([a, bb, d]);
            b.faces.push([bb, c, d]);
        }
    }
    for s in 0..PS {
        b.faces.push([top, id(PR - 1, s), id(PR - 1, s + 1)]);
    }
    // (ring, segment, direction, ring count, step, taper)
    let chains: [(usize, usize, [f64; 3], usize, f64); 5] = [
        (0, 3, normalize([-0.8, 0.2, 0.6]), 8, 6.0),
        (1, 0, [0.0, 1.0, 0.0], 10, 6.5),
        (3, 0, [0.0, 1.0, 0.0], 10, 7.5),
        (5, 0, [0.0, 1.0, 0.0], 10, 7.0),
        (7, 0, normalize([0.15, 1.0, 0.0]), 10, 5.5),
    ];
    let palm_ring: Vec<usize> = (0..PS).map(|s| id(PR / 2, s)).collect();
    let mut finger_rings = Vec::new();
    // extrude from the highest face index down so earlier indices stay valid
    let mut order: Vec<usize> = (0..5).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(quad_at[&(chains[i].0, chains[i].1)].0));
    let mut built = vec![Vec::new(); 5];
    for i in order {
        let (r, s, dir, rings, step) = chains[i];
        let (f, [a, bb, c, d]) = quad_at[&(r, s)];
        built[i] = b.extrude([f, f + 1], [a, bb, c, d], dir, rings, step, 0.3);
    }
    finger_rings.extend(built);
    let mesh = TriMesh::new(
        Arc::new(Topology::new(b.verts.len(), b.faces).expect("hand topology")),
        Array2::from_shape_fn((b.verts.len(), 3), |(i, k)| b.verts[i][k]),
    )
    .expect("finite hand");
    let n = mesh.num_vertices();
    let j = 16;
    let mut parents = vec![-1i64];
    let mut skeleton = vec![JointSpec {
        joint_id: 0,
        ring_vertex_ids: palm_ring,
    }];
    let mut keypoints = vec![skeleton[0].clone()];
    let mut weights = Array2::zeros((n, j));
    for v in 0..n {
        weights[[v, 0]] = 1.0;
    }
    for (f, rings) in finger_rings.iter().enumerate() {
        let count = rings.len() - 2; // extruded rings, excluding base and tip
        let bones = [0, count * 2 / 5, count * 7 / 10];
        for (k, &ring) in bones.iter().enumerate() {
            let joint = 1 + 3 * f + k;
            parents.push(if k == 0 { 0 } else { joint as i64 - 1 });
            skeleton.push(JointSpec {
                joint_id: joint as i64,
                ring_vertex_ids: rings[ring].clone(),
            });
        }
        for &ring in &bones {
            keypoints.push(JointSpec {
                joint_id: keypoints.len() as i64,
                ring_vertex_ids: rings[ring].clone(),
            });
        }
        keypoints.push(JointSpec {
            joint_id: keypoints.len() as i64,
            ring_vertex_ids: rings[rings.len() - 1].clone(),
        });
        for (k, ring) in rings.iter().enumerate().skip(1) {
            let bone = bones.iter().rposition(|&b| b < k).unwrap_or(0);
            let joint = 1 + 3 * f + bone;
            for &v in ring {
                weights[[v, 0]] = 0.0;
                if bones[1..].contains(&k) {
                    // ring sitting on a joint: split between the two bones
                    let upper = bones.iter().position(|&b| b == k).expect("joint ring");
                    weights[[v, 1 + 3 * f + upper - 1]] = 0.5;
                    weights[[v, 1 + 3 * f + upper]] = 0.5;
                } else {
                    weights[[v, joint]] = 1.0;
                }
            }
        }
    }
    let rest = joint_positions(&mesh, &skeleton).expect("rings in range");
    let tree = KinematicTree::new(parents, rest, weights).expect("valid hand tree");
    let mut limits = vec![[[0.0, 0.0]; 3]];
    for _ in 0..5 {
        limits.push([[-0.2, 1.3], [-0.1, 0.1], [-0.3, 0.3]]);
        limits.push([[0.0, 1.5], [-0.05, 0.05], [-0.05, 0.05]]);
        limits.push([[0.0, 1.2], [-0.05, 0.05], [-0.05, 0.05]]);
    }
    Rig {
        name: "hand".into(),
        template: mesh,
        tree,
        limits,
        skeleton,
        keypoints,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signed_volume(m: &TriMesh) -> f64 {
        m.topology()
            .faces()
            .iter()
            .map(|&[a, b, c]| {
                let (p, q, r) = (m.vertex(a), m.vertex(b), m.vertex(c));
                p[0] * (q[1] * r[2] - q[2] * r[1]) - p[1] * (q[0] * r[2] - q[2] * r[0])
                    + p[2] * (q[0] * r[1] - q[1] * r[0])
            })
            .sum::<f64>()
            / 6.0
    }

    #[test]
    fn tube_rig_shape() {
        let rig = tube_rig();
        rig.validate().unwrap();
        assert_eq!(rig.template.num_vertices(), 642);
        assert_eq!(rig.num_joints(), 4);
        assert_eq!(rig.keypoints.len(), 5 + 8);
    }

    #[test]
    fn hand_is_closed_and_outward() {
        let rig = hand_rig();
        rig.validate().unwrap();
        let t = rig.template.topology();
        assert!(t.validate().is_empty());
        assert_eq!(t.num_components(), 1);
        let v = t.num_vertices() as i64;
        let e = t.edges().len() as i64;
        let f = t.faces().len() as i64;
        assert_eq!(v - e + f, 2);
        assert!(signed_volume(&rig.template) > 0.0);
        assert_eq!(rig.num_joints(), 16);
        assert_eq!(rig.keypoints.len(), 21);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rig = tube_rig_with(8, 6, 1.0, 7.0, 2);
        rig.save(dir.path()).unwrap();
        let back = Rig::load(dir.path()).unwrap();
        assert_eq!(back.tree.parents, rig.tree.parents);
        assert_eq!(back.tree.weights, rig.tree.weights);
        assert_eq!(back.keypoints, rig.keypoints);
        assert!((back.template.vertices() - rig.template.vertices())
            .iter()
            .all(|d| d.abs() < 1e-7));
    }
}

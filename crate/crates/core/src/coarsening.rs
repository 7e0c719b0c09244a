//! Quadric-error edge-collapse decimation and multi-level pooling hierarchies.
//!
//! Each collapse keeps one endpoint in place (the one with lower quadric
//! error under the merged quadric), so coarse vertices are a subset of the
//! fine ones and downsampling is pure selection. Upsampling projects each
//! removed vertex onto its nearest coarse triangle in the reference pose and
//! interpolates barycentrically.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};
use std::sync::Arc;

use nalgebra::{Matrix4, Vector4};
use ndarray::{Array2, ArrayView2};

use crate::mesh::{cross3, dot3, norm3, sub3, MeshError, Topology, TriMesh};
use crate::sparse::{CsrMatrix, SparseError};

#[derive(Debug, thiserror::Error)]
pub enum CoarsenError {
    #[error("decimation stalled at {achieved} vertices (target {target}); no valid collapse remains")]
    Unreachable { target: usize, achieved: usize },
    #[error("target vertex count {target} must be positive and below the current {current}")]
    BadTarget { target: usize, current: usize },
    #[error("reduction factors must be >= 1, got {0}")]
    BadFactor(usize),
    #[error("level {level} out of range for a hierarchy with {levels} levels")]
    BadLevel { level: usize, levels: usize },
    #[error("signal has {found} rows, level {level} has {expected} vertices")]
    Dimension {
        level: usize,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

/// Sum of squared distances to a set of planes, as a 4×4 symmetric form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadric(pub Matrix4<f64>);

impl Quadric {
    pub fn zero() -> Self {
        Quadric(Matrix4::zeros())
    }

    /// Plane `n·x + d = 0` with unit normal `n`.
    pub fn from_plane(n: [f64; 3], d: f64) -> Self {
        let p = Vector4::new(n[0], n[1], n[2], d);
        Quadric(p * p.transpose())
    }

    pub fn error(&self, x: [f64; 3]) -> f64 {
        let v = Vector4::new(x[0], x[1], x[2], 1.0);
        (v.transpose() * self.0 * v)[(0, 0)]
    }

    pub fn add(&mut self, other: &Quadric) {
        self.0 += other.0;
    }
}

/// Result of decimating one level.
#[derive(Debug, Clone)]
pub struct Decimation {
    pub topology: Topology,
    /// Fine-vertex indices of the survivors, ascending; position = coarse index.
    pub kept: Vec<usize>,
    /// For every fine vertex, the fine index of the survivor it merged into.
    pub representative: Vec<usize>,
}

/// Per-vertex quadrics from incident face planes, plus perpendicular
/// constraint planes along open boundary edges.
pub fn vertex_quadrics(mesh: &TriMesh) -> Vec<Quadric> {
    let topo = mesh.topology();
    let mut qs = vec![Quadric::zero(); mesh.num_vertices()];
    let mut edge_faces: std::collections::BTreeMap<(usize, usize), Vec<usize>> = Default::default();
    for (fi, f) in topo.faces().iter().enumerate() {
        let n = mesh.face_normal(fi);
        let len = norm3(n);
        if len > 0.0 {
            let n = [n[0] / len, n[1] / len, n[2] / len];
            let q = Quadric::from_plane(n, -dot3(n, mesh.vertex(f[0])));
            for &v in f {
                qs[v].add(&q);
            }
        }
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            edge_faces.entry((a.min(b), a.max(b))).or_default().push(fi);
        }
    }
    for (&(a, b), faces) in &edge_faces {
        if faces.len() != 1 {
            continue;
        }
        let fnorm = mesh.face_normal(faces[0]);
        let e = sub3(mesh.vertex(b), mesh.vertex(a));
        let n = cross3(e, fnorm);
        let len = norm3(n);
        if len == 0.0 {
            continue;
        }
        let n = [n[0] / len, n[1] / len, n[2] / len];
        let q = Quadric::from_plane(n, -dot3(n, mesh.vertex(a)));
        qs[a].add(&q);
        qs[b].add(&q);
    }
    qs
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    cost: f64,
    lo: usize,
    hi: usize,
    ver_lo: u32,
    ver_hi: u32,
}

impl PartialEq for Candidate {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Candidate {
    // reversed so BinaryHeap pops the cheapest, then the smallest edge
    fn cmp(&self, o: &Self) -> Ordering {
        o.cost
            .total_cmp(&self.cost)
            .then_with(|| o.lo.cmp(&self.lo))
            .then_with(|| o.hi.cmp(&self.hi))
    }
}

struct Collapser<'a> {
    pos: &'a Array2<f64>,
    faces: Vec<[usize; 3]>,
    face_alive: Vec<bool>,
    vert_faces: Vec<BTreeSet<usize>>,
    nbrs: Vec<BTreeSet<usize>>,
    alive: Vec<bool>,
    version: Vec<u32>,
    quadrics: Vec<Quadric>,
    merged_into: Vec<usize>,
    live_count: usize,
}

impl<'a> Collapser<'a> {
    fn p(&self, v: usize) -> [f64; 3] {
        [self.pos[[v, 0]], self.pos[[v, 1]], self.pos[[v, 2]]]
    }

    /// Cost and survivor for collapsing edge (a, b).
    fn evaluate(&self, a: usize, b: usize) -> (f64, usize, usize) {
        let mut q = self.quadrics[a];
        q.add(&self.quadrics[b]);
        let (ea, eb) = (q.error(self.p(a)), q.error(self.p(b)));
        // survivor keeps its position; ties keep the smaller index
        if ea <= eb {
            (ea, a, b)
        } else {
            (eb, b, a)
        }
    }

    fn candidate(&self, a: usize, b: usize) -> Candidate {
        let (lo, hi) = (a.min(b), a.max(b));
        let (cost, _, _) = self.evaluate(lo, hi);
        Candidate {
            cost,
            lo,
            hi,
            ver_lo: self.version[lo],
            ver_hi: self.version[hi],
        }
    }

    fn is_boundary_edge(&self, a: usize, b: usize) -> bool {
        self.vert_faces[a]
            .iter()
            .filter(|f| self.faces[**f].contains(&b))
            .count()
            == 1
    }

    fn is_boundary_vertex(&self, v: usize) -> bool {
        self.nbrs[v].iter().any(|&w| self.is_boundary_edge(v, w))
    }

    fn can_collapse(&self, keep: usize, remove: usize) -> bool {
        let shared: Vec<usize> = self.vert_faces[remove]
            .iter()
            .copied()
            .filter(|f| self.faces[*f].contains(&keep))
            .collect();
        if shared.is_empty() {
            return false;
        }
        // link condition: common neighbours are exactly the opposite vertices
        let opposite: BTreeSet<usize> = shared
            .iter()
            .flat_map(|f| self.faces[*f].iter().copied())
            .filter(|&v| v != keep && v != remove)
            .collect();
        let common: BTreeSet<usize> = self.nbrs[keep].intersection(&self.nbrs[remove]).copied().collect();
        if common != opposite {
            return false;
        }
        if shared.len() == 2 && self.is_boundary_vertex(keep) && self.is_boundary_vertex(remove) {
            return false;
        }
        let target = self.p(keep);
        let keep_faces: BTreeSet<[usize; 3]> = self.vert_faces[keep].iter().map(|&f| sorted(self.faces[f])).collect();
        for &f in &self.vert_faces[remove] {
            let face = self.faces[f];
            if face.contains(&keep) {
                continue;
            }
            let moved = face.map(|v| if v == remove { keep } else { v });
            if keep_faces.contains(&sorted(moved)) {
                return false;
            }
            let before = crate::mesh::triangle_normal(self.p(face[0]), self.p(face[1]), self.p(face[2]));
            let pts = face.map(|v| if v == remove { target } else { self.p(v) });
            let after = crate::mesh::triangle_normal(pts[0], pts[1], pts[2]);
            let (lb, la) = (norm3(before), norm3(after));
            if la <= 1e-12 * lb.max(f64::MIN_POSITIVE) || dot3(before, after) <= 0.0 {
                return false;
            }
        }
        true
    }

    fn collapse(&mut self, keep: usize, remove: usize) {
        let rf: Vec<usize> = self.vert_faces[remove].iter().copied().collect();
        for f in rf {
            if self.faces[f].contains(&keep) {
                self.face_alive[f] = false;
                for v in self.faces[f] {
                    self.vert_faces[v].remove(&f);
                }
            } else {
                for v in self.faces[f].iter_mut() {
                    if *v == remove {
                        *v = keep;
                    }
                }
                self.vert_faces[keep].insert(f);
            }
        }
        self.vert_faces[remove].clear();
        let rn: Vec<usize> = std::mem::take(&mut self.nbrs[remove]).into_iter().collect();
        for w in rn {
            self.nbrs[w].remove(&remove);
            if w != keep {
                self.nbrs[w].insert(keep);
                self.nbrs[keep].insert(w);
            }
        }
        self.nbrs[keep].remove(&remove);
        let qr = self.quadrics[remove];
        self.quadrics[keep].add(&qr);
        self.alive[remove] = false;
        self.merged_into[remove] = keep;
        self.version[keep] += 1;
        self.version[remove] += 1;
        self.live_count -= 1;
    }
}

fn sorted(mut f: [usize; 3]) -> [usize; 3] {
    f.sort_unstable();
    f
}

/// Greedy quadric-error decimation down to `target_count` vertices.
pub fn decimate(mesh: &TriMesh, target_count: usize) -> Result<Decimation, CoarsenError> {
    let n = mesh.num_vertices();
    if target_count == 0 || target_count >= n {
        return Err(CoarsenError::BadTarget {
            target: target_count,
            current: n,
        });
    }
    let topo = mesh.topology();
    let mut vert_faces = vec![BTreeSet::new(); n];
    for (fi, f) in topo.faces().iter().enumerate() {
        for &v in f {
            vert_faces[v].insert(fi);
        }
    }
    let mut c = Collapser {
        pos: mesh.vertices(),
        faces: topo.faces().to_vec(),
        face_alive: vec![true; topo.faces().len()],
        vert_faces,
        nbrs: topo.rings().iter().map(|r| r.iter().copied().collect()).collect(),
        alive: vec![true; n],
        version: vec![0; n],
        quadrics: vertex_quadrics(mesh),
        merged_into: (0..n).collect(),
        live_count: n,
    };

    loop {
        let before = c.live_count;
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::new();
        for v in 0..n {
            if !c.alive[v] {
                continue;
            }
            for &w in &c.nbrs[v] {
                if v < w {
                    heap.push(c.candidate(v, w));
                }
            }
        }
        while c.live_count > target_count {
            let Some(cand) = heap.pop() else { break };
            if !c.alive[cand.lo]
                || !c.alive[cand.hi]
                || c.version[cand.lo] != cand.ver_lo
                || c.version[cand.hi] != cand.ver_hi
            {
                continue;
            }
            let (_, keep, remove) = c.evaluate(cand.lo, cand.hi);
            if !c.can_collapse(keep, remove) {
                continue;
            }
            c.collapse(keep, remove);
            let ns: Vec<usize> = c.nbrs[keep].iter().copied().collect();
            for w in ns {
                heap.push(c.candidate(keep, w));
            }
        }
        if c.live_count <= target_count {
            break;
        }
        if c.live_count == before {
            return Err(CoarsenError::Unreachable {
                target: target_count,
                achieved: c.live_count,
            });
        }
    }

    let kept: Vec<usize> = (0..n).filter(|&v| c.alive[v]).collect();
    let mut coarse_of = vec![usize::MAX; n];
    for (ci, &v) in kept.iter().enumerate() {
        coarse_of[v] = ci;
    }
    let faces: Vec<[usize; 3]> = c
        .faces
        .iter()
        .zip(&c.face_alive)
        .filter(|(_, &a)| a)
        .map(|(f, _)| f.map(|v| coarse_of[v]))
        .collect();
    let topology = Topology::new(kept.len(), faces)?;
    let representative = (0..n)
        .map(|mut v| {
            while c.merged_into[v] != v {
                v = c.merged_into[v];
            }
            v
        })
        .collect();
    Ok(Decimation {
        topology,
        kept,
        representative,
    })
}

/// Coarsening levels with selection (down) and barycentric (up) transforms.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshHierarchy {
    levels: Vec<Arc<Topology>>,
    down: Vec<CsrMatrix>,
    up: Vec<CsrMatrix>,
    reference: TriMesh,
    factors: Vec<usize>,
}

/// `ceil(n / factor)` for every level.
pub fn level_sizes(n: usize, factors: &[usize]) -> Vec<usize> {
    let mut sizes = vec![n];
    for &f in factors {
        let last = *sizes.last().unwrap();
        sizes.push(last.div_ceil(f.max(1)));
    }
    sizes
}

pub fn build_hierarchy(mesh: &TriMesh, factors: &[usize]) -> Result<MeshHierarchy, CoarsenError> {
    if let Some(&f) = factors.iter().find(|&&f| f == 0) {
        return Err(CoarsenError::BadFactor(f));
    }
    let mut levels = vec![mesh.topology().clone()];
    let mut down = Vec::new();
    let mut up = Vec::new();
    let mut current = mesh.clone();
    for &factor in factors {
        let n = current.num_vertices();
        let target = n.div_ceil(factor);
        if target == n {
            levels.push(current.topology().clone());
            down.push(CsrMatrix::identity(n));
            up.push(CsrMatrix::identity(n));
            continue;
        }
        let dec = decimate(&current, target)?;
        let coarse_pos = Array2::from_shape_fn((dec.kept.len(), 3), |(i, k)| current.vertices()[[dec.kept[i], k]]);
        let coarse = TriMesh::new(Arc::new(dec.topology.clone()), coarse_pos)?;
        let d_trip: Vec<(usize, usize, f64)> = dec.kept.iter().enumerate().map(|(ci, &v)| (ci, v, 1.0)).collect();
        down.push(CsrMatrix::from_triplets(dec.kept.len(), n, &d_trip)?);
        up.push(upsample_matrix(&current, &coarse, &dec.kept)?);
        levels.push(coarse.topology().clone());
        current = coarse;
    }
    Ok(MeshHierarchy {
        levels,
        down,
        up,
        reference: mesh.clone(),
        factors: factors.to_vec(),
    })
}

fn upsample_matrix(fine: &TriMesh, coarse: &TriMesh, kept: &[usize]) -> Result<CsrMatrix, CoarsenError> {
    let n = fine.num_vertices();
    let mut coarse_of = vec![usize::MAX; n];
    for (ci, &v) in kept.iter().enumerate() {
        coarse_of[v] = ci;
    }
    let faces = coarse.topology().faces();
    let tri: Vec<[[f64; 3]; 3]> = faces
        .iter()
        .map(|f| [coarse.vertex(f[0]), coarse.vertex(f[1]), coarse.vertex(f[2])])
        .collect();
    let mut trip = Vec::with_capacity(3 * n);
    for v in 0..n {
        if coarse_of[v] != usize::MAX {
            trip.push((v, coarse_of[v], 1.0));
            continue;
        }
        let p = fine.vertex(v);
        let mut best = (f64::INFINITY, 0usize, [1.0, 0.0, 0.0]);
        for (fi, t) in tri.iter().enumerate() {
            let (q, bary) = closest_point_on_triangle(p, t[0], t[1], t[2]);
            let d = norm3(sub3(p, q));
            if d < best.0 {
                best = (d, fi, bary);
            }
        }
        let f = faces[best.1];
        for k in 0..3 {
            if best.2[k] != 0.0 {
                trip.push((v, f[k], best.2[k]));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(n, kept.len(), &trip)?)
}

/// Closest point on triangle `abc` to `p` and its barycentric weights
/// (nonnegative, summing to 1).
pub fn closest_point_on_triangle(p: [f64; 3], a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let ab = sub3(b, a);
    let ac = sub3(c, a);
    let ap = sub3(p, a);
    let d1 = dot3(ab, ap);
    let d2 = dot3(ac, ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (a, [1.0, 0.0, 0.0]);
    }
    let bp = sub3(p, b);
    let d3 = dot3(ab, bp);
    let d4 = dot3(ac, bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (b, [0.0, 1.0, 0.0]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (lerp(a, ab, v), [1.0 - v, v, 0.0]);
    }
    let cp = sub3(p, c);
    let d5 = dot3(ab, cp);
    let d6 = dot3(ac, cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (c, [0.0, 0.0, 1.0]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (lerp(a, ac, w), [1.0 - w, 0.0, w]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (lerp(b, sub3(c, b), w), [0.0, 1.0 - w, w]);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    let u = 1.0 - v - w;
    let q = [
        a[0] + ab[0] * v + ac[0] * w,
        a[1] + ab[1] * v + ac[1] * w,
        a[2] + ab[2] * v + ac[2] * w,
    ];
    (q, [u, v, w])
}

fn lerp(a: [f64; 3], d: [f64; 3], t: f64) -> [f64; 3] {
    [a[0] + d[0] * t, a[1] + d[1] * t, a[2] + d[2] * t]
}

impl MeshHierarchy {
    /// Rebuild from stored parts (checkpoint loading).
    pub fn from_parts(
        levels: Vec<Arc<Topology>>,
        down: Vec<CsrMatrix>,
        up: Vec<CsrMatrix>,
        reference: TriMesh,
        factors: Vec<usize>,
    ) -> Result<Self, CoarsenError> {
        let sizes: Vec<usize> = levels.iter().map(|t| t.num_vertices()).collect();
        let ok = levels.len() == factors.len() + 1
            && down.len() == factors.len()
            && up.len() == factors.len()
            && reference.topology().as_ref() == levels[0].as_ref()
            && (0..factors.len()).all(|k| {
                down[k].nrows() == sizes[k + 1]
                    && down[k].ncols() == sizes[k]
                    && up[k].nrows() == sizes[k]
                    && up[k].ncols() == sizes[k + 1]
            });
        if !ok {
            return Err(CoarsenError::BadLevel {
                level: factors.len(),
                levels: levels.len(),
            });
        }
        Ok(Self {
            levels,
            down,
            up,
            reference,
            factors,
        })
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, k: usize) -> &Arc<Topology> {
        &self.levels[k]
    }

    pub fn levels(&self) -> &[Arc<Topology>] {
        &self.levels
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.levels.iter().map(|t| t.num_vertices()).collect()
    }

    pub fn down_transform(&self, k: usize) -> &CsrMatrix {
        &self.down[k]
    }

    pub fn up_transform(&self, k: usize) -> &CsrMatrix {
        &self.up[k]
    }

    pub fn reference(&self) -> &TriMesh {
        &self.reference
    }

    pub fn factors(&self) -> &[usize] {
        &self.factors
    }

    fn check(&self, level: usize, rows: usize, on_level: usize) -> Result<(), CoarsenError> {
        if level + 1 >= self.levels.len() {
            return Err(CoarsenError::BadLevel {
                level,
                levels: self.levels.len(),
            });
        }
        let expected = self.levels[on_level].num_vertices();
        if rows != expected {
            return Err(CoarsenError::Dimension {
                level: on_level,
                expected,
                found: rows,
            });
        }
        Ok(())
    }

    /// Level-`k` signal to level `k + 1`.
    pub fn downsample(&self, k: usize, signal: &ArrayView2<f64>) -> Result<Array2<f64>, CoarsenError> {
        self.check(k, signal.nrows(), k)?;
        Ok(self.down[k].mul_dense(signal)?)
    }

    /// Level-`(k + 1)` signal back to level `k`.
    pub fn upsample(&self, k: usize, signal: &ArrayView2<f64>) -> Result<Array2<f64>, CoarsenError> {
        self.check(k, signal.nrows(), k + 1)?;
        Ok(self.up[k].mul_dense(signal)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives;

    #[test]
    fn plane_quadric_vanishes_on_plane() {
        let q = Quadric::from_plane([0.0, 0.0, 1.0], -2.0);
        assert_eq!(q.error([5.0, -3.0, 2.0]), 0.0);
        assert!((q.error([0.0, 0.0, 3.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn planar_grid_interior_collapses_are_free() {
        let g = primitives::grid(6, 6);
        let qs = vertex_quadrics(&g);
        let on_border = |v: usize| {
            let [x, y, _] = g.vertex(v);
            x == 0.0 || y == 0.0 || x == 5.0 || y == 5.0
        };
        for &(a, b) in g.topology().edges() {
            if on_border(a) && on_border(b) {
                continue;
            }
            let mut q = qs[a];
            q.add(&qs[b]);
            let e = q.error(g.vertex(a)).min(q.error(g.vertex(b)));
            assert!(e.abs() < 1e-12, "edge ({a},{b}) costs {e}");
        }
        let dec = decimate(&g, 18).unwrap();
        assert_eq!(dec.kept.len(), 18);
        assert!(dec.topology.validate().is_empty());
    }

    #[test]
    fn icosphere_factor_four() {
        let m = primitives::icosphere(1);
        assert_eq!(m.num_vertices(), 42);
        let h = build_hierarchy(&m, &[4]).unwrap();
        assert_eq!(h.sizes(), vec![42, 11]);
        assert!(h.level(1).validate().is_empty());
    }

    #[test]
    fn down_rows_select_and_up_rows_are_barycentric() {
        let m = primitives::icosphere(2);
        let h = build_hierarchy(&m, &[2, 2]).unwrap();
        assert_eq!(h.sizes(), vec![162, 81, 41]);
        for k in 0..2 {
            let d = h.down_transform(k);
            for r in 0..d.nrows() {
                let row: Vec<_> = d.row(r).collect();
                assert_eq!(row.len(), 1);
                assert_eq!(row[0].1, 1.0);
            }
            let u = h.up_transform(k);
            for r in 0..u.nrows() {
                assert!((u.row_sum(r) - 1.0).abs() < 1e-12);
                assert!(u.row(r).all(|(_, w)| w >= 0.0));
            }
            let du = d.to_dense().dot(&u.to_dense());
            let eye = Array2::<f64>::eye(d.nrows());
            assert_eq!(du, eye);
        }
    }

    #[test]
    fn bad_inputs() {
        let m = primitives::icosphere(1);
        assert!(matches!(decimate(&m, 42), Err(CoarsenError::BadTarget { .. })));
        assert!(matches!(build_hierarchy(&m, &[0]), Err(CoarsenError::BadFactor(0))));
        let h = build_hierarchy(&m, &[1]).unwrap();
        assert_eq!(h.sizes(), vec![42, 42]);
        let sig = Array2::<f64>::zeros((5, 3));
        assert!(matches!(
            h.downsample(0, &sig.view()),
            Err(CoarsenError::Dimension { .. })
        ));
        assert!(matches!(
            h.downsample(1, &sig.view()),
            Err(CoarsenError::BadLevel { .. })
        ));
    }

    #[test]
    fn closest_point_regions() {
        let (a, b, c) = ([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
        let (q, w) = closest_point_on_triangle([0.25, 0.25, 3.0], a, b, c);
        assert_eq!(q, [0.25, 0.25, 0.0]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let (q, w) = closest_point_on_triangle([-1.0, -1.0, 0.0], a, b, c);
        assert_eq!((q, w), (a, [1.0, 0.0, 0.0]));
        let (q, _) = closest_point_on_triangle([0.5, -2.0, 0.0], a, b, c);
        assert_eq!(q, [0.5, 0.0, 0.0]);
    }
}

//! Procedural meshes used by tests, benches and the shipped rigs.

use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::Array2;

use super::{Topology, TriMesh};

fn build(verts: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> TriMesh {
    let n = verts.len();
    let topo = Arc::new(Topology::new(n, faces).expect("procedural topology is valid"));
    let flat: Vec<f64> = verts.into_iter().flatten().collect();
    TriMesh::new(topo, Array2::from_shape_vec((n, 3), flat).unwrap()).unwrap()
}

/// Unit icosphere; `subdivisions` = 0 is the icosahedron (12 vertices),
/// then 42, 162, 642, 2562, ...
pub fn icosphere(subdivisions: usize) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<[f64; 3]> = vec![
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for v in &mut verts {
        normalize(v);
    }
    for _ in 0..subdivisions {
        let mut cache: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<[f64; 3]>| -> usize {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                let (p, q) = (verts[a], verts[b]);
                let mut m = [(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0, (p[2] + q[2]) / 2.0];
                normalize(&mut m);
                verts.push(m);
                verts.len() - 1
            })
        };
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }
    build(verts, faces)
}

fn normalize(v: &mut [f64; 3]) {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    for x in v.iter_mut() {
        *x /= n;
    }
}

/// Planar `nx × ny` vertex grid in z = 0 with unit spacing.
pub fn grid(nx: usize, ny: usize) -> TriMesh {
    assert!(nx >= 2 && ny >= 2);
    let mut verts = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            verts.push([i as f64, j as f64, 0.0]);
        }
    }
    let id = |i: usize, j: usize| j * nx + i;
    let mut faces = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            faces.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    build(verts, faces)
}

/// Closed tube along +y: `rings` circles of `segments` vertices plus two
/// pole vertices. Vertex 0 is the bottom pole, the last vertex the top pole,
/// ring `r` segment `s` sits at `1 + r * segments + s`.
pub fn tube(rings: usize, segments: usize, radius: f64, length: f64) -> TriMesh {
    assert!(rings >= 1 && segments >= 3);
    let mut verts = Vec::with_capacity(rings * segments + 2);
    verts.push([0.0, -0.5 * radius, 0.0]);
    for r in 0..rings {
        let y = if rings == 1 {
            0.5 * length
        } else {
            length * r as f64 / (rings - 1) as f64
        };
        for s in 0..segments {
            let th = std::f64::consts::TAU * s as f64 / segments as f64;
            verts.push([radius * th.cos(), y, radius * th.sin()]);
        }
    }
    verts.push([0.0, length + 0.5 * radius, 0.0]);
    let top = verts.len() - 1;
    let id = |r: usize, s: usize| 1 + r * segments + (s % segments);
    let mut faces = Vec::new();
    for s in 0..segments {
        faces.push([0, id(0, s), id(0, s + 1)]);
    }
    for r in 0..rings.saturating_sub(1) {
        for s in 0..segments {
            let (a, b) = (id(r, s), id(r, s + 1));
            let (d, c) = (id(r + 1, s), id(r + 1, s + 1));
            faces.push([a, d, b]);
            faces.push([b, d, c]);
        }
    }
    for s in 0..segments {
        faces.push([top, id(rings - 1, s + 1), id(rings - 1, s)]);
    }
    build(verts, faces)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outward(m: &TriMesh) -> bool {
        let c = m.centroid();
        (0..m.topology().faces().len()).all(|f| {
            let [a, b, cc] = m.topology().faces()[f];
            let n = m.face_normal(f);
            let p = [
                (m.vertex(a)[0] + m.vertex(b)[0] + m.vertex(cc)[0]) / 3.0 - c[0],
                (m.vertex(a)[1] + m.vertex(b)[1] + m.vertex(cc)[1]) / 3.0 - c[1],
                (m.vertex(a)[2] + m.vertex(b)[2] + m.vertex(cc)[2]) / 3.0 - c[2],
            ];
            super::super::dot3(n, p) > 0.0
        })
    }

    #[test]
    fn icosphere_sizes() {
        let counts: Vec<usize> = (0..4).map(|k| icosphere(k).num_vertices()).collect();
        assert_eq!(counts, vec![12, 42, 162, 642]);
        assert!(outward(&icosphere(2)));
    }

    #[test]
    fn tube_is_closed_and_outward() {
        let t = tube(40, 16, 0.5, 10.0);
        assert_eq!(t.num_vertices(), 642);
        assert!(t.topology().validate().is_empty());
        // closed 2-manifold: V - E + F = 2
        let (v, e, f) = (
            t.num_vertices() as i64,
            t.topology().edges().len() as i64,
            t.topology().faces().len() as i64,
        );
        assert_eq!(v - e + f, 2);
        // the tube is long and thin, so test normals against the local axis point
        for fi in 0..t.topology().faces().len() {
            let [a, b, c] = t.topology().faces()[fi];
            let p: Vec<f64> = (0..3)
                .map(|k| (t.vertex(a)[k] + t.vertex(b)[k] + t.vertex(c)[k]) / 3.0)
                .collect();
            let axis = [0.0, p[1].clamp(0.0, 10.0), 0.0];
            let d = [p[0] - axis[0], p[1] - axis[1], p[2] - axis[2]];
            assert!(super::super::dot3(t.face_normal(fi), d) > 0.0, "face {fi}");
        }
    }

    #[test]
    fn grid_counts() {
        let g = grid(10, 10);
        assert_eq!(g.num_vertices(), 100);
        assert_eq!(g.topology().faces().len(), 162);
    }
}

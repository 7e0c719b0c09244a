#![allow(dead_code)]

use nalgebra::{Matrix3, Rotation3, Vector3};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gmm_core::mesh::TriMesh;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let axis = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let angle = rng.random_range(-3.0..3.0);
    Rotation3::new(axis.normalize() * angle).into_inner()
}

/// Rows of `x` mapped through `s·R·p + t`.
pub fn similarity(x: &Array2<f64>, s: f64, r: &Matrix3<f64>, t: [f64; 3]) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let v = r * Vector3::new(row[0], row[1], row[2]) * s;
        for a in 0..3 {
            row[a] = v[a] + t[a];
        }
    }
    out
}

/// `mesh` with every coordinate moved by uniform noise of half-width `amp`.
pub fn jitter(mesh: &TriMesh, amp: f64, rng: &mut ChaCha8Rng) -> TriMesh {
    let v = mesh.vertices().mapv(|x| x + rng.random_range(-amp..amp));
    mesh.with_vertices(v).unwrap()
}

pub fn random_signal(rng: &mut ChaCha8Rng, n: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, c), || rng.random_range(-1.0..1.0))
}

pub fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

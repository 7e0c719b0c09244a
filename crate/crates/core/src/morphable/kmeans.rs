//! K-means with k-means++ seeding.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::MorphError;

pub const MAX_LLOYD_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centers: Array2<f64>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    /// Inertia after each Lloyd iteration of the returned run.
    pub history: Vec<f64>,
}

fn sq_dist(a: &ArrayView1<f64>, b: &ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &ArrayView1<f64>, centers: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, row) in centers.rows().into_iter().enumerate() {
        let d = sq_dist(p, &row);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn seed_plus_plus(points: &ArrayView2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let m = points.nrows();
    let mut centers = Array2::zeros((k, points.ncols()));
    let first = rng.random_range(0..m);
    centers.row_mut(0).assign(&points.row(first));
    let mut d2: Vec<f64> = (0..m).map(|i| sq_dist(&points.row(i), &points.row(first))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = m - 1;
            for (i, &d) in d2.iter().enumerate() {
                if u < d {
                    idx = i;
                    break;
                }
                u -= d;
            }
            idx
        } else {
            rng.random_range(0..m)
        };
        centers.row_mut(c).assign(&points.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(&points.row(i), &points.row(pick)));
        }
    }
    centers
}

fn lloyd(points: &ArrayView2<f64>, mut centers: Array2<f64>) -> KMeansResult {
    let (m, k) = (points.nrows(), centers.nrows());
    let mut assignments = vec![usize::MAX; m];
    let mut history = Vec::new();
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut changed = false;
        let mut dists = vec![0.0; m];
        for i in 0..m {
            let (c, d) = nearest(&points.row(i), &centers);
            dists[i] = d;
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
        }
        // empty clusters take the point farthest from its center
        let mut counts = vec![0usize; k];
        for &a in &assignments {
            counts[a] += 1;
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..m)
                    .filter(|&i| counts[assignments[i]] > 1)
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
                if let Some(i) = far {
                    counts[assignments[i]] -= 1;
                    assignments[i] = c;
                    counts[c] = 1;
                    dists[i] = 0.0;
                    changed = true;
                }
            }
        }
        let mut sums = Array2::<f64>::zeros(centers.raw_dim());
        for (i, &a) in assignments.iter().enumerate() {
            let mut row = sums.row_mut(a);
            row += &points.row(i);
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers.row_mut(c).assign(&(&sums.row(c) / counts[c] as f64));
            }
        }
        let inertia = (0..m)
            .map(|i| sq_dist(&points.row(i), &centers.row(assignments[i])))
            .sum();
        history.push(inertia);
        if !changed {
            break;
        }
    }
    let inertia = *history.last().unwrap_or(&0.0);
    KMeansResult {
        centers,
        assignments,
        inertia,
        history,
    }
}

/// Lloyd's algorithm from k-means++ seeds until the assignment is a fixpoint
/// (or 300 iterations). `restarts` independent seedings are run and the
/// lowest-inertia result kept.
pub fn kmeans_restarts(
    points: &ArrayView2<f64>,
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<KMeansResult, MorphError> {
    let m = points.nrows();
    if k == 0 || m < k {
        return Err(MorphError::Degenerate(format!(
            "cannot form {k} clusters from {m} points"
        )));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(MorphError::Shape("non-finite point".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..restarts.max(1) {
        let run = lloyd(points, seed_plus_plus(points, k, &mut rng));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one run"))
}

pub fn kmeans(points: &ArrayView2<f64>, k: usize, seed: u64) -> Result<KMeansResult, MorphError> {
    kmeans_restarts(points, k, seed, 10)
}

/// Sum of squared distances to the nearest center.
pub fn inertia(points: &ArrayView2<f64>, centers: &Array2<f64>) -> f64 {
    (0..points.nrows()).map(|i| nearest(&points.row(i), centers).1).sum()
}

/// Cluster sizes for an assignment.
pub fn cluster_sizes(assignments: &[usize], k: usize) -> Array1<usize> {
    let mut out = Array1::zeros(k);
    for &a in assignments {
        out[a] += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_clusters_on_a_line() {
        let p = array![[0.0], [1.0], [10.0], [11.0]];
        let r = kmeans(&p.view(), 2, 3).unwrap();
        let mut c: Vec<f64> = r.centers.iter().copied().collect();
        c.sort_by(f64::total_cmp);
        assert_eq!(c, vec![0.5, 10.5]);
    }

    #[test]
    fn k_equals_m_zero_inertia() {
        let p = array![[0.0, 1.0], [2.0, 2.0], [5.0, -1.0]];
        let r = kmeans(&p.view(), 3, 0).unwrap();
        assert_eq!(r.inertia, 0.0);
    }

    #[test]
    fn inertia_non_increasing() {
        let p = Array2::from_shape_fn((60, 2), |(i, j)| {
            ((i * 31 + j * 7) as f64 * 0.37).sin() * (1 + i % 4) as f64
        });
        let r = kmeans_restarts(&p.view(), 4, 11, 1).unwrap();
        for w in r.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }
}

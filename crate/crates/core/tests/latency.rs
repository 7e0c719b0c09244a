use std::sync::Arc;
use std::time::Instant;

use ndarray::Array1;

use gmm_core::coarsening::build_hierarchy;
use gmm_core::mesh::primitives;
use gmm_core::nn::{Autoencoder, NetworkSpec};

/// Median decode time in seconds for a default-architecture network on a
/// tube template with `rings × segments + 2` vertices.
fn decode_seconds(rings: usize, segments: usize) -> (usize, f64) {
    let mesh = primitives::tube(rings, segments, 10.0, 150.0);
    let spec = NetworkSpec::defaults(mesh.num_vertices());
    let h = Arc::new(build_hierarchy(&mesh, &spec.factors).unwrap());
    let ae = Autoencoder::new(spec, h).unwrap();
    let params = ae.init_params(0);
    let z = Array1::from_elem(64, 0.1);
    ae.decode(&params, &z.view()).unwrap();
    let mut times: Vec<f64> = (0..15)
        .map(|_| {
            let t = Instant::now();
            std::hint::black_box(ae.decode(&params, &z.view()).unwrap());
            t.elapsed().as_secs_f64()
        })
        .collect();
    times.sort_by(f64::total_cmp);
    (mesh.num_vertices(), times[times.len() / 2])
}

#[test]
fn decoder_latency_grows_subquadratically() {
    let runs: Vec<(usize, f64)> = [(32, 16), (64, 32), (128, 64)]
        .map(|(r, s)| decode_seconds(r, s))
        .to_vec();
    for (n, t) in &runs {
        println!("{n:>5} vertices: {:.3} ms per decode", t * 1e3);
    }
    // least-squares slope of log time against log size
    let xs: Vec<f64> = runs.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let ys: Vec<f64> = runs.iter().map(|(_, t)| t.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 3.0, ys.iter().sum::<f64>() / 3.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    println!("latency exponent {slope:.2}");
    assert!(slope < 2.0, "decoder latency grows like n^{slope:.2}");
}

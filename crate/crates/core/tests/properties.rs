mod common;

use std::sync::Arc;

use nalgebra::Vector3;
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::Rng;

use gmm_core::camera::{fit_camera, project, WeakPerspectiveCamera};
use gmm_core::coarsening::{build_hierarchy, level_sizes};
use gmm_core::mesh::{joint_positions, parse_obj, primitives, serialize_obj, JointSpec};
use gmm_core::morphable::{finger_rig, generalized_procrustes, lbs_vertices, PoseParams};
use gmm_core::nn::{count_params, Autoencoder, NetworkSpec};
use gmm_core::spectral::{build_laplacian, cheb_filter, eigendecompose, ChebCoeffs};

use common::{jitter, max_abs, random_signal, rng, rotation, similarity};

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig {
        cases: n,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(cases(24))]

    #[test]
    fn rings_are_symmetric(sub in 0usize..3, nx in 2usize..7, ny in 2usize..7) {
        for mesh in [primitives::icosphere(sub), primitives::grid(nx, ny), primitives::tube(nx + 1, ny + 2, 1.0, 3.0)] {
            let t = mesh.topology();
            for i in 0..t.num_vertices() {
                for &j in t.ring(i) {
                    prop_assert!(t.ring(j).contains(&i), "{j} in ring({i}) but not the reverse");
                }
            }
        }
    }

    #[test]
    fn joints_follow_similarities(seed in any::<u64>(), s in 0.1f64..10.0) {
        let mut rng = rng(seed);
        let mesh = jitter(&primitives::icosphere(1), 0.1, &mut rng);
        let n = mesh.num_vertices();
        let specs: Vec<JointSpec> = (0..4)
            .map(|j| JointSpec { joint_id: j, ring_vertex_ids: (0..1 + j as usize).map(|_| rng.random_range(0..n)).collect() })
            .collect();
        let r = rotation(&mut rng);
        let t = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
        let moved = mesh.with_vertices(similarity(mesh.vertices(), s, &r, t)).unwrap();
        let a = similarity(&joint_positions(&mesh, &specs).unwrap(), s, &r, t);
        let b = joint_positions(&moved, &specs).unwrap();
        let scale = max_abs(&a).max(1.0);
        prop_assert!(max_abs(&(&a - &b)) / scale < 1e-12);
    }

    #[test]
    fn obj_round_trip_keeps_faces_and_values(seed in any::<u64>(), sub in 0usize..3) {
        let mut rng = rng(seed);
        let mesh = jitter(&primitives::icosphere(sub), 0.3, &mut rng);
        let text = serialize_obj(&mesh);
        let back = parse_obj(&text).unwrap();
        prop_assert_eq!(back.topology().faces(), mesh.topology().faces());
        let again = parse_obj(&serialize_obj(&back)).unwrap();
        prop_assert_eq!(again.vertices(), back.vertices());
        // nine significant digits are printed
        for (a, b) in back.vertices().iter().zip(mesh.vertices().iter()) {
            prop_assert!((a - b).abs() <= 5e-9 * b.abs(), "{a} vs {b}");
        }
    }

    #[test]
    fn chebyshev_filter_is_linear(seed in any::<u64>(), order in 1usize..6, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = rng(seed);
        let mesh = primitives::icosphere(1);
        let lap = build_laplacian(mesh.topology(), None).unwrap();
        let coeffs = ChebCoeffs::new((0..order).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let f = random_signal(&mut rng, mesh.num_vertices(), 2);
        let g = random_signal(&mut rng, mesh.num_vertices(), 2);
        let lhs = cheb_filter(&lap, &coeffs, &(&f * a + &g * b).view()).unwrap();
        let rhs = cheb_filter(&lap, &coeffs, &f.view()).unwrap() * a + cheb_filter(&lap, &coeffs, &g.view()).unwrap() * b;
        prop_assert!(max_abs(&(lhs - rhs)) < 1e-10);
    }

    #[test]
    fn chebyshev_filter_is_local(seed in any::<u64>(), order in 1usize..5) {
        let mut rng = rng(seed);
        let mesh = primitives::grid(8, 8);
        let t = mesh.topology();
        let n = t.num_vertices();
        let lap = build_laplacian(t, None).unwrap();
        let coeffs = ChebCoeffs::new((0..order).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let i = rng.random_range(0..n);
        // hop distances from i
        let mut hops = vec![usize::MAX; n];
        hops[i] = 0;
        let mut frontier = vec![i];
        while let Some(v) = frontier.pop() {
            for &w in t.ring(v) {
                if hops[w] > hops[v] + 1 {
                    hops[w] = hops[v] + 1;
                    frontier.push(w);
                }
            }
        }
        let f = random_signal(&mut rng, n, 1);
        let base = cheb_filter(&lap, &coeffs, &f.view()).unwrap();
        for far in (0..n).filter(|&v| hops[v] > order - 1) {
            let mut g = f.clone();
            g[[far, 0]] += 1.0;
            let out = cheb_filter(&lap, &coeffs, &g.view()).unwrap();
            prop_assert_eq!(out[[i, 0]], base[[i, 0]], "vertex {} at {} hops leaked", far, hops[far]);
        }
    }

    #[test]
    fn hierarchy_sizes_and_levels_are_valid(factors in prop::collection::vec(1usize..4, 1..4)) {
        let mesh = primitives::icosphere(2);
        prop_assume!(*level_sizes(mesh.num_vertices(), &factors).last().unwrap() >= 12);
        let h = build_hierarchy(&mesh, &factors).unwrap();
        prop_assert_eq!(h.sizes(), level_sizes(mesh.num_vertices(), &factors));
        for level in h.levels() {
            prop_assert!(level.validate().is_empty());
        }
        let again = build_hierarchy(&mesh, &factors).unwrap();
        for k in 0..factors.len() {
            prop_assert_eq!(h.level(k + 1).faces(), again.level(k + 1).faces());
            prop_assert_eq!(h.down_transform(k).data(), again.down_transform(k).data());
            prop_assert_eq!(h.up_transform(k).data(), again.up_transform(k).data());
        }
    }

    #[test]
    fn decoding_is_pure(seed in any::<u64>()) {
        let mesh = primitives::icosphere(1);
        let spec = NetworkSpec {
            template_vertices: mesh.num_vertices(),
            factors: vec![2, 2],
            filters: vec![3, 4],
            latent: 3,
            cheb_order: 3,
            leaky_slope: 0.2,
        };
        let h = Arc::new(build_hierarchy(&mesh, &spec.factors).unwrap());
        let ae = Autoencoder::new(spec.clone(), h.clone()).unwrap();
        let params = ae.init_params(seed);
        let counted = count_params(&spec, &h.sizes()).unwrap();
        prop_assert_eq!(counted.total, params.num_scalars());
        let mut rng = rng(seed);
        let z = Array1::from_shape_simple_fn(3, || rng.random_range(-1.0..1.0));
        let a = ae.decode(&params, &z.view()).unwrap();
        let b = ae.decode(&params, &z.view()).unwrap();
        prop_assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn lbs_commutes_with_rigid_motion(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let rig = finger_rig();
        let mut pose = PoseParams::rest(rig.tree.num_joints());
        pose.angles.mapv_inplace(|_| rng.random_range(-0.8..0.8));
        let rest = rig.template.vertices();
        let posed = lbs_vertices(&rest.view(), &rig.tree, &pose).unwrap();

        // apply the rigid motion to every joint transform and blend by hand
        let r = rotation(&mut rng);
        let t = Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let g = rig.tree.forward_kinematics(&pose.angles.view());
        let mut blended = Array2::zeros(rest.raw_dim());
        for v in 0..rest.nrows() {
            let x = Vector3::new(rest[[v, 0]], rest[[v, 1]], rest[[v, 2]]);
            let mut acc = Vector3::zeros();
            for (j, (a, b)) in g.iter().enumerate() {
                acc += (r * (a * x + b) + t) * rig.tree.weights[[v, j]];
            }
            for c in 0..3 {
                blended[[v, c]] = acc[c];
            }
        }
        let expected = similarity(&posed, 1.0, &r, [t.x, t.y, t.z]);
        prop_assert!(max_abs(&(blended - expected)) < 1e-10);
    }

    #[test]
    fn gpa_identifies_similar_copies(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let base = jitter(&primitives::icosphere(1), 0.2, &mut rng);
        let copies: Vec<_> = (0..4)
            .map(|_| {
                let r = rotation(&mut rng);
                let t = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
                base.with_vertices(similarity(base.vertices(), rng.random_range(0.5..3.0), &r, t)).unwrap()
            })
            .collect();
        let gpa = generalized_procrustes(&copies).unwrap();
        for m in &gpa.meshes[1..] {
            prop_assert!(max_abs(&(m.vertices() - gpa.meshes[0].vertices())) < 1e-8);
        }
        let c = gpa.mean.centroid();
        prop_assert!(c.iter().all(|v| v.abs() < 1e-12));
        prop_assert!(gpa.residuals.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn projection_is_homogeneous_in_scale(seed in any::<u64>(), s in 0.1f64..20.0) {
        let mut rng = rng(seed);
        let mut pts = random_signal(&mut rng, 6, 3);
        let mean = pts.mean_axis(ndarray::Axis(0)).unwrap();
        pts -= &mean;
        let cam = |scale| WeakPerspectiveCamera { scale, rot: [0.0; 3], t: [0.0; 2] };
        let a = project(&cam(s), &pts.view()).unwrap();
        let b = project(&cam(2.0 * s), &pts.view()).unwrap();
        prop_assert_eq!(b, a * 2.0);
    }

    #[test]
    fn fitted_camera_beats_perturbations(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let joints = random_signal(&mut rng, 8, 3) * 20.0;
        let truth = WeakPerspectiveCamera { scale: rng.random_range(0.5..5.0), rot: [0.0; 3], t: [rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)] };
        let observed = project(&truth, &joints.view()).unwrap() + &(random_signal(&mut rng, 8, 2) * 3.0);
        let cost = |c: &WeakPerspectiveCamera| {
            let d = project(c, &joints.view()).unwrap() - &observed;
            d.mapv(|v| v * v).sum()
        };
        let fit = fit_camera(&joints.view(), &observed.view()).unwrap();
        let best = cost(&fit);
        for _ in 0..1000 {
            let p = WeakPerspectiveCamera {
                scale: fit.scale * (1.0 + rng.random_range(-0.05..0.05)),
                rot: fit.rot,
                t: [fit.t[0] + rng.random_range(-1.0..1.0), fit.t[1] + rng.random_range(-1.0..1.0)],
            };
            prop_assert!(best <= cost(&p) + 1e-9 * best.max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(cases(8))]

    #[test]
    fn rescaled_spectrum_lies_in_unit_interval(seed in any::<u64>(), nx in 2usize..8, ny in 2usize..8) {
        let mut rng = rng(seed);
        let mesh = jitter(&primitives::grid(nx, ny), 0.1, &mut rng);
        let lap = build_laplacian(mesh.topology(), None).unwrap();
        let basis = eigendecompose(&lap).unwrap();
        let lmax = lap.lambda_max();
        for &l in basis.eigenvalues.iter() {
            let t = 2.0 * l / lmax - 1.0;
            prop_assert!((-1.0 - 1e-12..=1.0 + 0.011).contains(&t), "rescaled eigenvalue {t}");
        }
    }
}

mod common;

use std::sync::Arc;

use gmm_core::coarsening::build_hierarchy;
use gmm_core::mesh::{primitives, TriMesh};
use gmm_core::nn::checkpoint::AeCheckpoint;
use gmm_core::nn::{train_autoencoder, AdamWConfig, Autoencoder, NetworkSpec, TrainConfig, TrainingRun};
use gmm_core::Exec;

use common::{jitter, rng};

fn toy() -> (Autoencoder, Vec<TriMesh>) {
    let mesh = primitives::icosphere(1);
    let spec = NetworkSpec {
        template_vertices: mesh.num_vertices(),
        factors: vec![2, 2],
        filters: vec![8, 8],
        latent: 4,
        cheb_order: 3,
        leaky_slope: 0.2,
    };
    let h = Arc::new(build_hierarchy(&mesh, &spec.factors).unwrap());
    let mut r = rng(1);
    let meshes = (0..12).map(|_| jitter(&mesh, 0.2, &mut r)).collect();
    (Autoencoder::new(spec, h).unwrap(), meshes)
}

fn train(ae: &Autoencoder, data: &[TriMesh], config: &TrainConfig, exec: Exec) -> TrainingRun {
    train_autoencoder(ae, data, data, config, exec, None, |_| {}).unwrap()
}

#[test]
fn single_sample_is_memorised() {
    let (ae, meshes) = toy();
    let one = &meshes[..1];
    let v = one[0].vertices();
    let mean = v.mean().unwrap();
    let std = (v.mapv(|x| (x - mean).powi(2)).mean().unwrap()).sqrt();
    let config = TrainConfig {
        epochs: 200,
        batch_size: 1,
        optimizer: AdamWConfig {
            lr: 1e-2,
            ..AdamWConfig::default()
        },
        ..TrainConfig::default()
    };
    let run = train(&ae, one, &config, Exec::Sequential);
    let last = run.metrics.iter().rev().find(|m| m.split == "train").unwrap();
    assert!(last.l1_mm < 0.01 * std, "L1 {} vs std {std}", last.l1_mm);
}

#[test]
fn same_seed_same_run_in_both_modes() {
    let (ae, meshes) = toy();
    let config = TrainConfig {
        epochs: 3,
        batch_size: 4,
        chunk_size: 2,
        ..TrainConfig::default()
    };
    let a = train(&ae, &meshes, &config, Exec::Sequential);
    let b = train(&ae, &meshes, &config, Exec::Parallel);
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.params, b.params);
    let c = train(&ae, &meshes, &TrainConfig { seed: 9, ..config }, Exec::Sequential);
    assert_ne!(a.params, c.params);
}

#[test]
fn checkpoint_round_trips_and_refuses_other_specs() {
    let (ae, meshes) = toy();
    let config = TrainConfig {
        epochs: 1,
        batch_size: 4,
        ..TrainConfig::default()
    };
    let run = train(&ae, &meshes, &config, Exec::Sequential);
    let ck = AeCheckpoint {
        spec: ae.spec().clone(),
        hierarchy: ae.hierarchy().as_ref().clone(),
        params: run.params,
        optimizer: Some(run.optimizer),
        normalizer: run.normalizer,
        latent_stats: None,
        mm_per_unit: 1.0,
    };
    let dir = tempfile::tempdir().unwrap();
    let p1 = dir.path().join("a.gmm");
    let p2 = dir.path().join("b.gmm");
    ck.save(&p1).unwrap();
    AeCheckpoint::load(&p1).unwrap().save(&p2).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());

    let mut other = ae.spec().clone();
    other.latent += 1;
    assert!(AeCheckpoint::load_for_spec(&p1, &other).is_err());
    assert!(AeCheckpoint::load_for_spec(&p1, ae.spec()).is_ok());
}

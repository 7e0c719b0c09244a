use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use ndarray::Array1;
use serde::de::DeserializeOwned;
use serde_json::json;

use gmm_core::camera::project;
use gmm_core::coarsening::build_hierarchy;
use gmm_core::dataset::{generate_dataset, Dataset, DatasetConfig, Split};
use gmm_core::mesh::{joint_positions, parse_obj, serialize_obj, TriMesh};
use gmm_core::morphable::{finger_rig, hand_rig, lbs_pose, tube_rig, ModelConfig, Rig};
use gmm_core::nn::checkpoint::AeCheckpoint;
use gmm_core::nn::{
    count_params, evaluate_l1, interpolate_latents, latent_statistics, sample_latents, train_autoencoder,
    write_metrics_csv, AdamWConfig, AeLossWeights, Autoencoder, NetworkSpec, TrainConfig,
};
use gmm_core::pipeline::{
    predict, train_encoder, write_encoder_metrics_csv, EncoderCheckpoint, EncoderSpec, EncoderTrainConfig,
    FrozenDecoder, PipelineWeights,
};
use gmm_core::study::{half_articulated_pose, pose_study, rest_pose, write_study_csv, ReferencePose};
use gmm_core::Exec;

use crate::settings;
use crate::{Cli, Command};

pub fn run(cli: &Cli) -> Result<()> {
    let exec = if cli.sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    };
    let file = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            Some(
                serde_json::from_str::<serde_json::Value>(&text)
                    .with_context(|| format!("parsing config {}", p.display()))?,
            )
        }
        None => None,
    };
    let out = cli.output_dir.as_path();
    fs::create_dir_all(out).with_context(|| format!("creating output dir {}", out.display()))?;
    match &cli.command {
        Command::GenDataset(a) => gen_dataset(&a.resolve(section(&file, "gen-dataset")?.as_ref()), out, exec),
        Command::TrainAe(a) => train_ae(&a.resolve(section(&file, "train-ae")?.as_ref()), out, exec),
        Command::TrainEncoder(a) => train_enc(&a.resolve(section(&file, "train-encoder")?.as_ref()), out, exec),
        Command::Eval(a) => eval(&a.resolve(section(&file, "eval")?.as_ref()), out, exec),
        Command::Interpolate(a) => interpolate(&a.resolve(section(&file, "interpolate")?.as_ref()), out),
        Command::Sample(a) => sample(&a.resolve(section(&file, "sample")?.as_ref()), out),
        Command::Reconstruct(a) => reconstruct(&a.resolve(section(&file, "reconstruct")?.as_ref()), out),
        Command::PoseStudy(a) => study(&a.resolve(section(&file, "pose-study")?.as_ref()), out, exec),
    }
}

fn section<T: DeserializeOwned>(file: &Option<serde_json::Value>, key: &str) -> Result<Option<T>> {
    match file.as_ref().and_then(|f| f.get(key)) {
        Some(v) => Ok(Some(
            serde_json::from_value(v.clone()).with_context(|| format!("config section {key:?}"))?,
        )),
        None => Ok(None),
    }
}

fn or_default(p: &Option<PathBuf>, out: &Path, name: &str) -> PathBuf {
    p.clone().unwrap_or_else(|| out.join(name))
}

fn require_file(p: &Path, what: &str) -> Result<()> {
    ensure!(p.is_file(), "{what} {} does not exist", p.display());
    Ok(())
}

fn load_dataset(p: &Path) -> Result<Dataset> {
    ensure!(p.is_dir(), "dataset directory {} does not exist", p.display());
    Dataset::load(p).with_context(|| format!("loading dataset {}", p.display()))
}

fn load_decoder(p: &Path) -> Result<AeCheckpoint> {
    require_file(p, "decoder checkpoint")?;
    AeCheckpoint::load(p).with_context(|| format!("loading decoder checkpoint {}", p.display()))
}

fn write(p: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(p, contents).with_context(|| format!("writing {}", p.display()))
}

fn write_json(p: &Path, v: &serde_json::Value) -> Result<()> {
    write(p, serde_json::to_string_pretty(v)? + "\n")
}

/// Reads an OBJ and rebinds it to `template`'s topology.
fn read_mesh(p: &Path, template: &TriMesh) -> Result<TriMesh> {
    require_file(p, "mesh")?;
    let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
    let m = parse_obj(&text).with_context(|| format!("parsing {}", p.display()))?;
    ensure!(
        m.topology().faces() == template.topology().faces(),
        "{} does not share the decoder's template topology",
        p.display()
    );
    Ok(template.with_vertices(m.into_vertices())?)
}

fn split_of(name: &str) -> Result<Split> {
    Ok(match name {
        "train" => Split::Train,
        "val" => Split::Val,
        "test" => Split::Test,
        other => bail!("unknown split {other:?}; expected train, val or test"),
    })
}

fn rig_of(name: &str) -> Result<Rig> {
    Ok(match name {
        "tube" => tube_rig(),
        "hand" => hand_rig(),
        "finger" => finger_rig(),
        path => Rig::load(Path::new(path)).with_context(|| format!("loading rig {path}"))?,
    })
}

fn reference_pose(rig: &Rig, name: &str) -> Result<ReferencePose> {
    Ok(match name {
        "rest" => rest_pose(rig),
        "half-articulated" => half_articulated_pose(rig),
        other => bail!("unknown reference pose {other:?}; expected rest or half-articulated"),
    })
}

fn gen_dataset(s: &settings::GenDataset, out: &Path, exec: Exec) -> Result<()> {
    let rig = rig_of(&s.rig)?;
    ensure!(s.split.0.len() == 3, "--split needs three fractions");
    let config = DatasetConfig {
        count: s.count,
        clusters: s.clusters,
        jitter: s.jitter,
        corpus: s.corpus,
        seed: s.seed,
        model: ModelConfig {
            registrations: s.registrations,
            components: s.components,
            ..ModelConfig::default()
        },
        image_size: s.image_size,
        visibility: s.visibility,
        split: [s.split.0[0], s.split.0[1], s.split.0[2]],
        ..DatasetConfig::default()
    };
    config.validate()?;
    let dir = out.join(&s.name);
    let ds = generate_dataset(&rig, &config, exec)?;
    ds.save(&dir)
        .with_context(|| format!("saving dataset to {}", dir.display()))?;
    println!(
        "{}",
        json!({
            "dataset": dir,
            "samples": ds.len(),
            "train": ds.indices(Split::Train).len(),
            "val": ds.indices(Split::Val).len(),
            "test": ds.indices(Split::Test).len(),
            "per_vertex_std_mm": ds.meta.per_vertex_std,
        })
    );
    Ok(())
}

fn train_ae(s: &settings::TrainAe, out: &Path, exec: Exec) -> Result<()> {
    let ds = load_dataset(&or_default(&s.dataset, out, "dataset"))?;
    let spec = NetworkSpec {
        template_vertices: ds.rig.template.num_vertices(),
        factors: s.factors.0.clone(),
        filters: s.filters.0.clone(),
        latent: s.latent,
        cheb_order: s.cheb_order,
        leaky_slope: s.leaky_slope,
    };
    spec.validate()?;
    let (hierarchy, resume) = match &s.resume {
        Some(p) => {
            require_file(p, "resume checkpoint")?;
            let ck = AeCheckpoint::load_for_spec(p, &spec).with_context(|| format!("resuming from {}", p.display()))?;
            let opt = ck
                .optimizer
                .with_context(|| format!("{} holds no optimizer state", p.display()))?;
            (ck.hierarchy, Some((ck.params, opt, ck.normalizer)))
        }
        None => {
            let pose = reference_pose(&ds.rig, &s.decimation_pose)?;
            let reference = lbs_pose(&ds.rig.template, &ds.rig.tree, &pose.pose)?;
            (build_hierarchy(&reference, &spec.factors)?, None)
        }
    };
    let hierarchy = Arc::new(hierarchy);
    let ae = Autoencoder::new(spec.clone(), hierarchy.clone())?;
    let config = TrainConfig {
        batch_size: s.batch_size,
        epochs: s.epochs,
        seed: s.seed,
        optimizer: AdamWConfig {
            lr: s.lr,
            weight_decay: s.weight_decay,
            ..AdamWConfig::default()
        },
        loss: AeLossWeights {
            latent: s.latent_penalty,
            weight_decay: s.l2,
        },
        chunk_size: s.chunk_size,
        mm_per_unit: 1.0,
        lr_decay: s.lr_decay,
    };
    let train = ds.meshes_of(Split::Train);
    let val = ds.meshes_of(Split::Val);
    let run = train_autoencoder(&ae, &train, &val, &config, exec, resume, |m| {
        eprintln!(
            "epoch {:>4} {:<5} L1 {:.4} mm  loss {:.6}",
            m.epoch, m.split, m.l1_mm, m.loss
        )
    })?;
    let stats = latent_statistics(&ae, &run.params, &run.normalizer, &train)?;
    let ck = AeCheckpoint {
        spec,
        hierarchy: (*hierarchy).clone(),
        params: run.params,
        optimizer: Some(run.optimizer),
        normalizer: run.normalizer,
        latent_stats: Some(stats),
        mm_per_unit: 1.0,
    };
    let ck_path = out.join(format!("{}.gmm", s.name));
    ck.save(&ck_path)
        .with_context(|| format!("saving {}", ck_path.display()))?;
    let mut csv = Vec::new();
    write_metrics_csv(&mut csv, &run.metrics)?;
    write(&out.join(format!("{}_metrics.csv", s.name)), csv)?;
    println!("{}", json!({ "checkpoint": ck_path }));
    Ok(())
}

fn train_enc(s: &settings::TrainEncoder, out: &Path, exec: Exec) -> Result<()> {
    let dec_path = or_default(&s.decoder, out, "ae.gmm");
    let ck = load_decoder(&dec_path)?;
    let ds = load_dataset(&or_default(&s.dataset, out, "dataset"))?;
    ensure!(
        ck.hierarchy.reference().topology().faces() == ds.rig.template.topology().faces(),
        "decoder {} was trained on a different template than the dataset",
        dec_path.display()
    );
    let decoder = FrozenDecoder::from_checkpoint(&ck, ds.rig.keypoints.clone())?;
    let train = ds.pipeline_samples(&ds.indices(Split::Train), s.noise_mm, s.seed);
    let val = ds.pipeline_samples(&ds.indices(Split::Val), s.noise_mm, s.seed);
    let spec = EncoderSpec {
        input_dim: ds.input_dim(),
        hidden: s.hidden.0.clone(),
        latent: ck.spec.latent,
        leaky_slope: 0.2,
    };
    let frame = ds.encoder_frame(&spec, &train, ck.latent_stats.as_ref())?;
    let config = EncoderTrainConfig {
        epochs: s.epochs,
        batch_size: s.batch_size,
        seed: s.seed,
        optimizer: AdamWConfig {
            lr: s.lr,
            weight_decay: s.weight_decay,
            ..AdamWConfig::default()
        },
        weights: PipelineWeights {
            mesh: 1.0,
            kpts: s.kpts_weight,
            embed: s.embed_weight,
        },
        chunk_size: s.chunk_size,
    };
    let run = train_encoder(&spec, &frame, &decoder, &train, &val, &config, exec, |m| {
        eprintln!(
            "epoch {:>4} {:<5} mesh L1 {:.4} mm  reproj {:.3} px",
            m.epoch, m.split, m.mesh_l1_mm, m.reproj_px
        )
    })?;
    let enc = EncoderCheckpoint {
        spec,
        frame,
        params: run.params,
        optimizer: Some(run.optimizer),
        decoder_spec: ck.spec.clone(),
    };
    let path = out.join(format!("{}.gmm", s.name));
    enc.save(&path).with_context(|| format!("saving {}", path.display()))?;
    let mut csv = Vec::new();
    write_encoder_metrics_csv(&mut csv, &run.metrics)?;
    write(&out.join(format!("{}_metrics.csv", s.name)), csv)?;
    println!("{}", json!({ "checkpoint": path }));
    Ok(())
}

fn eval(s: &settings::Eval, out: &Path, exec: Exec) -> Result<()> {
    let split = split_of(&s.split)?;
    let dec_path = or_default(&s.decoder, out, "ae.gmm");
    let ck = load_decoder(&dec_path)?;
    let encoder = match &s.encoder {
        Some(p) => {
            require_file(p, "encoder checkpoint")?;
            Some(EncoderCheckpoint::load(p).with_context(|| format!("loading encoder checkpoint {}", p.display()))?)
        }
        None => None,
    };
    let ds = load_dataset(&or_default(&s.dataset, out, "dataset"))?;
    let ids = ds.indices(split);
    ensure!(!ids.is_empty(), "split {} is empty", s.split);
    let hierarchy = Arc::new(ck.hierarchy.clone());
    let ae = Autoencoder::new(ck.spec.clone(), hierarchy.clone())?;
    let meshes: Vec<TriMesh> = ids.iter().map(|&i| ds.meshes[i].clone()).collect();
    let xs: Vec<_> = meshes
        .iter()
        .map(|m| ck.normalizer.normalize(&m.vertices().view()))
        .collect();
    let (l1_mm, _) = evaluate_l1(
        &ae,
        &ck.params,
        &ck.normalizer,
        &xs,
        AeLossWeights::default(),
        ck.mm_per_unit,
        exec,
    )?;

    let k = ds.rig.keypoints.len();
    let mut per_joint = vec![0.0; k];
    let mut seen = vec![0usize; k];
    let decoder = FrozenDecoder::from_checkpoint(&ck, ds.rig.keypoints.clone())?;
    for &i in &ids {
        let r = &ds.records[i];
        let projected = match &encoder {
            Some(enc) => {
                enc.check_decoder(&decoder)?;
                let x = ds.encoder_input(i, s.noise_mm, s.seed);
                predict(&enc.spec, &enc.params, &enc.frame, &decoder, &x.view())?.keypoints_2d
            }
            None => {
                let (y, _) = ae.forward(
                    &ck.params,
                    &ck.normalizer.normalize(&ds.meshes[i].vertices().view()).view(),
                )?;
                let mesh = decoder.template().with_vertices(ck.normalizer.denormalize(&y.view()))?;
                project(&r.camera, &joint_positions(&mesh, &ds.rig.keypoints)?.view())?
            }
        };
        for j in 0..k {
            if r.visible[j] {
                let dx = projected[[j, 0]] - r.keypoints_2d[[j, 0]];
                let dy = projected[[j, 1]] - r.keypoints_2d[[j, 1]];
                per_joint[j] += (dx * dx + dy * dy).sqrt();
                seen[j] += 1;
            }
        }
    }
    let per_joint: Vec<f64> = per_joint
        .iter()
        .zip(&seen)
        .map(|(d, &c)| if c > 0 { d / c as f64 } else { 0.0 })
        .collect();
    let total_seen: usize = seen.iter().sum();
    let mean_px = per_joint.iter().zip(&seen).map(|(d, &c)| d * c as f64).sum::<f64>() / total_seen.max(1) as f64;

    let counts = count_params(&ck.spec, &hierarchy.sizes())?;
    let z = ck
        .latent_stats
        .as_ref()
        .map(|(mu, _)| mu.clone())
        .unwrap_or_else(|| Array1::zeros(ck.spec.latent));
    let runs = s.latency_runs.max(1);
    let start = Instant::now();
    for _ in 0..runs {
        std::hint::black_box(ae.decode(&ck.params, &z.view())?);
    }
    let latency_ms = start.elapsed().as_secs_f64() * 1e3 / runs as f64;

    let report = json!({
        "split": s.split,
        "samples": ids.len(),
        "mesh_l1_mm": l1_mm,
        "keypoint_error_px": mean_px,
        "keypoint_error_px_per_joint": per_joint,
        "keypoints_from": if encoder.is_some() { "encoder" } else { "autoencoder+true camera" },
        "decoder_params": counts.decoder,
        "total_params": counts.total,
        "decoder_latency_ms": latency_ms,
        "latency_runs": runs,
        "num_vertices": ae.num_vertices(),
    });
    write_json(&out.join(format!("{}.json", s.name)), &report)?;
    let mut csv = String::from("metric,value\n");
    csv += &format!("mesh_l1_mm,{l1_mm:.9e}\nkeypoint_error_px,{mean_px:.9e}\n");
    for (j, e) in per_joint.iter().enumerate() {
        csv += &format!("keypoint_error_px_{j},{e:.9e}\n");
    }
    csv += &format!(
        "decoder_params,{}\ntotal_params,{}\ndecoder_latency_ms,{latency_ms:.6}\n",
        counts.decoder, counts.total
    );
    write(&out.join(format!("{}.csv", s.name)), csv)?;
    println!("{report}");
    Ok(())
}

struct Decoding {
    ck: AeCheckpoint,
    ae: Autoencoder,
}

impl Decoding {
    fn load(p: &Option<PathBuf>, out: &Path) -> Result<Self> {
        let ck = load_decoder(&or_default(p, out, "ae.gmm"))?;
        let ae = Autoencoder::new(ck.spec.clone(), Arc::new(ck.hierarchy.clone()))?;
        Ok(Self { ck, ae })
    }

    fn template(&self) -> &TriMesh {
        self.ck.hierarchy.reference()
    }

    fn encode(&self, m: &TriMesh) -> Result<Array1<f64>> {
        Ok(self.ae.encode(
            &self.ck.params,
            &self.ck.normalizer.normalize(&m.vertices().view()).view(),
        )?)
    }

    fn decode(&self, z: &Array1<f64>) -> Result<TriMesh> {
        let y = self.ae.decode(&self.ck.params, &z.view())?;
        Ok(self
            .template()
            .with_vertices(self.ck.normalizer.denormalize(&y.view()))?)
    }
}

fn interpolate(s: &settings::Interpolate, out: &Path) -> Result<()> {
    ensure!(s.steps >= 2, "--steps must be at least 2");
    let d = Decoding::load(&s.decoder, out)?;
    let a = read_mesh(s.a.as_deref().context("--a is required")?, d.template())?;
    let b = read_mesh(s.b.as_deref().context("--b is required")?, d.template())?;
    let path = interpolate_latents(&d.encode(&a)?, &d.encode(&b)?, s.steps);
    let mut files = Vec::new();
    for (i, z) in path.iter().enumerate() {
        let p = out.join(format!("{}_{i:02}.obj", s.name));
        write(&p, serialize_obj(&d.decode(z)?))?;
        files.push(p);
    }
    println!("{}", json!({ "meshes": files }));
    Ok(())
}

fn sample(s: &settings::Sample, out: &Path) -> Result<()> {
    let d = Decoding::load(&s.decoder, out)?;
    let zs = sample_latents(d.ck.spec.latent, d.ck.latent_stats.as_ref(), s.count, s.seed);
    let mut files = Vec::new();
    for (i, z) in zs.iter().enumerate() {
        let p = out.join(format!("{}_{i:03}.obj", s.name));
        write(&p, serialize_obj(&d.decode(z)?))?;
        files.push(p);
    }
    println!("{}", json!({ "meshes": files }));
    Ok(())
}

fn reconstruct(s: &settings::Reconstruct, out: &Path) -> Result<()> {
    let d = Decoding::load(&s.decoder, out)?;
    let input = read_mesh(s.input.as_deref().context("--input is required")?, d.template())?;
    let r = d.decode(&d.encode(&input)?)?;
    let l1_mm = (r.vertices() - input.vertices()).mapv(f64::abs).mean().unwrap_or(0.0) * d.ck.mm_per_unit;
    let p = out.join(format!("{}.obj", s.name));
    write(&p, serialize_obj(&r))?;
    let report = json!({ "mesh": p, "l1_mm": l1_mm });
    write_json(&out.join(format!("{}.json", s.name)), &report)?;
    println!("{report}");
    Ok(())
}

fn study(s: &settings::PoseStudy, out: &Path, exec: Exec) -> Result<()> {
    let ds = load_dataset(&or_default(&s.dataset, out, "dataset"))?;
    let poses = s
        .poses
        .0
        .iter()
        .map(|name| reference_pose(&ds.rig, name))
        .collect::<Result<Vec<_>>>()?;
    let spec = NetworkSpec {
        template_vertices: ds.rig.template.num_vertices(),
        factors: s.factors.0.clone(),
        filters: s.filters.0.clone(),
        latent: s.latent,
        ..NetworkSpec::defaults(ds.rig.template.num_vertices())
    };
    spec.validate()?;
    let config = TrainConfig {
        batch_size: s.batch_size,
        epochs: s.epochs,
        seed: s.seed,
        optimizer: AdamWConfig {
            lr: s.lr,
            ..AdamWConfig::default()
        },
        ..TrainConfig::default()
    };
    let rows = pose_study(
        &ds.rig,
        &poses,
        &spec,
        &s.factors.0,
        &ds.meshes_of(Split::Train),
        &ds.meshes_of(Split::Val),
        &config,
        exec,
    )?;
    let mut csv = Vec::new();
    write_study_csv(&mut csv, &rows)?;
    let p = out.join(format!("{}.csv", s.name));
    write(&p, &csv)?;
    print!("{}", String::from_utf8(csv)?);
    Ok(())
}

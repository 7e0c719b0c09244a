//! Synthetic articulated-mesh datasets: pose/shape samples from the
//! morphable model, rendered keypoints and a seeded train/val/test split.
//!
//! On disk a dataset is a directory with `dataset.json` (settings and
//! statistics), `manifest.json` (one record per sample), `meshes/*.obj` and
//! a copy of the rig under `rig/`.

use std::path::Path;
use std::sync::Arc;

use nalgebra::Vector3;
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::camera::{project, WeakPerspectiveCamera};
use crate::mesh::{format_sig, joint_positions, parse_obj, serialize_obj, TriMesh};
use crate::morphable::rotation::{axis_angle, to_axis_angle};
use crate::morphable::{
    pose_corpus, sample_pose_with, ModelConfig, MorphError, MorphableModel, PoseClusterBook, PoseParams, Rig,
    SamplerConfig,
};
use crate::pipeline::{input_statistics, EncoderFrame, EncoderSpec, PipelineError, PipelineSample};
use crate::Exec;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("sample {id}: mesh topology differs from the template")]
    Topology { id: usize },
    #[error("invalid dataset settings: {0}")]
    Config(String),
    #[error(transparent)]
    Morph(#[from] MorphError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub count: usize,
    /// Euler-angle cluster centers per joint.
    pub clusters: usize,
    pub jitter: f64,
    /// Poses clustered to build the cluster book.
    pub corpus: usize,
    pub seed: u64,
    pub model: ModelConfig,
    /// Square image side, pixels.
    pub image_size: f64,
    /// Fraction of the image the rest template spans at nominal scale.
    pub fill: f64,
    /// Camera rotation jitter per axis, radians.
    pub camera_jitter: f64,
    /// Relative std of the camera scale.
    pub scale_jitter: f64,
    /// Image-plane shift std, pixels.
    pub shift_px: f64,
    /// Probability that a keypoint is annotated.
    pub visibility: f64,
    /// Train / val / test fractions.
    pub split: [f64; 3],
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            count: 2000,
            clusters: 64,
            jitter: 0.05,
            corpus: 2000,
            seed: 0,
            model: ModelConfig::default(),
            image_size: 256.0,
            fill: 0.5,
            camera_jitter: 0.15,
            scale_jitter: 0.1,
            shift_px: 10.0,
            visibility: 0.95,
            split: [0.87, 0.065, 0.065],
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.count < 3 {
            return Err(DatasetError::Config("count must be at least 3".into()));
        }
        if self.clusters == 0 || self.corpus < self.clusters {
            return Err(DatasetError::Config("need clusters >= 1 and corpus >= clusters".into()));
        }
        let s: f64 = self.split.iter().sum();
        if self.split.iter().any(|&f| !(0.0..=1.0).contains(&f)) || (s - 1.0).abs() > 1e-9 {
            return Err(DatasetError::Config(
                "split fractions must be in [0, 1] and sum to 1".into(),
            ));
        }
        if !(self.image_size > 0.0 && self.fill > 0.0) || !(0.0..=1.0).contains(&self.visibility) {
            return Err(DatasetError::Config(
                "image size, fill and visibility out of range".into(),
            ));
        }
        Ok(())
    }
}

/// Mean camera the sampler jitters around.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPrior {
    pub camera: WeakPerspectiveCamera,
    /// Std of the image-plane translation, pixels.
    pub t_spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: usize,
    pub mesh: String,
    pub split: Split,
    pub pose: PoseParams,
    pub shape: Vec<f64>,
    pub keypoints_3d: Array2<f64>,
    pub keypoints_2d: Array2<f64>,
    pub visible: Vec<bool>,
    pub camera: WeakPerspectiveCamera,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub config: DatasetConfig,
    pub rig_name: String,
    pub num_vertices: usize,
    pub camera_prior: CameraPrior,
    /// Mean over vertex coordinates of the across-sample standard deviation, mm.
    pub per_vertex_std: f64,
    pub max_edge_length: f64,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub rig: Rig,
    pub records: Vec<SampleRecord>,
    pub meshes: Vec<TriMesh>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const META_FILE: &str = "dataset.json";

/// Rounds to what the OBJ writer keeps, so in-memory and on-disk data agree.
fn obj_round(x: f64) -> f64 {
    format_sig(x, 9).parse().expect("formatted float parses")
}

/// Mean over coordinates of the across-sample standard deviation.
pub fn per_vertex_std(meshes: &[TriMesh]) -> f64 {
    if meshes.is_empty() {
        return 0.0;
    }
    let n = meshes[0].num_vertices();
    let mut mean = Array2::<f64>::zeros((n, 3));
    for m in meshes {
        mean += m.vertices();
    }
    mean /= meshes.len() as f64;
    let mut var = Array2::<f64>::zeros((n, 3));
    for m in meshes {
        var += &(m.vertices() - &mean).mapv(|d| d * d);
    }
    var /= meshes.len() as f64;
    var.mapv(f64::sqrt).mean().unwrap_or(0.0)
}

pub fn max_edge_length(meshes: &[TriMesh]) -> f64 {
    meshes.iter().flat_map(|m| m.edge_lengths()).fold(0.0, f64::max)
}

fn camera_prior(rig: &Rig, config: &DatasetConfig) -> CameraPrior {
    let v = rig.template.vertices();
    let lo = v.fold_axis(Axis(0), f64::INFINITY, |a, &b| a.min(b));
    let hi = v.fold_axis(Axis(0), f64::NEG_INFINITY, |a, &b| a.max(b));
    let extent = (&hi - &lo).mapv(|d| d * d).sum().sqrt();
    let scale = config.fill * config.image_size / extent.max(1e-12);
    // Model +y up, image +y down.
    let rot = [std::f64::consts::PI, 0.0, 0.0];
    let c = rig.template.centroid();
    let rc = axis_angle(rot) * Vector3::new(c[0], c[1], c[2]);
    let half = config.image_size / 2.0;
    CameraPrior {
        camera: WeakPerspectiveCamera {
            scale,
            rot,
            t: [half - scale * rc.x, half - scale * rc.y],
        },
        t_spread: config.shift_px,
    }
}

fn sample_camera(prior: &CameraPrior, config: &DatasetConfig, rng: &mut impl Rng) -> WeakPerspectiveCamera {
    let mut n = || -> f64 { StandardNormal.sample(rng) };
    let jitter = [n(), n(), n()].map(|a| a * config.camera_jitter);
    let r = axis_angle(prior.camera.rot) * axis_angle(jitter);
    WeakPerspectiveCamera {
        scale: prior.camera.scale * (config.scale_jitter * n()).exp(),
        rot: to_axis_angle(&r),
        t: [
            prior.camera.t[0] + prior.t_spread * n(),
            prior.camera.t[1] + prior.t_spread * n(),
        ],
    }
}

/// Seeded shuffle then contiguous train / val / test blocks.
pub fn assign_splits(count: usize, fractions: [f64; 3], seed: u64) -> Vec<Split> {
    let n_val = (fractions[1] * count as f64).round() as usize;
    let n_test = ((fractions[2] * count as f64).round() as usize).min(count - n_val.min(count));
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5917));
    let mut out = vec![Split::Train; count];
    for (rank, &i) in order.iter().enumerate() {
        if rank >= count - n_val - n_test {
            out[i] = if rank >= count - n_test {
                Split::Test
            } else {
                Split::Val
            };
        }
    }
    out
}

fn mesh_name(id: usize) -> String {
    format!("meshes/{id:06}.obj")
}

/// Samples `config.count` posed meshes from a model built on `rig`. Each
/// sample draws from its own stream of the seeded generator, so results do
/// not depend on the execution mode.
pub fn generate_dataset(rig: &Rig, config: &DatasetConfig, exec: Exec) -> Result<Dataset, DatasetError> {
    config.validate()?;
    let model = MorphableModel::build(rig.clone(), &config.model)?;
    let corpus = pose_corpus(rig, config.corpus, config.seed);
    let book = PoseClusterBook::fit(&corpus, config.clusters, config.seed)?;
    let prior = camera_prior(rig, config);
    let splits = assign_splits(config.count, config.split, config.seed);
    let sampler = SamplerConfig { jitter: config.jitter };
    let topo = rig.template.topology().clone();

    let made = exec.map_range(config.count, |id| -> Result<(SampleRecord, TriMesh), DatasetError> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(id as u64 + 1);
        let (pose, shape) = sample_pose_with(&book, model.num_shape(), sampler, &mut rng)?;
        let verts = model.posed_vertices(&shape.view(), &pose)?.mapv(obj_round);
        let mesh = TriMesh::new(topo.clone(), verts).map_err(MorphError::from)?;
        let kp3 = joint_positions(&mesh, &rig.keypoints).map_err(MorphError::from)?;
        let camera = sample_camera(&prior, config, &mut rng);
        let kp2 = project(&camera, &kp3.view()).map_err(MorphError::from)?;
        let visible = (0..kp3.nrows())
            .map(|_| rng.random::<f64>() < config.visibility)
            .collect();
        Ok((
            SampleRecord {
                id,
                mesh: mesh_name(id),
                split: splits[id],
                pose,
                shape: shape.to_vec(),
                keypoints_3d: kp3,
                keypoints_2d: kp2,
                visible,
                camera,
            },
            mesh,
        ))
    });
    let mut records = Vec::with_capacity(config.count);
    let mut meshes = Vec::with_capacity(config.count);
    for m in made {
        let (r, mesh) = m?;
        records.push(r);
        meshes.push(mesh);
    }
    let meta = DatasetMeta {
        config: config.clone(),
        rig_name: rig.name.clone(),
        num_vertices: rig.template.num_vertices(),
        camera_prior: prior,
        per_vertex_std: per_vertex_std(&meshes),
        max_edge_length: max_edge_length(&meshes),
    };
    Ok(Dataset {
        meta,
        rig: rig.clone(),
        records,
        meshes,
    })
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), DatasetError> {
    std::fs::write(path, contents).map_err(io_err(path))
}

fn read(path: &Path) -> Result<String, DatasetError> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn from_json<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T, DatasetError> {
    serde_json::from_str(text).map_err(|e| DatasetError::Format {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.records.iter().filter(|r| r.split == split).map(|r| r.id).collect()
    }

    pub fn meshes_of(&self, split: Split) -> Vec<TriMesh> {
        self.indices(split)
            .into_iter()
            .map(|i| self.meshes[i].clone())
            .collect()
    }

    pub fn save(&self, dir: &Path) -> Result<(), DatasetError> {
        let mesh_dir = dir.join("meshes");
        std::fs::create_dir_all(&mesh_dir).map_err(io_err(&mesh_dir))?;
        self.rig.save(&dir.join("rig"))?;
        write(&dir.join(META_FILE), to_json(&self.meta))?;
        write(&dir.join(MANIFEST_FILE), to_json(&self.records))?;
        for (r, m) in self.records.iter().zip(&self.meshes) {
            write(&dir.join(&r.mesh), serialize_obj(m))?;
        }
        Ok(())
    }

    /// Reads a dataset directory; every mesh must match the rig template's
    /// faces, and then shares its topology.
    pub fn load(dir: &Path) -> Result<Self, DatasetError> {
        let meta_path = dir.join(META_FILE);
        let meta: DatasetMeta = from_json(&meta_path, &read(&meta_path)?)?;
        let rig = Rig::load(&dir.join("rig"))?;
        let man_path = dir.join(MANIFEST_FILE);
        let records: Vec<SampleRecord> = from_json(&man_path, &read(&man_path)?)?;
        let topo = rig.template.topology().clone();
        let mut meshes = Vec::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.id != i {
                return Err(DatasetError::Format {
                    path: man_path.display().to_string(),
                    message: format!("record {i} has id {}", r.id),
                });
            }
            let path = dir.join(&r.mesh);
            let m = parse_obj(&read(&path)?).map_err(|e| DatasetError::Format {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            if !Arc::ptr_eq(m.topology(), &topo) && m.topology().faces() != topo.faces() {
                return Err(DatasetError::Topology { id: r.id });
            }
            meshes.push(TriMesh::new(topo.clone(), m.into_vertices()).map_err(MorphError::from)?);
        }
        Ok(Self {
            meta,
            rig,
            records,
            meshes,
        })
    }

    /// Observation vector: per keypoint `(u, v)` centred and divided by the
    /// image size plus a visibility flag (zeros when hidden), followed by the
    /// 3-D keypoints with Gaussian noise of `noise_mm` from the sample's own
    /// stream of `seed`.
    pub fn encoder_input(&self, id: usize, noise_mm: f64, seed: u64) -> Array1<f64> {
        let r = &self.records[id];
        let size = self.meta.config.image_size;
        let k = r.visible.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(id as u64 + 1);
        let mut x = Vec::with_capacity(6 * k);
        for i in 0..k {
            if r.visible[i] {
                x.push((r.keypoints_2d[[i, 0]] - size / 2.0) / size);
                x.push((r.keypoints_2d[[i, 1]] - size / 2.0) / size);
                x.push(1.0);
            } else {
                x.extend([0.0, 0.0, 0.0]);
            }
        }
        for &p in r.keypoints_3d.iter() {
            let n: f64 = StandardNormal.sample(&mut rng);
            x.push(p + noise_mm * n);
        }
        Array1::from(x)
    }

    pub fn input_dim(&self) -> usize {
        6 * self.rig.keypoints.len()
    }

    pub fn pipeline_samples(&self, ids: &[usize], noise_mm: f64, seed: u64) -> Vec<PipelineSample> {
        ids.iter()
            .map(|&id| {
                let r = &self.records[id];
                PipelineSample {
                    input: self.encoder_input(id, noise_mm, seed),
                    mesh: self.meshes[id].vertices().clone(),
                    keypoints_2d: r.keypoints_2d.clone(),
                    visible: r.visible.clone(),
                }
            })
            .collect()
    }

    /// Input standardization from `train`, latent statistics of the decoder's
    /// training codes and camera offsets from the sampler's prior.
    pub fn encoder_frame(
        &self,
        spec: &EncoderSpec,
        train: &[PipelineSample],
        latent_stats: Option<&(Array1<f64>, Array1<f64>)>,
    ) -> Result<EncoderFrame, DatasetError> {
        let views: Vec<_> = train.iter().map(|s| s.input.view()).collect();
        let (input_mean, input_std) = input_statistics(&views)?;
        let mut frame = EncoderFrame::identity(spec);
        frame.input_mean = input_mean;
        frame.input_std = input_std;
        if let Some((mu, sd)) = latent_stats {
            if mu.len() != spec.latent || sd.len() != spec.latent {
                return Err(PipelineError::Shape("latent statistics do not match the encoder".into()).into());
            }
            frame.latent_mean = mu.clone();
            frame.latent_std = sd.mapv(|s| if s > 1e-12 { s } else { 1.0 });
        }
        let prior = &self.meta.camera_prior;
        frame.log_scale = prior.camera.scale.ln();
        frame.rot = prior.camera.rot;
        frame.t = prior.camera.t;
        frame.t_scale = prior.t_spread.max(1.0);
        Ok(frame)
    }
}

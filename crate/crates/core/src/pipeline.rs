//! Two-branch keypoint encoder trained against a frozen mesh decoder.
//!
//! A fully connected trunk maps an observation vector to `Z + 6` outputs: a
//! mesh embedding fed to the decoder and a weak-perspective camera. The loss
//! is mesh L1 + λ_kpts · reprojection L1 + λ_embed · ‖z‖, with the
//! reprojection gradient stopped before it reaches the mesh embedding.

use std::path::Path;
use std::time::{Duration, Instant};

use ndarray::{s, Array1, Array2, ArrayD, ArrayView1, Axis, IxDyn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{keypoint_loss, project, CameraError, WeakPerspectiveCamera};
use crate::mesh::{joint_positions, JointSpec, MeshError, TriMesh};
use crate::nn::checkpoint::{
    push_optimizer, push_params, read_optimizer, read_params, AeCheckpoint, CheckpointError, Container,
};
use crate::nn::{
    dense_bwd, dense_fwd, l1_mean, leaky_relu, leaky_relu_grad, AdamW, AdamWConfig, Autoencoder, Grads, NetworkParams,
    NetworkSpec, NnError, Normalizer, Param,
};
use crate::Exec;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("decoder is not frozen; freeze it before encoder training")]
    DecoderNotFrozen,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("sample {0} does not share the decoder's template topology")]
    TopologyMismatch(usize),
    #[error("empty dataset")]
    EmptyDataset,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// Width of the camera block: log-scale, 3 rotation, 2 translation.
pub const CAMERA_OUTPUTS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub latent: usize,
    pub leaky_slope: f64,
}

impl EncoderSpec {
    pub fn new(input_dim: usize, latent: usize) -> Self {
        Self {
            input_dim,
            hidden: vec![256, 256],
            latent,
            leaky_slope: 0.2,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.latent + CAMERA_OUTPUTS
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.hidden);
        w.push(self.output_dim());
        w
    }

    fn num_layers(&self) -> usize {
        self.hidden.len() + 1
    }

    fn layer_name(&self, i: usize) -> String {
        if i == self.hidden.len() {
            "head".to_string()
        } else {
            format!("fc{i}")
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.input_dim == 0 || self.latent == 0 || self.hidden.contains(&0) {
            return Err(PipelineError::Shape("encoder widths must be positive".into()));
        }
        if !self.leaky_slope.is_finite() {
            return Err(PipelineError::Shape("leaky slope must be finite".into()));
        }
        Ok(())
    }

    /// `(name, shape, decayed)` per tensor, in parameter order.
    pub fn layer_shapes(&self) -> Vec<(String, Vec<usize>, bool)> {
        let w = self.widths();
        (0..self.num_layers())
            .flat_map(|i| {
                let name = self.layer_name(i);
                [
                    (format!("{name}.weight"), vec![w[i], w[i + 1]], true),
                    (format!("{name}.bias"), vec![w[i + 1]], false),
                ]
            })
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|(_, s, _)| s.iter().product::<usize>())
            .sum()
    }

    /// Zero-mean uniform weights with standard deviation `1/√fan_in`, zero biases.
    pub fn init_params(&self, seed: u64) -> NetworkParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = self
            .layer_shapes()
            .into_iter()
            .map(|(name, shape, decay)| {
                let value = if decay {
                    let bound = (3.0 / shape[0] as f64).sqrt();
                    ArrayD::from_shape_fn(IxDyn(&shape), |_| rand::Rng::random_range(&mut rng, -bound..=bound))
                } else {
                    ArrayD::zeros(IxDyn(&shape))
                };
                Param { name, value, decay }
            })
            .collect();
        NetworkParams::new(params)
    }

    pub fn check_params(&self, params: &NetworkParams) -> Result<(), PipelineError> {
        let layout = self.layer_shapes();
        if params.len() != layout.len() {
            return Err(PipelineError::Shape(format!(
                "{} encoder tensors expected, found {}",
                layout.len(),
                params.len()
            )));
        }
        for ((name, shape, _), p) in layout.iter().zip(params.params()) {
            if &p.name != name || p.value.shape() != shape.as_slice() {
                return Err(NnError::LayerShape {
                    layer: name.clone(),
                    expected: shape.clone(),
                    found: p.value.shape().to_vec(),
                }
                .into());
            }
        }
        Ok(())
    }
}

/// Fixed affine maps around the trunk: input standardization, latent
/// de-standardization and camera offsets. The identity frame leaves raw
/// outputs as they are (camera scale still goes through `exp`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderFrame {
    pub input_mean: Array1<f64>,
    pub input_std: Array1<f64>,
    pub latent_mean: Array1<f64>,
    pub latent_std: Array1<f64>,
    pub log_scale: f64,
    pub rot: [f64; 3],
    pub t: [f64; 2],
    /// Pixels per unit of the raw translation outputs.
    pub t_scale: f64,
}

impl EncoderFrame {
    pub fn identity(spec: &EncoderSpec) -> Self {
        Self {
            input_mean: Array1::zeros(spec.input_dim),
            input_std: Array1::ones(spec.input_dim),
            latent_mean: Array1::zeros(spec.latent),
            latent_std: Array1::ones(spec.latent),
            log_scale: 0.0,
            rot: [0.0; 3],
            t: [0.0; 2],
            t_scale: 1.0,
        }
    }

    fn check(&self, spec: &EncoderSpec) -> Result<(), PipelineError> {
        if self.input_mean.len() != spec.input_dim || self.input_std.len() != spec.input_dim {
            return Err(PipelineError::Shape(
                "frame input statistics do not match the encoder".into(),
            ));
        }
        if self.latent_mean.len() != spec.latent || self.latent_std.len() != spec.latent {
            return Err(PipelineError::Shape(
                "frame latent statistics do not match the encoder".into(),
            ));
        }
        Ok(())
    }

    fn camera(&self, raw: &ArrayView1<f64>) -> WeakPerspectiveCamera {
        WeakPerspectiveCamera {
            scale: (self.log_scale + raw[0]).exp(),
            rot: [self.rot[0] + raw[1], self.rot[1] + raw[2], self.rot[2] + raw[3]],
            t: [self.t[0] + self.t_scale * raw[4], self.t[1] + self.t_scale * raw[5]],
        }
    }
}

/// Intermediate values of one encoder pass.
#[derive(Debug, Clone)]
pub struct EncoderTrace {
    /// Input to each layer (the first is the standardized observation).
    inputs: Vec<Array1<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Array1<f64>>,
    pub raw: Array1<f64>,
    pub latent: Array1<f64>,
    pub camera: WeakPerspectiveCamera,
}

pub fn encoder_forward_traced(
    spec: &EncoderSpec,
    params: &NetworkParams,
    frame: &EncoderFrame,
    input: &ArrayView1<f64>,
) -> Result<EncoderTrace, PipelineError> {
    if input.len() != spec.input_dim {
        return Err(PipelineError::Shape(format!(
            "encoder input length {} expected, got {}",
            spec.input_dim,
            input.len()
        )));
    }
    frame.check(spec)?;
    let x = (input - &frame.input_mean) / &frame.input_std;
    let mut inputs = vec![x];
    let mut pre = Vec::new();
    for i in 0..spec.num_layers() {
        let y = dense_fwd(params.mat(2 * i), params.vec(2 * i + 1), inputs[i].view())?;
        if i + 1 < spec.num_layers() {
            inputs.push(leaky_relu(&y, spec.leaky_slope));
            pre.push(y);
        } else {
            let z = &frame.latent_mean + &(&frame.latent_std * &y.slice(s![..spec.latent]));
            let camera = frame.camera(&y.slice(s![spec.latent..]));
            return Ok(EncoderTrace {
                inputs,
                pre,
                raw: y,
                latent: z,
                camera,
            });
        }
    }
    unreachable!("encoder has at least one layer")
}

/// Latent code and camera for one observation vector.
pub fn encoder_forward(
    spec: &EncoderSpec,
    params: &NetworkParams,
    frame: &EncoderFrame,
    input: &ArrayView1<f64>,
) -> Result<(Array1<f64>, WeakPerspectiveCamera), PipelineError> {
    let t = encoder_forward_traced(spec, params, frame, input)?;
    Ok((t.latent, t.camera))
}

/// Gradient of the raw head outputs given gradients with respect to the
/// latent and the camera parameters.
pub fn head_gradient(
    spec: &EncoderSpec,
    frame: &EncoderFrame,
    trace: &EncoderTrace,
    grad_latent: &ArrayView1<f64>,
    grad_scale: f64,
    grad_rot: [f64; 3],
    grad_t: [f64; 2],
) -> Array1<f64> {
    let z = spec.latent;
    let mut g = Array1::zeros(spec.output_dim());
    g.slice_mut(s![..z]).assign(&(grad_latent * &frame.latent_std));
    g[z] = grad_scale * trace.camera.scale;
    for k in 0..3 {
        g[z + 1 + k] = grad_rot[k];
    }
    for k in 0..2 {
        g[z + 4 + k] = grad_t[k] * frame.t_scale;
    }
    g
}

/// Reverse pass from the raw head-output gradient into `grads`.
pub fn encoder_backward(
    spec: &EncoderSpec,
    params: &NetworkParams,
    trace: &EncoderTrace,
    grad_raw: &ArrayView1<f64>,
    grads: &mut Grads,
) {
    let mut g = grad_raw.to_owned();
    for i in (0..spec.num_layers()).rev() {
        if i + 1 < spec.num_layers() {
            g = leaky_relu_grad(&trace.pre[i], &g, spec.leaky_slope);
        }
        let (lo, hi) = grads.0.split_at_mut(2 * i + 1);
        let gin = dense_bwd(
            params.mat(2 * i),
            trace.inputs[i].view(),
            g.view(),
            Some(lo[2 * i].view_mut().into_dimensionality().expect("rank-2 grad")),
            Some(hi[0].view_mut().into_dimensionality().expect("rank-1 grad")),
            i > 0,
        );
        if let Some(gin) = gin {
            g = gin;
        }
    }
}

/// The trained mesh decoder with everything needed to turn a latent into
/// keypoints. Pipeline losses refuse to run unless `frozen` is set.
#[derive(Debug, Clone)]
pub struct FrozenDecoder {
    pub ae: Autoencoder,
    pub params: NetworkParams,
    pub normalizer: Normalizer,
    pub mm_per_unit: f64,
    pub keypoints: Vec<JointSpec>,
    pub frozen: bool,
}

impl FrozenDecoder {
    pub fn from_checkpoint(ck: &AeCheckpoint, keypoints: Vec<JointSpec>) -> Result<Self, PipelineError> {
        let ae = Autoencoder::new(ck.spec.clone(), std::sync::Arc::new(ck.hierarchy.clone()))?;
        ae.check_params(&ck.params)?;
        crate::mesh::check_joint_specs(&keypoints, ae.num_vertices())?;
        Ok(Self {
            ae,
            params: ck.params.clone(),
            normalizer: ck.normalizer.clone(),
            mm_per_unit: ck.mm_per_unit,
            keypoints,
            frozen: true,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        self.ae.spec()
    }

    pub fn template(&self) -> &TriMesh {
        self.ae.hierarchy().reference()
    }

    /// Decoded vertices in dataset units.
    pub fn decode(&self, z: &ArrayView1<f64>) -> Result<Array2<f64>, PipelineError> {
        let y = self.ae.decode(&self.params, z)?;
        Ok(self.normalizer.denormalize(&y.view()))
    }

    pub fn decode_mesh(&self, z: &ArrayView1<f64>) -> Result<TriMesh, PipelineError> {
        Ok(self.template().with_vertices(self.decode(z)?)?)
    }

    pub fn joints(&self, vertices: Array2<f64>) -> Result<Array2<f64>, PipelineError> {
        Ok(joint_positions(
            &self.template().with_vertices(vertices)?,
            &self.keypoints,
        )?)
    }
}

/// One training or evaluation example.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSample {
    pub input: Array1<f64>,
    /// Ground-truth mesh in dataset units.
    pub mesh: Array2<f64>,
    pub keypoints_2d: Array2<f64>,
    pub visible: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineWeights {
    pub mesh: f64,
    pub kpts: f64,
    pub embed: f64,
}

impl Default for PipelineWeights {
    fn default() -> Self {
        Self {
            mesh: 1.0,
            kpts: 0.01,
            embed: 5e-5,
        }
    }
}

/// Batch means of the loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PipelineLoss {
    pub value: f64,
    /// Mesh L1 in normalized units.
    pub mesh_l1: f64,
    /// Reprojection L1 in pixels.
    pub reproj_l1: f64,
    pub embed: f64,
}

impl PipelineLoss {
    fn add(&mut self, o: &PipelineLoss) {
        self.value += o.value;
        self.mesh_l1 += o.mesh_l1;
        self.reproj_l1 += o.reproj_l1;
        self.embed += o.embed;
    }

    fn scale(&mut self, s: f64) {
        self.value *= s;
        self.mesh_l1 *= s;
        self.reproj_l1 *= s;
        self.embed *= s;
    }
}

fn sample_loss(
    spec: &EncoderSpec,
    params: &NetworkParams,
    frame: &EncoderFrame,
    decoder: &FrozenDecoder,
    weights: PipelineWeights,
    sample: &PipelineSample,
    grads: &mut Grads,
) -> Result<PipelineLoss, PipelineError> {
    let trace = encoder_forward_traced(spec, params, frame, &sample.input.view())?;
    let (y, dcache) = decoder.ae.decode_cached(&decoder.params, &trace.latent.view())?;
    let target = decoder.normalizer.normalize(&sample.mesh.view());
    if target.dim() != y.dim() {
        return Err(PipelineError::Shape(format!(
            "mesh {:?} expected, got {:?}",
            y.dim(),
            target.dim()
        )));
    }

    let (mesh_l1, gy) = l1_mean(&y.view(), &target.view());
    let mut gz = if weights.mesh != 0.0 {
        // Decoder parameters receive nothing: only the latent gradient is taken.
        decoder
            .ae
            .decoder_backward(&decoder.params, &dcache, &(gy * weights.mesh).view(), None)?
    } else {
        Array1::zeros(spec.latent)
    };

    let norm = trace.latent.dot(&trace.latent).sqrt();
    if norm > 0.0 && weights.embed != 0.0 {
        gz.scaled_add(weights.embed / norm, &trace.latent);
    }

    // Reprojection through the decoded mesh; its gradient stops at the camera.
    let joints = decoder.joints(decoder.normalizer.denormalize(&y.view()))?;
    let kl = keypoint_loss(
        &trace.camera,
        &joints.view(),
        &sample.keypoints_2d.view(),
        &sample.visible,
    )?;
    let w = weights.kpts;
    let grad_raw = head_gradient(
        spec,
        frame,
        &trace,
        &gz.view(),
        w * kl.grad_scale,
        kl.grad_rot.map(|g| w * g),
        kl.grad_t.map(|g| w * g),
    );
    encoder_backward(spec, params, &trace, &grad_raw.view(), grads);
    Ok(PipelineLoss {
        value: weights.mesh * mesh_l1 + w * kl.value + weights.embed * norm,
        mesh_l1,
        reproj_l1: kl.value,
        embed: norm,
    })
}

/// Mean loss over `batch` and its gradient with respect to the encoder
/// parameters. The decoder is only read.
pub fn pipeline_loss(
    spec: &EncoderSpec,
    params: &NetworkParams,
    frame: &EncoderFrame,
    decoder: &FrozenDecoder,
    weights: PipelineWeights,
    batch: &[&PipelineSample],
    chunk_size: usize,
    exec: Exec,
) -> Result<(PipelineLoss, Grads), PipelineError> {
    if !decoder.frozen {
        return Err(PipelineError::DecoderNotFrozen);
    }
    if batch.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    let chunks: Vec<&[&PipelineSample]> = batch.chunks(chunk_size.max(1)).collect();
    let parts = exec.map(&chunks, |chunk| -> Result<(PipelineLoss, Grads), PipelineError> {
        let mut g = params.zeros_like();
        let mut l = PipelineLoss::default();
        for s in chunk.iter() {
            l.add(&sample_loss(spec, params, frame, decoder, weights, s, &mut g)?);
        }
        Ok((l, g))
    });
    let mut total = params.zeros_like();
    let mut loss = PipelineLoss::default();
    for p in parts {
        let (l, g) = p?;
        loss.add(&l);
        total.add_assign(&g);
    }
    let inv = 1.0 / batch.len() as f64;
    total.scale(inv);
    loss.scale(inv);
    Ok((loss, total))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: AdamWConfig,
    pub weights: PipelineWeights,
    pub chunk_size: usize,
}

impl Default for EncoderTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 130,
            batch_size: 64,
            seed: 0,
            optimizer: AdamWConfig {
                lr: 1e-4,
                ..AdamWConfig::default()
            },
            weights: PipelineWeights::default(),
            chunk_size: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderMetrics {
    pub epoch: usize,
    pub split: String,
    pub mesh_l1_mm: f64,
    /// Mean Euclidean distance over visible keypoints.
    pub reproj_px: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderEval {
    pub mesh_l1_mm: f64,
    pub reproj_px: f64,
}

/// Mesh L1 (mm) and mean keypoint distance (px) over `samples`.
pub fn evaluate_encoder(
    spec: &EncoderSpec,
    params: &NetworkParams,
    frame: &EncoderFrame,
    decoder: &FrozenDecoder,
    samples: &[PipelineSample],
    exec: Exec,
) -> Result<EncoderEval, PipelineError> {
    if samples.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    let per = exec.map(samples, |s| -> Result<(f64, f64, usize), PipelineError> {
        let p = predict(spec, params, frame, decoder, &s.input.view())?;
        let l1 = (p.mesh.vertices() - &s.mesh).mapv(f64::abs).mean().unwrap_or(0.0);
        let mut dist = 0.0;
        let mut count = 0;
        for (i, row) in p.keypoints_2d.rows().into_iter().enumerate() {
            if s.visible[i] {
                let d = &row - &s.keypoints_2d.row(i);
                dist += d.dot(&d).sqrt();
                count += 1;
            }
        }
        Ok((l1, dist, count))
    });
    let (mut l1, mut dist, mut count) = (0.0, 0.0, 0usize);
    for p in per {
        let (a, b, c) = p?;
        l1 += a;
        dist += b;
        count += c;
    }
    Ok(EncoderEval {
        mesh_l1_mm: l1 / samples.len() as f64 * decoder.mm_per_unit,
        reproj_px: if count > 0 { dist / count as f64 } else { 0.0 },
    })
}

#[derive(Debug, Clone)]
pub struct EncoderRun {
    pub params: NetworkParams,
    pub optimizer: AdamW,
    pub metrics: Vec<EncoderMetrics>,
}

fn check_samples(
    spec: &EncoderSpec,
    decoder: &FrozenDecoder,
    samples: &[PipelineSample],
    offset: usize,
) -> Result<(), PipelineError> {
    let n = decoder.ae.num_vertices();
    let k = decoder.keypoints.len();
    for (i, s) in samples.iter().enumerate() {
        if s.mesh.dim() != (n, 3) {
            return Err(PipelineError::TopologyMismatch(offset + i));
        }
        if s.input.len() != spec.input_dim || s.keypoints_2d.dim() != (k, 2) || s.visible.len() != k {
            return Err(PipelineError::Shape(format!(
                "sample {} does not match the encoder inputs",
                offset + i
            )));
        }
    }
    Ok(())
}

/// AdamW training of the encoder with the decoder frozen. Epoch 0 rows
/// describe the initial encoder.
#[allow(clippy::too_many_arguments)]
pub fn train_encoder(
    spec: &EncoderSpec,
    frame: &EncoderFrame,
    decoder: &FrozenDecoder,
    train: &[PipelineSample],
    val: &[PipelineSample],
    config: &EncoderTrainConfig,
    exec: Exec,
    mut on_epoch: impl FnMut(&EncoderMetrics),
) -> Result<EncoderRun, PipelineError> {
    spec.validate()?;
    frame.check(spec)?;
    if !decoder.frozen {
        return Err(PipelineError::DecoderNotFrozen);
    }
    if spec.latent != decoder.spec().latent {
        return Err(PipelineError::Shape(format!(
            "encoder latent {} does not match decoder latent {}",
            spec.latent,
            decoder.spec().latent
        )));
    }
    if train.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    check_samples(spec, decoder, train, 0)?;
    check_samples(spec, decoder, val, train.len())?;
    let mut params = spec.init_params(config.seed);
    let mut opt = AdamW::new(config.optimizer, &params);
    let mut metrics = Vec::new();
    let mut record =
        |epoch: usize, params: &NetworkParams, metrics: &mut Vec<EncoderMetrics>| -> Result<(), PipelineError> {
            for (split, data) in [("train", train), ("val", val)] {
                if data.is_empty() {
                    continue;
                }
                let e = evaluate_encoder(spec, params, frame, decoder, data, exec)?;
                let m = EncoderMetrics {
                    epoch,
                    split: split.to_string(),
                    mesh_l1_mm: e.mesh_l1_mm,
                    reproj_px: e.reproj_px,
                };
                on_epoch(&m);
                metrics.push(m);
            }
            Ok(())
        };
    record(0, &params, &mut metrics)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xe4_c0de_5eed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for idx in order.chunks(config.batch_size.max(1)) {
            let batch: Vec<&PipelineSample> = idx.iter().map(|&i| &train[i]).collect();
            let (_, grads) = pipeline_loss(
                spec,
                &params,
                frame,
                decoder,
                config.weights,
                &batch,
                config.chunk_size,
                exec,
            )?;
            opt.step(&mut params, &grads);
        }
        record(epoch, &params, &mut metrics)?;
    }
    Ok(EncoderRun {
        params,
        optimizer: opt,
        metrics,
    })
}

/// CSV with columns `epoch,split,mesh_l1_mm,reproj_px`.
pub fn write_encoder_metrics_csv(mut w: impl std::io::Write, metrics: &[EncoderMetrics]) -> std::io::Result<()> {
    writeln!(w, "epoch,split,mesh_l1_mm,reproj_px")?;
    for m in metrics {
        writeln!(w, "{},{},{:.9e},{:.9e}", m.epoch, m.split, m.mesh_l1_mm, m.reproj_px)?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub mesh: TriMesh,
    pub keypoints_3d: Array2<f64>,
    pub keypoints_2d: Array2<f64>,
    pub latent: Array1<f64>,
    pub camera: WeakPerspectiveCamera,
    /// Wall-clock time of the decoder pass alone.
    pub decoder_time: Duration,
}

pub fn predict(
    spec: &EncoderSpec,
    params: &NetworkParams,
    frame: &EncoderFrame,
    decoder: &FrozenDecoder,
    input: &ArrayView1<f64>,
) -> Result<Prediction, PipelineError> {
    let (latent, camera) = encoder_forward(spec, params, frame, input)?;
    let start = Instant::now();
    let vertices = decoder.decode(&latent.view())?;
    let decoder_time = start.elapsed();
    let mesh = decoder.template().with_vertices(vertices)?;
    let keypoints_3d = joint_positions(&mesh, &decoder.keypoints)?;
    let keypoints_2d = project(&camera, &keypoints_3d.view())?;
    Ok(Prediction {
        mesh,
        keypoints_3d,
        keypoints_2d,
        latent,
        camera,
        decoder_time,
    })
}

/// Per-feature mean and std (floored) of a set of observation vectors.
pub fn input_statistics(inputs: &[ArrayView1<f64>]) -> Result<(Array1<f64>, Array1<f64>), PipelineError> {
    let first = inputs.first().ok_or(PipelineError::EmptyDataset)?;
    let mut stack = Array2::zeros((inputs.len(), first.len()));
    for (mut row, x) in stack.axis_iter_mut(Axis(0)).zip(inputs) {
        if x.len() != first.len() {
            return Err(PipelineError::Shape("observation vectors differ in length".into()));
        }
        row.assign(x);
    }
    let mean = stack.mean_axis(Axis(0)).expect("nonempty");
    let std = stack.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-6 { s } else { 1.0 });
    Ok((mean, std))
}

pub const ENCODER_KIND: &str = "encoder";

/// Trained encoder plus the decoder architecture it was trained against.
#[derive(Debug, Clone)]
pub struct EncoderCheckpoint {
    pub spec: EncoderSpec,
    pub frame: EncoderFrame,
    pub params: NetworkParams,
    pub optimizer: Option<AdamW>,
    pub decoder_spec: NetworkSpec,
}

impl EncoderCheckpoint {
    pub fn to_container(&self) -> Container {
        let mut meta = serde_json::Map::new();
        meta.insert("spec".into(), serde_json::to_value(&self.spec).expect("serializable"));
        meta.insert("frame".into(), serde_json::to_value(&self.frame).expect("serializable"));
        meta.insert(
            "decoder_spec".into(),
            serde_json::to_value(&self.decoder_spec).expect("serializable"),
        );
        let mut c = Container::new(ENCODER_KIND, serde_json::Value::Null);
        push_params(&mut c, "param.", &self.params);
        if let Some(opt) = &self.optimizer {
            push_optimizer(&mut c, &mut meta, opt, &self.params);
        }
        c.meta = serde_json::Value::Object(meta);
        c
    }

    pub fn from_container(c: &Container) -> Result<Self, PipelineError> {
        c.expect_kind(ENCODER_KIND)?;
        let field = |key: &str| -> Result<serde_json::Value, PipelineError> {
            c.meta
                .get(key)
                .cloned()
                .ok_or_else(|| CheckpointError::Manifest(format!("missing meta field {key}")).into())
        };
        let bad = |key: &str, e: serde_json::Error| -> PipelineError {
            CheckpointError::Manifest(format!("{key}: {e}")).into()
        };
        let spec: EncoderSpec = serde_json::from_value(field("spec")?).map_err(|e| bad("spec", e))?;
        spec.validate()?;
        let frame: EncoderFrame = serde_json::from_value(field("frame")?).map_err(|e| bad("frame", e))?;
        frame.check(&spec)?;
        let decoder_spec: NetworkSpec =
            serde_json::from_value(field("decoder_spec")?).map_err(|e| bad("decoder_spec", e))?;
        let params = read_params(c, "param.", &spec.layer_shapes())?;
        let optimizer = read_optimizer(c, &params)?;
        Ok(Self {
            spec,
            frame,
            params,
            optimizer,
            decoder_spec,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        Ok(self.to_container().save(path)?)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        Self::from_container(&Container::load(path)?)
    }

    /// Refuses a decoder other than the one trained against.
    pub fn check_decoder(&self, decoder: &FrozenDecoder) -> Result<(), PipelineError> {
        if &self.decoder_spec != decoder.spec() {
            return Err(NnError::SpecMismatch {
                expected: serde_json::to_string(&self.decoder_spec).expect("serializable"),
                found: serde_json::to_string(decoder.spec()).expect("serializable"),
            }
            .into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> EncoderSpec {
        EncoderSpec {
            input_dim: 5,
            hidden: vec![7, 4],
            latent: 3,
            leaky_slope: 0.2,
        }
    }

    #[test]
    fn zero_weights_give_biases() {
        let sp = spec();
        let mut p = sp.init_params(1);
        for param in p.params_mut() {
            param.value.fill(0.0);
        }
        let head_bias = p.index_of("head.bias").unwrap();
        let b: Vec<f64> = (0..sp.output_dim()).map(|i| 0.1 * i as f64 - 0.2).collect();
        p.params_mut()[head_bias].value = ArrayD::from_shape_vec(IxDyn(&[b.len()]), b.clone()).unwrap();
        let (z, cam) = encoder_forward(&sp, &p, &EncoderFrame::identity(&sp), &Array1::ones(5).view()).unwrap();
        assert_eq!(z.to_vec(), b[..3].to_vec());
        assert_eq!(cam.scale, b[3].exp());
        assert_eq!(cam.rot, [b[4], b[5], b[6]]);
        assert_eq!(cam.t, [b[7], b[8]]);
    }

    #[test]
    fn output_width_and_param_count() {
        let sp = spec();
        assert_eq!(sp.output_dim(), 9);
        assert_eq!(sp.num_params(), 5 * 7 + 7 + 7 * 4 + 4 + 4 * 9 + 9);
        assert_eq!(sp.init_params(0).num_scalars(), sp.num_params());
    }

    #[test]
    fn wrong_input_length_is_an_error() {
        let sp = spec();
        let p = sp.init_params(0);
        let r = encoder_forward(&sp, &p, &EncoderFrame::identity(&sp), &Array1::ones(4).view());
        assert!(matches!(r, Err(PipelineError::Shape(_))));
    }

    #[test]
    fn head_gradient_matches_differences() {
        let sp = spec();
        let p = sp.init_params(3);
        let mut frame = EncoderFrame::identity(&sp);
        frame.latent_std = Array1::from(vec![0.5, 2.0, 1.5]);
        frame.t_scale = 3.0;
        frame.log_scale = 0.4;
        let x = Array1::from(vec![0.3, -0.7, 1.1, 0.2, -0.4]);
        let gz = Array1::from(vec![0.2, -0.5, 0.9]);
        let (gs, gr, gt) = (0.7, [0.1, -0.3, 0.25], [-0.6, 0.45]);
        // Linear functional of the outputs whose gradient is the above.
        let f = |p: &NetworkParams| {
            let (z, c) = encoder_forward(&sp, p, &frame, &x.view()).unwrap();
            z.dot(&gz) + gs * c.scale + (0..3).map(|k| gr[k] * c.rot[k]).sum::<f64>() + gt[0] * c.t[0] + gt[1] * c.t[1]
        };
        let trace = encoder_forward_traced(&sp, &p, &frame, &x.view()).unwrap();
        let graw = head_gradient(&sp, &frame, &trace, &gz.view(), gs, gr, gt);
        let mut g = p.zeros_like();
        encoder_backward(&sp, &p, &trace, &graw.view(), &mut g);
        let h = 1e-5;
        for (i, param) in p.params().iter().enumerate() {
            for j in 0..param.value.len() {
                let mut a = p.clone();
                let mut b = p.clone();
                a.params_mut()[i].value.as_slice_mut().unwrap()[j] += h;
                b.params_mut()[i].value.as_slice_mut().unwrap()[j] -= h;
                let fd = (f(&a) - f(&b)) / (2.0 * h);
                let an = g.0[i].as_slice().unwrap()[j];
                assert!(
                    (fd - an).abs() <= 1e-6 * (1.0 + fd.abs()),
                    "{} [{j}]: {fd} vs {an}",
                    param.name
                );
            }
        }
    }
}

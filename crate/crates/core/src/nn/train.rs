use std::io::Write;
use std::sync::Arc;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adamw::{AdamW, AdamWConfig};
use super::autoencoder::{Autoencoder, Normalizer};
use super::loss::{l1_mean, AeLossWeights};
use super::params::{Grads, NetworkParams};
use super::NnError;
use crate::mesh::TriMesh;
use crate::Exec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: AdamWConfig,
    pub loss: AeLossWeights,
    /// Samples per gradient chunk. Chunks run concurrently and are reduced
    /// in index order, so results do not depend on the execution mode.
    pub chunk_size: usize,
    /// Millimetres per model unit, for reported metrics.
    pub mm_per_unit: f64,
    /// Learning rate multiplier applied after every epoch (1 keeps it fixed).
    pub lr_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            epochs: 200,
            seed: 0,
            optimizer: AdamWConfig::default(),
            loss: AeLossWeights::default(),
            chunk_size: 8,
            mm_per_unit: 1.0,
            lr_decay: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub split: String,
    pub l1_mm: f64,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub params: NetworkParams,
    pub optimizer: AdamW,
    pub normalizer: Normalizer,
    /// Epoch 0 rows are the untrained network.
    pub metrics: Vec<EpochMetrics>,
}

fn check_topology(ae: &Autoencoder, meshes: &[TriMesh], offset: usize) -> Result<(), NnError> {
    let template = ae.hierarchy().level(0);
    for (i, m) in meshes.iter().enumerate() {
        if !Arc::ptr_eq(m.topology(), template) && m.topology().as_ref() != template.as_ref() {
            return Err(NnError::TopologyMismatch(offset + i));
        }
    }
    Ok(())
}

/// Sum of per-sample gradients and objective terms over `samples`.
fn chunk_grads(
    ae: &Autoencoder,
    params: &NetworkParams,
    samples: &[&Array2<f64>],
    lambda_latent: f64,
) -> Result<(Grads, f64), NnError> {
    let mut grads = params.zeros_like();
    let mut loss = 0.0;
    for x in samples {
        let (z, ecache) = ae.encode_cached(params, &x.view())?;
        let (y, dcache) = ae.decode_cached(params, &z.view())?;
        let (l1, gy) = l1_mean(&y.view(), &x.view());
        loss += l1 + lambda_latent * z.dot(&z);
        let mut gz = ae.decoder_backward(params, &dcache, &gy.view(), Some(&mut grads))?;
        gz.scaled_add(2.0 * lambda_latent, &z);
        ae.encoder_backward(params, &ecache, &gz.view(), &mut grads)?;
    }
    Ok((grads, loss))
}

/// Mean objective and its gradient over a batch of normalized samples,
/// including the weight penalty.
pub fn batch_gradient(
    ae: &Autoencoder,
    params: &NetworkParams,
    batch: &[&Array2<f64>],
    weights: AeLossWeights,
    chunk_size: usize,
    exec: Exec,
) -> Result<(Grads, f64), NnError> {
    let chunks: Vec<&[&Array2<f64>]> = batch.chunks(chunk_size.max(1)).collect();
    let parts = exec.map(&chunks, |c| chunk_grads(ae, params, c, weights.latent));
    let mut total = params.zeros_like();
    let mut loss = 0.0;
    for part in parts {
        let (g, l) = part?;
        total.add_assign(&g);
        loss += l;
    }
    let inv = 1.0 / batch.len() as f64;
    total.scale(inv);
    for (g, p) in total.0.iter_mut().zip(params.params()) {
        if p.decay {
            g.scaled_add(2.0 * weights.weight_decay, &p.value);
        }
    }
    Ok((total, loss * inv + weights.weight_decay * params.weight_sq_norm()))
}

/// Mean absolute coordinate error in millimetres and the mean objective
/// (data terms plus weight penalty) over normalized samples.
pub fn evaluate_l1(
    ae: &Autoencoder,
    params: &NetworkParams,
    normalizer: &Normalizer,
    samples: &[Array2<f64>],
    weights: AeLossWeights,
    mm_per_unit: f64,
    exec: Exec,
) -> Result<(f64, f64), NnError> {
    if samples.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let per = exec.map(samples, |x| -> Result<(f64, f64), NnError> {
        let (y, z) = ae.forward(params, &x.view())?;
        let (l1, _) = l1_mean(&y.view(), &x.view());
        Ok((l1, l1 + weights.latent * z.dot(&z)))
    });
    let (mut l1, mut loss) = (0.0, 0.0);
    for p in per {
        let (a, b) = p?;
        l1 += a;
        loss += b;
    }
    let n = samples.len() as f64;
    Ok((
        l1 / n * normalizer.scale * mm_per_unit,
        loss / n + weights.weight_decay * params.weight_sq_norm(),
    ))
}

/// Mini-batch AdamW training. Deterministic given `config.seed`.
/// `resume` continues from an earlier state (its normalizer is kept).
pub fn train_autoencoder(
    ae: &Autoencoder,
    train: &[TriMesh],
    val: &[TriMesh],
    config: &TrainConfig,
    exec: Exec,
    resume: Option<(NetworkParams, AdamW, Normalizer)>,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainingRun, NnError> {
    if train.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    check_topology(ae, train, 0)?;
    check_topology(ae, val, train.len())?;
    let raw: Vec<Array2<f64>> = train.iter().map(|m| m.vertices().clone()).collect();
    let (mut params, mut opt, normalizer) = match resume {
        Some((p, o, n)) => {
            ae.check_params(&p)?;
            o.check(&p)?;
            (p, o, n)
        }
        None => {
            let p = ae.init_params(config.seed);
            let o = AdamW::new(config.optimizer, &p);
            (p, o, Normalizer::fit(&raw)?)
        }
    };
    let xs: Vec<Array2<f64>> = raw.iter().map(|x| normalizer.normalize(&x.view())).collect();
    let vs: Vec<Array2<f64>> = val.iter().map(|m| normalizer.normalize(&m.vertices().view())).collect();

    let mut metrics = Vec::new();
    let mut record = |epoch: usize, params: &NetworkParams, metrics: &mut Vec<EpochMetrics>| -> Result<(), NnError> {
        for (split, data) in [("train", &xs), ("val", &vs)] {
            if data.is_empty() {
                continue;
            }
            let (l1_mm, loss) = evaluate_l1(ae, params, &normalizer, data, config.loss, config.mm_per_unit, exec)?;
            let m = EpochMetrics {
                epoch,
                split: split.to_string(),
                l1_mm,
                loss,
            };
            on_epoch(&m);
            metrics.push(m);
        }
        Ok(())
    };
    record(0, &params, &mut metrics)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x05ee_d0fb_a7c4);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let base_lr = opt.config.lr;
    for epoch in 1..=config.epochs {
        opt.config.lr = base_lr * config.lr_decay.powi(epoch as i32 - 1);
        order.shuffle(&mut rng);
        for idx in order.chunks(config.batch_size.max(1)) {
            let batch: Vec<&Array2<f64>> = idx.iter().map(|&i| &xs[i]).collect();
            let (grads, _) = batch_gradient(ae, &params, &batch, config.loss, config.chunk_size, exec)?;
            opt.step(&mut params, &grads);
        }
        record(epoch, &params, &mut metrics)?;
    }
    opt.config.lr = base_lr;
    Ok(TrainingRun {
        params,
        optimizer: opt,
        normalizer,
        metrics,
    })
}

/// CSV with columns `epoch,split,L1_mm,loss`.
pub fn write_metrics_csv(mut w: impl Write, metrics: &[EpochMetrics]) -> std::io::Result<()> {
    writeln!(w, "epoch,split,L1_mm,loss")?;
    for m in metrics {
        writeln!(w, "{},{},{:.9e},{:.9e}", m.epoch, m.split, m.l1_mm, m.loss)?;
    }
    Ok(())
}

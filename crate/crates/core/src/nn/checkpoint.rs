//! `.gmm` checkpoint container: an 8-byte magic, a little-endian u64 manifest
//! length, a JSON manifest, then raw little-endian f64 tensor blobs.

use std::path::Path;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use super::adamw::{AdamW, AdamWConfig};
use super::autoencoder::Normalizer;
use super::params::{NetworkParams, Param, PARAMS_VERSION};
use super::{NetworkSpec, NnError};
use crate::coarsening::{CoarsenError, MeshHierarchy};
use crate::mesh::{MeshError, Topology, TriMesh};
use crate::sparse::{CsrMatrix, SparseError};

pub const MAGIC: &[u8; 8] = b"GMMCKPT1";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checkpoint truncated: need {needed} bytes, have {len}")]
    Truncated { needed: usize, len: usize },
    #[error("bad manifest: {0}")]
    Manifest(String),
    #[error("checkpoint holds a {found} section, expected {expected}")]
    Kind { expected: String, found: String },
    #[error("unsupported checkpoint version {found} (supported: {supported})")]
    Version { found: u32, supported: u32 },
    #[error("shape mismatch for layer {name}: shape implies {expected} values, blob has {found}")]
    TensorLength {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("missing tensor {0}")]
    MissingTensor(String),
    #[error("tensor {0} holds a non-integer index")]
    BadIndex(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Coarsen(#[from] CoarsenError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    kind: String,
    version: u32,
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

/// Decoded container: a kind tag, free-form metadata and named tensors in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: String,
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, ArrayD<f64>)>,
}

impl Container {
    pub fn new(kind: &str, meta: serde_json::Value) -> Self {
        Self {
            kind: kind.to_string(),
            meta,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, t: ArrayD<f64>) {
        self.tensors.push((name.into(), t));
    }

    pub fn push_indices(&mut self, name: impl Into<String>, idx: &[usize]) {
        self.push(
            name,
            ArrayD::from_shape_vec(IxDyn(&[idx.len()]), idx.iter().map(|&i| i as f64).collect()).expect("1-d"),
        );
    }

    pub fn get(&self, name: &str) -> Result<&ArrayD<f64>, CheckpointError> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| CheckpointError::MissingTensor(name.to_string()))
    }

    pub fn indices(&self, name: &str) -> Result<Vec<usize>, CheckpointError> {
        self.get(name)?
            .iter()
            .map(|&v| {
                if v >= 0.0 && v.fract() == 0.0 && v < 9.0e15 {
                    Ok(v as usize)
                } else {
                    Err(CheckpointError::BadIndex(name.to_string()))
                }
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut offset = 0;
        let tensors = self
            .tensors
            .iter()
            .map(|(name, t)| {
                let e = TensorEntry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    offset,
                    len: t.len(),
                };
                offset += t.len() * 8;
                e
            })
            .collect();
        let manifest = Manifest {
            kind: self.kind.clone(),
            version: PARAMS_VERSION,
            meta: self.meta.clone(),
            tensors,
        };
        let json = serde_json::to_vec(&manifest).expect("manifest serializes");
        let mut out = Vec::with_capacity(16 + json.len() + offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in &self.tensors {
            for v in t.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < 16 {
            return Err(CheckpointError::Truncated {
                needed: 16,
                len: bytes.len(),
            });
        }
        if &bytes[..8] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let mlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = 16usize
            .checked_add(mlen)
            .filter(|&e| e <= bytes.len())
            .ok_or(CheckpointError::Truncated {
                needed: 16usize.saturating_add(mlen),
                len: bytes.len(),
            })?;
        let manifest: Manifest =
            serde_json::from_slice(&bytes[16..body]).map_err(|e| CheckpointError::Manifest(e.to_string()))?;
        if manifest.version != PARAMS_VERSION {
            return Err(CheckpointError::Version {
                found: manifest.version,
                supported: PARAMS_VERSION,
            });
        }
        let blob = &bytes[body..];
        let mut tensors = Vec::with_capacity(manifest.tensors.len());
        for e in manifest.tensors {
            let expected: usize = e.shape.iter().product();
            if expected != e.len {
                return Err(CheckpointError::TensorLength {
                    name: e.name,
                    expected,
                    found: e.len,
                });
            }
            let end = e.offset + e.len * 8;
            if end > blob.len() {
                return Err(CheckpointError::Truncated {
                    needed: body + end,
                    len: bytes.len(),
                });
            }
            let data: Vec<f64> = blob[e.offset..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let t = ArrayD::from_shape_vec(IxDyn(&e.shape), data).expect("length checked");
            tensors.push((e.name, t));
        }
        Ok(Self {
            kind: manifest.kind,
            meta: manifest.meta,
            tensors,
        })
    }

    pub fn expect_kind(&self, kind: &str) -> Result<(), CheckpointError> {
        if self.kind != kind {
            return Err(CheckpointError::Kind {
                expected: kind.to_string(),
                found: self.kind.clone(),
            });
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn meta_field<T: serde::de::DeserializeOwned>(meta: &serde_json::Value, key: &str) -> Result<T, CheckpointError> {
    let v = meta
        .get(key)
        .ok_or_else(|| CheckpointError::Manifest(format!("missing meta field {key}")))?;
    serde_json::from_value(v.clone()).map_err(|e| CheckpointError::Manifest(format!("{key}: {e}")))
}

fn to2(t: &ArrayD<f64>, name: &str) -> Result<Array2<f64>, CheckpointError> {
    t.clone()
        .into_dimensionality()
        .map_err(|_| CheckpointError::Manifest(format!("{name} must be 2-d")))
}

fn to1(t: &ArrayD<f64>, name: &str) -> Result<Array1<f64>, CheckpointError> {
    t.clone()
        .into_dimensionality()
        .map_err(|_| CheckpointError::Manifest(format!("{name} must be 1-d")))
}

pub(crate) fn push_hierarchy(c: &mut Container, h: &MeshHierarchy) {
    for (k, t) in h.levels().iter().enumerate() {
        let flat: Vec<usize> = t.faces().iter().flatten().copied().collect();
        c.push_indices(format!("hier.level{k}.faces"), &flat);
    }
    for k in 0..h.factors().len() {
        for (tag, m) in [("down", h.down_transform(k)), ("up", h.up_transform(k))] {
            c.push_indices(format!("hier.{tag}{k}.indptr"), m.indptr());
            c.push_indices(format!("hier.{tag}{k}.indices"), m.indices());
            c.push(
                format!("hier.{tag}{k}.data"),
                ArrayD::from_shape_vec(IxDyn(&[m.nnz()]), m.data().to_vec()).expect("1-d"),
            );
        }
    }
    c.push("hier.reference", h.reference().vertices().clone().into_dyn());
}

#[derive(Serialize, Deserialize)]
struct HierarchyMeta {
    factors: Vec<usize>,
    sizes: Vec<usize>,
}

pub(crate) fn hierarchy_meta(h: &MeshHierarchy) -> serde_json::Value {
    serde_json::to_value(HierarchyMeta {
        factors: h.factors().to_vec(),
        sizes: h.sizes(),
    })
    .expect("serializable")
}

pub(crate) fn read_hierarchy(c: &Container, meta: &serde_json::Value) -> Result<MeshHierarchy, CheckpointError> {
    let hm: HierarchyMeta =
        serde_json::from_value(meta.clone()).map_err(|e| CheckpointError::Manifest(format!("hierarchy: {e}")))?;
    if hm.sizes.len() != hm.factors.len() + 1 {
        return Err(CheckpointError::Manifest("hierarchy sizes and factors disagree".into()));
    }
    let mut levels = Vec::new();
    for (k, &n) in hm.sizes.iter().enumerate() {
        let flat = c.indices(&format!("hier.level{k}.faces"))?;
        if flat.len() % 3 != 0 {
            return Err(CheckpointError::Manifest(format!(
                "level {k} face list not a multiple of 3"
            )));
        }
        let faces = flat.chunks_exact(3).map(|f| [f[0], f[1], f[2]]).collect();
        levels.push(Arc::new(Topology::new(n, faces)?));
    }
    let mut down = Vec::new();
    let mut up = Vec::new();
    for k in 0..hm.factors.len() {
        for (tag, rows, cols) in [
            ("down", hm.sizes[k + 1], hm.sizes[k]),
            ("up", hm.sizes[k], hm.sizes[k + 1]),
        ] {
            let m = CsrMatrix::from_raw(
                rows,
                cols,
                c.indices(&format!("hier.{tag}{k}.indptr"))?,
                c.indices(&format!("hier.{tag}{k}.indices"))?,
                c.get(&format!("hier.{tag}{k}.data"))?.iter().copied().collect(),
            )?;
            if tag == "down" {
                down.push(m);
            } else {
                up.push(m);
            }
        }
    }
    let reference = TriMesh::new(levels[0].clone(), to2(c.get("hier.reference")?, "hier.reference")?)?;
    Ok(MeshHierarchy::from_parts(levels, down, up, reference, hm.factors)?)
}

pub(crate) fn push_params(c: &mut Container, prefix: &str, p: &NetworkParams) {
    for param in p.params() {
        c.push(format!("{prefix}{}", param.name), param.value.clone());
    }
}

/// Reads parameters named by `layout` (name, shape, decay), checking each shape.
pub(crate) fn read_params(
    c: &Container,
    prefix: &str,
    layout: &[(String, Vec<usize>, bool)],
) -> Result<NetworkParams, CheckpointError> {
    let mut out = Vec::with_capacity(layout.len());
    for (name, shape, decay) in layout {
        let t = c.get(&format!("{prefix}{name}"))?;
        if t.shape() != shape.as_slice() {
            return Err(NnError::LayerShape {
                layer: name.clone(),
                expected: shape.clone(),
                found: t.shape().to_vec(),
            }
            .into());
        }
        out.push(Param {
            name: name.clone(),
            value: t.clone(),
            decay: *decay,
        });
    }
    Ok(NetworkParams::new(out))
}

#[derive(Serialize, Deserialize)]
struct OptimizerMeta {
    config: AdamWConfig,
    step: u64,
}

pub(crate) fn push_optimizer(
    c: &mut Container,
    meta: &mut serde_json::Map<String, serde_json::Value>,
    opt: &AdamW,
    p: &NetworkParams,
) {
    meta.insert(
        "optimizer".into(),
        serde_json::to_value(OptimizerMeta {
            config: opt.config,
            step: opt.step,
        })
        .expect("serializable"),
    );
    for (i, param) in p.params().iter().enumerate() {
        c.push(format!("adam.m.{}", param.name), opt.m[i].clone());
        c.push(format!("adam.v.{}", param.name), opt.v[i].clone());
    }
}

pub(crate) fn read_optimizer(c: &Container, p: &NetworkParams) -> Result<Option<AdamW>, CheckpointError> {
    let Some(meta) = c.meta.get("optimizer") else {
        return Ok(None);
    };
    let om: OptimizerMeta =
        serde_json::from_value(meta.clone()).map_err(|e| CheckpointError::Manifest(format!("optimizer: {e}")))?;
    let mut m = Vec::new();
    let mut v = Vec::new();
    for param in p.params() {
        m.push(c.get(&format!("adam.m.{}", param.name))?.clone());
        v.push(c.get(&format!("adam.v.{}", param.name))?.clone());
    }
    let opt = AdamW {
        config: om.config,
        step: om.step,
        m,
        v,
    };
    opt.check(p)?;
    Ok(Some(opt))
}

pub const AUTOENCODER_KIND: &str = "autoencoder";

/// Everything needed to resume training or run the decoder.
#[derive(Debug, Clone)]
pub struct AeCheckpoint {
    pub spec: NetworkSpec,
    pub hierarchy: MeshHierarchy,
    pub params: NetworkParams,
    pub optimizer: Option<AdamW>,
    pub normalizer: Normalizer,
    /// Per-dimension mean and std of training latents.
    pub latent_stats: Option<(Array1<f64>, Array1<f64>)>,
    pub mm_per_unit: f64,
}

impl AeCheckpoint {
    pub fn to_container(&self) -> Container {
        let mut meta = serde_json::Map::new();
        meta.insert("spec".into(), serde_json::to_value(&self.spec).expect("serializable"));
        meta.insert("hierarchy".into(), hierarchy_meta(&self.hierarchy));
        meta.insert("normalizer_scale".into(), serde_json::json!(self.normalizer.scale));
        meta.insert("mm_per_unit".into(), serde_json::json!(self.mm_per_unit));
        let mut c = Container::new(AUTOENCODER_KIND, serde_json::Value::Null);
        push_params(&mut c, "param.", &self.params);
        if let Some(opt) = &self.optimizer {
            push_optimizer(&mut c, &mut meta, opt, &self.params);
        }
        c.push("norm.mean", self.normalizer.mean.clone().into_dyn());
        if let Some((mu, sd)) = &self.latent_stats {
            c.push("latent.mean", mu.clone().into_dyn());
            c.push("latent.std", sd.clone().into_dyn());
        }
        push_hierarchy(&mut c, &self.hierarchy);
        c.meta = serde_json::Value::Object(meta);
        c
    }

    pub fn from_container(c: &Container) -> Result<Self, CheckpointError> {
        c.expect_kind(AUTOENCODER_KIND)?;
        let spec: NetworkSpec = meta_field(&c.meta, "spec")?;
        spec.validate()?;
        let hmeta = c
            .meta
            .get("hierarchy")
            .ok_or_else(|| CheckpointError::Manifest("missing hierarchy".into()))?;
        let hierarchy = read_hierarchy(c, hmeta)?;
        let params = read_params(c, "param.", &spec.layer_shapes())?;
        let optimizer = read_optimizer(c, &params)?;
        let normalizer = Normalizer {
            mean: to2(c.get("norm.mean")?, "norm.mean")?,
            scale: meta_field(&c.meta, "normalizer_scale")?,
        };
        let latent_stats = match (c.get("latent.mean"), c.get("latent.std")) {
            (Ok(a), Ok(b)) => Some((to1(a, "latent.mean")?, to1(b, "latent.std")?)),
            _ => None,
        };
        Ok(Self {
            spec,
            hierarchy,
            params,
            optimizer,
            normalizer,
            latent_stats,
            mm_per_unit: meta_field(&c.meta, "mm_per_unit")?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        self.to_container().save(path)
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_container(&Container::load(path)?)
    }

    /// Refuses checkpoints whose architecture differs from `expected`.
    pub fn load_for_spec(path: &Path, expected: &NetworkSpec) -> Result<Self, CheckpointError> {
        let ck = Self::load(path)?;
        if &ck.spec != expected {
            return Err(NnError::SpecMismatch {
                expected: serde_json::to_string(expected).expect("serializable"),
                found: serde_json::to_string(&ck.spec).expect("serializable"),
            }
            .into());
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn container_round_trip_bytes() {
        let mut c = Container::new("t", serde_json::json!({"x": 0.1, "y": [1e-300, 3.0]}));
        c.push(
            "a",
            ArrayD::from_shape_vec(IxDyn(&[2, 2]), vec![0.1, -0.0, f64::MIN_POSITIVE, 1e300]).unwrap(),
        );
        c.push_indices("b", &[0, 5, 9]);
        let bytes = c.to_bytes();
        let back = Container::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.indices("b").unwrap(), vec![0, 5, 9]);
    }

    #[test]
    fn bad_magic_and_truncation() {
        assert!(matches!(
            Container::from_bytes(b"NOTACKPTxxxxxxxx"),
            Err(CheckpointError::BadMagic)
        ));
        let c = Container::new("t", serde_json::Value::Null);
        let mut bytes = c.to_bytes();
        bytes.truncate(20);
        assert!(matches!(
            Container::from_bytes(&bytes),
            Err(CheckpointError::Truncated { .. })
        ));
    }
}

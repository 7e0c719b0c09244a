//! Ground-truth articulated shape model: Procrustes alignment, a PCA shape
//! basis with scale removed, linear blend skinning, a K-means pose sampler
//! and dogleg keypoint fitting.

pub mod dogleg;
pub mod kmeans;
pub mod lbs;
pub mod model;
pub mod pca;
pub mod procrustes;
pub mod rig;
pub mod rotation;
pub mod sampler;

pub use dogleg::{dogleg, DoglegConfig, DoglegReport, Termination};
pub use kmeans::{kmeans, kmeans_restarts, KMeansResult};
pub use lbs::{lbs_pose, lbs_vertices, KinematicTree, PoseParams};
pub use model::{
    dogleg_fit, pose_corpus, synthesize_registrations, FitOptions, FitReport, FitState, ModelConfig, MorphableModel,
    Observation,
};
pub use pca::{pca_fit, pca_synthesize, ShapeBasis};
pub use procrustes::{
    generalized_procrustes, generalized_procrustes_with, mean_pairwise_distance, procrustes_similarity, GpaConfig,
    GpaResult, ProcrustesFit, Similarity,
};
pub use rig::{finger_rig, hand_rig, tube_rig, tube_rig_with, Rig};
pub use sampler::{sample_pose, sample_pose_with, PoseClusterBook, SamplerConfig};

use crate::camera::CameraError;
use crate::mesh::{MeshError, ObjError};

#[derive(Debug, thiserror::Error)]
pub enum MorphError {
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("mesh {0} does not share the first mesh's topology")]
    TopologyMismatch(usize),
    #[error("invalid rig: {0}")]
    Rig(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Obj(#[from] ObjError),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

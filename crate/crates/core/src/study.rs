//! Decimation-pose study: the same autoencoder trained on pooling
//! hierarchies built from differently posed copies of the template.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coarsening::{build_hierarchy, CoarsenError};
use crate::mesh::TriMesh;
use crate::morphable::{lbs_pose, MorphError, PoseParams, Rig};
use crate::nn::{train_autoencoder, Autoencoder, NetworkSpec, NnError, TrainConfig};
use crate::Exec;

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error("pose study needs at least two reference poses")]
    TooFewPoses,
    #[error(transparent)]
    Morph(#[from] MorphError),
    #[error(transparent)]
    Coarsen(#[from] CoarsenError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePose {
    pub name: String,
    pub pose: PoseParams,
}

pub fn rest_pose(rig: &Rig) -> ReferencePose {
    ReferencePose {
        name: "rest".into(),
        pose: PoseParams::rest(rig.num_joints()),
    }
}

/// Every joint angle halfway from zero to its upper limit.
pub fn half_articulated_pose(rig: &Rig) -> ReferencePose {
    let mut pose = PoseParams::rest(rig.num_joints());
    for (j, lim) in rig.limits.iter().enumerate() {
        for k in 0..3 {
            pose.angles[[j, k]] = 0.5 * lim[k][1];
        }
    }
    ReferencePose {
        name: "half-articulated".into(),
        pose,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub pose: String,
    pub level_sizes: Vec<usize>,
    pub final_train_l1_mm: f64,
    pub final_val_l1_mm: f64,
}

/// One hierarchy per reference pose (decimating the posed template), then
/// identical training runs with the same seed.
pub fn pose_study(
    rig: &Rig,
    poses: &[ReferencePose],
    spec: &NetworkSpec,
    factors: &[usize],
    train: &[TriMesh],
    val: &[TriMesh],
    config: &TrainConfig,
    exec: Exec,
) -> Result<Vec<StudyRow>, StudyError> {
    if poses.len() < 2 {
        return Err(StudyError::TooFewPoses);
    }
    let mut rows = Vec::with_capacity(poses.len());
    for p in poses {
        let reference = lbs_pose(&rig.template, &rig.tree, &p.pose)?;
        let hierarchy = Arc::new(build_hierarchy(&reference, factors)?);
        let ae = Autoencoder::new(spec.clone(), hierarchy.clone())?;
        let run = train_autoencoder(&ae, train, val, config, exec, None, |_| {})?;
        let last = |split: &str| {
            run.metrics
                .iter()
                .rev()
                .find(|m| m.split == split)
                .map_or(f64::NAN, |m| m.l1_mm)
        };
        rows.push(StudyRow {
            pose: p.name.clone(),
            level_sizes: hierarchy.sizes(),
            final_train_l1_mm: last("train"),
            final_val_l1_mm: last("val"),
        });
    }
    Ok(rows)
}

/// CSV with columns `pose,final_val_l1_mm,final_train_l1_mm,level_sizes`.
pub fn write_study_csv(mut w: impl std::io::Write, rows: &[StudyRow]) -> std::io::Result<()> {
    writeln!(w, "pose,final_val_l1_mm,final_train_l1_mm,level_sizes")?;
    for r in rows {
        let sizes: Vec<String> = r.level_sizes.iter().map(|s| s.to_string()).collect();
        writeln!(
            w,
            "{},{:.9e},{:.9e},{}",
            r.pose,
            r.final_val_l1_mm,
            r.final_train_l1_mm,
            sizes.join("/")
        )?;
    }
    Ok(())
}

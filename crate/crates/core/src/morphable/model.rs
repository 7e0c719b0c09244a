//! The statistical articulated model: PCA shape space over a rig plus LBS
//! posing, its synthetic training registrations, and keypoint fitting.

use nalgebra::Vector3;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dogleg::{dogleg, DoglegConfig, DoglegReport};
use super::lbs::{lbs_vertices, PoseParams};
use super::pca::{pca_fit, ShapeBasis};
use super::procrustes::{generalized_procrustes, procrustes_similarity, rotate_rows, rotation_fit, Similarity};
use super::rig::Rig;
use super::rotation::{axis_angle, to_axis_angle};
use super::MorphError;
use crate::camera::{fit_camera, project, WeakPerspectiveCamera};
use crate::mesh::{joint_positions, TriMesh};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Synthetic registrations fed to alignment and PCA.
    pub registrations: usize,
    /// Shape components kept.
    pub components: usize,
    /// Relative std of per-bone length multipliers.
    pub length_sigma: f64,
    /// Relative std of per-bone girth multipliers.
    pub radius_sigma: f64,
    /// Per-vertex isotropic noise, model units.
    pub noise: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            registrations: 120,
            components: 8,
            length_sigma: 0.08,
            radius_sigma: 0.12,
            noise: 0.2,
            seed: 17,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MorphableModel {
    pub rig: Rig,
    pub basis: ShapeBasis,
}

fn bone_axes(rig: &Rig) -> Vec<Vector3<f64>> {
    let j = rig.num_joints();
    let rest = &rig.tree.rest;
    let p = |i: usize| Vector3::new(rest[[i, 0]], rest[[i, 1]], rest[[i, 2]]);
    let mut axes = vec![Vector3::y(); j];
    for i in 0..j {
        let children: Vec<usize> = (0..j).filter(|&c| rig.tree.parents[c] == i as i64).collect();
        if !children.is_empty() {
            let d: Vector3<f64> = children.iter().map(|&c| p(c) - p(i)).sum();
            if d.norm() > 0.0 {
                axes[i] = d.normalize();
            }
        } else if rig.tree.parents[i] >= 0 {
            axes[i] = axes[rig.tree.parents[i] as usize];
        }
    }
    axes
}

/// Person-like variations of the rig template: per-bone length and girth
/// multipliers, per-vertex noise, then a random similarity transform.
pub fn synthesize_registrations(rig: &Rig, config: &ModelConfig, rng: &mut impl Rng) -> Vec<TriMesh> {
    let j = rig.num_joints();
    let axes = bone_axes(rig);
    let rest = &rig.tree.rest;
    let p = |i: usize| Vector3::new(rest[[i, 0]], rest[[i, 1]], rest[[i, 2]]);
    let tv = rig.template.vertices();
    (0..config.registrations)
        .map(|_| {
            let girth: f64 = 1.0
                + config.radius_sigma * 0.5 * {
                    let n: f64 = StandardNormal.sample(rng);
                    n
                };
            let len: Vec<f64> = (0..j)
                .map(|_| {
                    (1.0 + config.length_sigma * {
                        let n: f64 = StandardNormal.sample(rng);
                        n
                    })
                    .max(0.5)
                })
                .collect();
            let rad: Vec<f64> = (0..j)
                .map(|_| {
                    (girth
                        + config.radius_sigma * {
                            let n: f64 = StandardNormal.sample(rng);
                            n
                        })
                    .max(0.5)
                })
                .collect();
            let bone = |i: usize, d: Vector3<f64>| {
                let axial = axes[i] * d.dot(&axes[i]);
                axial * len[i] + (d - axial) * rad[i]
            };
            let mut pivots = vec![p(0); j];
            for i in 1..j {
                let par = rig.tree.parents[i] as usize;
                pivots[i] = pivots[par] + bone(par, p(i) - p(par));
            }
            let mut v = Array2::zeros(tv.raw_dim());
            for (vi, mut out) in v.rows_mut().into_iter().enumerate() {
                let x = Vector3::new(tv[[vi, 0]], tv[[vi, 1]], tv[[vi, 2]]);
                let mut acc = Vector3::zeros();
                for i in 0..j {
                    let w = rig.tree.weights[[vi, i]];
                    if w != 0.0 {
                        acc += (pivots[i] + bone(i, x - p(i))) * w;
                    }
                }
                for k in 0..3 {
                    let n: f64 = StandardNormal.sample(rng);
                    out[k] = acc[k] + config.noise * n;
                }
            }
            let rot = [0, 1, 2].map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI) * 0.5);
            let sim = Similarity {
                scale: rng.random_range(0.7..1.4),
                rotation: axis_angle(rot),
                translation: Vector3::new(
                    rng.random_range(-50.0..50.0),
                    rng.random_range(-50.0..50.0),
                    rng.random_range(-50.0..50.0),
                ),
            };
            rig.template
                .with_vertices(sim.apply(&v.view()))
                .expect("finite registration")
        })
        .collect()
}

/// Poses with a shared per-axis "grip" so angles correlate across joints,
/// all within the rig's limits.
pub fn pose_corpus(rig: &Rig, count: usize, seed: u64) -> Vec<Array2<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let grip: [f64; 3] = [0, 1, 2].map(|_| rng.random::<f64>());
            Array2::from_shape_fn((rig.num_joints(), 3), |(j, k)| {
                let n: f64 = StandardNormal.sample(&mut rng);
                let u = (grip[k] + 0.2 * n).clamp(0.0, 1.0);
                let [lo, hi] = rig.limits[j][k];
                lo + (hi - lo) * u
            })
        })
        .collect()
}

fn centered(x: &ArrayView2<f64>) -> Array2<f64> {
    let c = x.mean_axis(ndarray::Axis(0)).expect("nonempty");
    x - &c
}

impl MorphableModel {
    /// Registrations → generalized Procrustes → rotate back into the rig's
    /// frame at the template's size → PCA.
    pub fn build(rig: Rig, config: &ModelConfig) -> Result<Self, MorphError> {
        rig.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let regs = synthesize_registrations(&rig, config, &mut rng);
        let gpa = generalized_procrustes(&regs)?;
        let tmpl = centered(&rig.template.vertices().view());
        let size = tmpl.iter().map(|v| v * v).sum::<f64>().sqrt();
        let r = rotation_fit(&gpa.mean.vertices().view(), &tmpl.view());
        let meshes = gpa
            .meshes
            .iter()
            .map(|m| m.with_vertices(rotate_rows(&m.vertices().view(), &r) * size))
            .collect::<Result<Vec<_>, _>>()?;
        let basis = pca_fit(&meshes, config.components)?;
        Ok(Self { rig, basis })
    }

    pub fn num_shape(&self) -> usize {
        self.basis.num_components()
    }

    pub fn num_joints(&self) -> usize {
        self.rig.num_joints()
    }

    pub fn shape_vertices(&self, shape: &ArrayView1<f64>) -> Result<Array2<f64>, MorphError> {
        self.basis.synthesize_vertices(shape)
    }

    pub fn posed_vertices(&self, shape: &ArrayView1<f64>, pose: &PoseParams) -> Result<Array2<f64>, MorphError> {
        let rest = self.basis.mean.with_vertices(self.shape_vertices(shape)?)?;
        let tree = self.rig.tree.with_rest_from(&rest, &self.rig.skeleton)?;
        lbs_vertices(&rest.vertices().view(), &tree, pose)
    }

    pub fn posed_mesh(&self, shape: &ArrayView1<f64>, pose: &PoseParams) -> Result<TriMesh, MorphError> {
        Ok(self.basis.mean.with_vertices(self.posed_vertices(shape, pose)?)?)
    }

    /// Keypoints (ring means) of the posed mesh.
    pub fn keypoints(&self, shape: &ArrayView1<f64>, pose: &PoseParams) -> Result<Array2<f64>, MorphError> {
        Ok(joint_positions(&self.posed_mesh(shape, pose)?, &self.rig.keypoints)?)
    }
}

/// Keypoint observations to fit against.
#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    Points3d(Array2<f64>),
    Points2d { points: Array2<f64>, visible: Vec<bool> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitState {
    pub pose: PoseParams,
    pub shape: Array1<f64>,
    pub camera: WeakPerspectiveCamera,
}

impl FitState {
    pub fn rest(model: &MorphableModel) -> Self {
        Self {
            pose: PoseParams::rest(model.num_joints()),
            shape: Array1::zeros(model.num_shape()),
            camera: WeakPerspectiveCamera::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub pose: bool,
    /// Joints whose angles are free (all when `None`).
    pub free_joints: Option<Vec<usize>>,
    pub shape: bool,
    /// Global similarity (3-D observations).
    pub global: bool,
    /// Camera (2-D observations).
    pub camera: bool,
    /// Similarity (3-D) or camera (2-D) initialization before the solve.
    pub prealign: bool,
    pub solver: DoglegConfig,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            pose: true,
            free_joints: None,
            shape: true,
            global: true,
            camera: true,
            prealign: true,
            solver: DoglegConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub state: FitState,
    pub solver: DoglegReport,
}

struct Layout {
    joints: Vec<usize>,
    shape: usize,
    global: bool,
    camera: bool,
}

impl Layout {
    fn pack(&self, s: &FitState) -> Vec<f64> {
        let mut x = Vec::new();
        for &j in &self.joints {
            x.extend((0..3).map(|k| s.pose.angles[[j, k]]));
        }
        x.extend(s.shape.iter().take(self.shape));
        if self.global {
            let g = &s.pose.global;
            x.push(g.scale.ln());
            x.extend(to_axis_angle(&g.rotation));
            x.extend(g.translation.iter());
        }
        if self.camera {
            x.push(s.camera.scale.ln());
            x.extend(s.camera.rot);
            x.extend(s.camera.t);
        }
        x
    }

    fn unpack(&self, x: &[f64], base: &FitState) -> FitState {
        let mut s = base.clone();
        let mut i = 0;
        for &j in &self.joints {
            for k in 0..3 {
                s.pose.angles[[j, k]] = x[i];
                i += 1;
            }
        }
        for k in 0..self.shape {
            s.shape[k] = x[i];
            i += 1;
        }
        if self.global {
            s.pose.global = Similarity {
                scale: x[i].exp(),
                rotation: axis_angle([x[i + 1], x[i + 2], x[i + 3]]),
                translation: Vector3::new(x[i + 4], x[i + 5], x[i + 6]),
            };
            i += 7;
        }
        if self.camera {
            s.camera = WeakPerspectiveCamera {
                scale: x[i].exp(),
                rot: [x[i + 1], x[i + 2], x[i + 3]],
                t: [x[i + 4], x[i + 5]],
            };
        }
        s
    }
}

/// Dogleg least squares over the selected pose, shape, global and camera
/// parameters, matching model keypoints to the observations.
pub fn dogleg_fit(
    model: &MorphableModel,
    observation: &Observation,
    init: &FitState,
    options: &FitOptions,
) -> Result<FitReport, MorphError> {
    let kp = model.rig.keypoints.len();
    let is_2d = matches!(observation, Observation::Points2d { .. });
    match observation {
        Observation::Points3d(p) if p.dim() != (kp, 3) => {
            return Err(MorphError::Shape(format!("{kp} keypoints expected, got {:?}", p.dim())))
        }
        Observation::Points2d { points, visible } if points.dim() != (kp, 2) || visible.len() != kp => {
            return Err(MorphError::Shape(format!(
                "{kp} keypoints expected, got {:?}",
                points.dim()
            )))
        }
        _ => {}
    }
    if init.shape.len() != model.num_shape() || init.pose.angles.nrows() != model.num_joints() {
        return Err(MorphError::Shape("initial state does not match the model".into()));
    }
    let joints = if options.pose {
        options
            .free_joints
            .clone()
            .unwrap_or_else(|| (0..model.num_joints()).collect())
    } else {
        Vec::new()
    };
    if joints.iter().any(|&j| j >= model.num_joints()) {
        return Err(MorphError::Shape("free joint out of range".into()));
    }
    let layout = Layout {
        joints,
        shape: if options.shape { model.num_shape() } else { 0 },
        global: options.global && !is_2d,
        camera: options.camera && is_2d,
    };
    let mut start = init.clone();
    if options.prealign {
        let pts = model.keypoints(&start.shape.view(), &start.pose)?;
        match observation {
            Observation::Points3d(obs) if layout.global => {
                let local = start.pose.global.inverse().apply(&pts.view());
                start.pose.global = procrustes_similarity(&local.view(), &obs.view())?.transform;
            }
            Observation::Points2d { points, visible } if layout.camera => {
                let keep: Vec<usize> = (0..kp).filter(|&i| visible[i]).collect();
                let sel = |a: &Array2<f64>| a.select(ndarray::Axis(0), &keep);
                start.camera = fit_camera(&sel(&pts).view(), &sel(points).view())?;
            }
            _ => {}
        }
    }
    let residual = |x: &[f64]| -> Vec<f64> {
        let s = layout.unpack(x, &start);
        let pts = match model.keypoints(&s.shape.view(), &s.pose) {
            Ok(p) => p,
            Err(_) => return vec![f64::INFINITY; kp * 3],
        };
        match observation {
            Observation::Points3d(obs) => (&pts - obs).iter().copied().collect(),
            Observation::Points2d { points, visible } => {
                let proj = project(&s.camera, &pts.view()).expect("m x 3 keypoints");
                let mut r = Vec::with_capacity(kp * 2);
                for i in 0..kp {
                    for c in 0..2 {
                        r.push(if visible[i] { proj[[i, c]] - points[[i, c]] } else { 0.0 });
                    }
                }
                r
            }
        }
    };
    let x0 = layout.pack(&start);
    let report = dogleg(residual, &x0, options.solver);
    Ok(FitReport {
        state: layout.unpack(&report.x, &start),
        solver: report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morphable::rig::finger_rig;

    fn finger_model() -> MorphableModel {
        let cfg = ModelConfig {
            registrations: 12,
            components: 3,
            ..ModelConfig::default()
        };
        MorphableModel::build(finger_rig(), &cfg).unwrap()
    }

    #[test]
    fn recovers_thirty_degree_bend() {
        let model = finger_model();
        let mut truth = FitState::rest(&model);
        truth.pose.angles[[1, 2]] = 30f64.to_radians();
        let obs = model.keypoints(&truth.shape.view(), &truth.pose).unwrap();
        let opts = FitOptions {
            free_joints: Some(vec![1]),
            shape: false,
            global: false,
            prealign: false,
            ..FitOptions::default()
        };
        let fit = dogleg_fit(&model, &Observation::Points3d(obs), &FitState::rest(&model), &opts).unwrap();
        let err = (fit.state.pose.angles[[1, 2]] - 30f64.to_radians()).abs();
        assert!(err < 1e-4, "angle error {err}, {:?}", fit.solver);
        for w in fit.solver.accepted.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn truth_is_a_fixed_point() {
        let model = finger_model();
        let mut truth = FitState::rest(&model);
        truth.pose.angles[[1, 0]] = 0.2;
        truth.shape[0] = 0.7;
        let obs = model.keypoints(&truth.shape.view(), &truth.pose).unwrap();
        let fit = dogleg_fit(&model, &Observation::Points3d(obs), &truth, &FitOptions::default()).unwrap();
        assert_eq!(fit.solver.iterations, 0);
        assert!(fit.solver.residual_norm < 1e-10);
    }
}

//! Spectral mesh learning: Chebyshev graph convolutions on fixed-topology
//! triangle meshes, quadric-error pooling hierarchies, a mesh autoencoder
//! whose decoder serves as a nonlinear morphable model, a synthetic
//! articulated-mesh data pipeline, and a two-branch keypoint encoder with a
//! weak-perspective camera head.

pub mod camera;
pub mod coarsening;
pub mod dataset;
pub mod exec;
pub mod mesh;
pub mod morphable;
pub mod nn;
pub mod pipeline;
pub mod sparse;
pub mod spectral;
pub mod study;

pub use exec::Exec;

//! Geometry core for keypoint-based camera pose self-supervision.
//!
//! The crate covers the pieces of a keypoint pose pipeline that can be
//! verified without a neural network:
//!
//! - [`rotation`]: quaternions, 6D Gram-Schmidt and 9D SVD rotation
//!   representations, geodesic distances and the double-cover quaternion loss.
//! - [`camera`]: the scaled-orthographic camera and camera multiplex weighting.
//! - [`mesh`]: triangle meshes, OBJ I/O, shape regularizers, farthest point
//!   keypoint sampling and keypoint colour labelling.
//! - [`raster`]: a small software rasterizer (silhouettes, label and vertex
//!   colour renders) and the exact Euclidean distance transform.
//! - [`heatmap`]: Gaussian proxy heatmaps, the visibility weight mask, the
//!   weighted keypoint loss, sub-pixel decoding and a synthetic predictor.
//! - [`pnp`]: closed-form orthographic PnP and a RANSAC wrapper.
//! - [`metrics`]: silhouette/pixel/regularizer losses, IoU, angular error and
//!   Jaccard sequence statistics.
//! - [`multiplex`]: derivative-free camera multiplex optimization and pruning.
//! - [`pipeline`]: per-frame decode, RANSAC and evaluation workflow.
//! - [`synth`]: synthetic shapes, trajectories and full scenarios.
//! - [`cli`]: the `kpose` command line front-end.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod cli;
pub mod error;
pub mod heatmap;
pub mod mesh;
pub mod metrics;
pub mod multiplex;
pub mod optim;
pub mod pipeline;
pub mod pnp;
pub mod raster;
pub mod rng;
pub mod rotation;
pub mod synth;

pub use error::{Error, Result};

/// 2-vector in normalized image coordinates.
pub type Vec2 = nalgebra::Vector2<f64>;
/// 3-vector in model or camera coordinates.
pub type Vec3 = nalgebra::Vector3<f64>;

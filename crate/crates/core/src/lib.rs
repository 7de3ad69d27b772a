//! Key-node driven geometry coding for dynamic triangle mesh sequences.
//!
//! Frames are grouped into groups of frames (GoFs). The first frame of each
//! group is coded statically; every following frame is predicted by deforming
//! a previously decoded frame with a sparse set of key nodes, each carrying a
//! rotation and a translation. Prediction errors are corrected with residuals
//! quantized over an unbalanced octree. Rotations, translations and residuals
//! are quantized against Cauchy-fitted codebooks and Huffman coded.
//!
//! The crate is organised bottom-up:
//!
//! - [`mesh`]: triangle meshes, OBJ/PLY I/O, BVH closest-point queries.
//! - [`deform`]: node graphs, influence weights and the deformation operator.
//! - [`registration`]: the rotation/translation solver.
//! - [`keynode`]: key-node selection and anchor index coding.
//! - [`entropy`]: Cauchy fitting, dead-zone codebooks and Huffman coding.
//! - [`residual`]: octree residual quantization and coding.
//! - [`codec`]: I-frames, P-frames, GoFs and the sequence container.
//! - [`metrics`]: point-to-surface distortion and BD-rate.
//! - [`harness`]: synthetic sequences, component reports and parameter sweeps.

pub mod bytes;
pub mod codec;
pub mod deform;
pub mod entropy;
mod error;
pub mod harness;
pub mod keynode;
pub mod mesh;
pub mod metrics;
pub mod registration;
pub mod residual;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};

/// 3D vector in model units.
pub type Vec3 = nalgebra::Vector3<f64>;
/// 3x3 matrix.
pub type Mat3 = nalgebra::Matrix3<f64>;

//! Training, aligning, and transferring learning trajectories of small MLPs.
//!
//! The crate trains feedforward ReLU networks with SGD, records per-epoch
//! parameter checkpoints, and transfers a recorded trajectory onto a different
//! initial parameter by matching gradients through the network's hidden-unit
//! permutation symmetry. Landscape utilities evaluate the results through
//! linear-path and plane scans.
//!
//! Everything numeric is generic over the scalar type ([`scalar::Scalar`],
//! `f32` or `f64`); the aliases below fix the common instantiations.

pub mod align;
pub mod data;
pub mod error;
pub mod landscape;
pub mod nn;
pub mod optim;
pub mod permsym;
pub mod scalar;
pub mod transfer;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Single-precision parameters — the precision used by training and the file formats.
pub type Params32 = nn::Params<f32>;
/// Double-precision parameters — used by numerical oracles.
pub type Params64 = nn::Params<f64>;
/// Single-precision dataset.
pub type Dataset32 = data::Dataset<f32>;
/// Single-precision trajectory.
pub type Trajectory32 = optim::Trajectory<f32>;

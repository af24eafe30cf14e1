//! Deformable-canvas distances between grayscale images.
//!
//! A moving image is smoothed into a function on the plane, sampled along a
//! deformed copy of the reference pixel grid, and compared with the
//! reference after a closed-form affine color fit. The deformation is
//! parameterized by a coarse anchor grid and refined along a coarse-to-fine
//! path of blur radii.

// Negated float comparisons are used so that NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anchor;
pub mod classify;
pub mod cluster;
pub mod config;
pub mod distortion;
pub mod error;
pub mod flow;
pub mod io;
pub mod lattice;
pub mod optimizer;
pub mod raster;

pub use config::{SolveConfig, StageConfig, View};
pub use error::{Error, IdxError, Result};
pub use lattice::{build_lattice, identity_transform, CanvasLattice, CanvasTransform};
pub use optimizer::{dc_distance, dv_distance, solve_path, DistanceResult, SolvePlan};
pub use raster::{DigitalImage, SmoothImage};

//! Skeleton discovery and skeletal motion tools for sequences of 3D point
//! clouds of an articulated body.
//!
//! The pipeline runs in stages, each in its own module:
//!
//! 1. [`voxelize`] turns point clouds into binary occupancy grids that share
//!    one bounding box.
//! 2. [`keypoints`] places `K` keypoints per frame by direct minimization of
//!    volume-fitting, separation and smoothness terms.
//! 3. [`affinity`] regresses decomposed affinity matrices from the keypoint
//!    trajectories.
//! 4. [`skeleton`] turns the combined affinity into a rooted parent-child
//!    tree with canonical bone offsets.
//! 5. [`kinematics`] provides forward kinematics, 6D rotations, per-frame
//!    rotation fitting and pose interpolation.
//!
//! [`retarget`], [`skinning`] and [`metrics`] consume the fitted motion, and
//! [`synthgen`] builds synthetic rigs with known ground truth. [`pipeline`]
//! chains the stages and writes every artifact to disk.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled (the default) and plain iterators otherwise.
//! Reductions always happen in a fixed order, so results do not depend on the
//! worker count.

pub mod affinity;
pub mod canonical;
pub mod error;
pub mod io;
pub mod keypoints;
pub mod kinematics;
pub mod metrics;
pub mod optim;
pub mod par;
pub mod pipeline;
pub mod retarget;
pub mod skeleton;
pub mod skinning;
pub mod synthgen;
pub mod voxelize;

pub use error::{Error, Result};

/// 3-vector used for every position and offset.
pub type Vec3 = nalgebra::Vector3<f64>;
/// 3×3 matrix used for rotations.
pub type Mat3 = nalgebra::Matrix3<f64>;

//! Recognition and localization of rigid objects in single-view range data.
//!
//! Hypotheses are drawn from feature triples through a geometric hash table,
//! ordered by truncated probability, and tested against a generative model of
//! the range data.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod config;
pub mod curvature;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod index;
pub mod likelihood;
pub mod mesh;
pub mod model;
pub mod neighbors;
pub mod relation;
pub mod scan;
pub mod search;
pub mod shapes;
pub mod synth;
mod textio;

pub use error::{Error, Result};
pub use geometry::{apply_pose, solve_rigid_from_triple, Point3, Pose, UnitVec3, Vector3};
pub use mesh::{classify_point, PointClass, ShellClassifier, TriMesh};
pub use model::{Feature, ObjectModel};
pub use scan::{GroundTruth, Placement, RangeScan, TrueFeature};
pub use textio::write_atomic;

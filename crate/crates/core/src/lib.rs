//! Synthesis engine for the Bennett 4R spatial linkage.
//!
//! The pipeline runs bottom-up:
//!
//! - [`kinematics`]: D-H transforms, dependent-parameter derivation, loop closure residual.
//! - [`solver`]: Levenberg-Marquardt follower-angle solves and full drive-angle sweeps.
//! - [`trajectory`]: gap filling, DFT low-pass, branch-jump gate, 64-frame subsample, waypoints.
//! - [`dataset`]: candidate grid and the three validity gates.
//! - [`normalize`]: per-sample scale fixing and global percentile scaling.
//! - [`metrics`]: parameter, trajectory and velocity error metrics.
//! - [`inverse`]: classical recovery of `(a12, α12)` from three waypoints.
//! - [`io`]: JSONL records, manifests and CSV export.
//! - [`cli`]: the `bennett` command-line tool.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod inverse;
pub mod io;
pub mod kinematics;
pub mod metrics;
pub mod normalize;
pub mod solver;
pub mod trajectory;

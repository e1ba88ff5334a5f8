//! Calibration-aware reward shaping for group-based RL post-training.
//!
//! The crate turns confidence-bearing rollouts into shaped sequence rewards:
//! a within-group ranking hinge asks correct rollouts to be more confident
//! than incorrect ones, and a clean/corrupted pairwise hinge asks confidence
//! to drop when the visual evidence is degraded. It also ships the image
//! corruption ladder used to build those pairs, calibration metrics, and a
//! small synthetic environment on which the whole loop can be trained.

pub mod calib_loss;
pub mod corruption;
pub mod error;
pub mod grouping;
pub mod metrics;
pub mod reward;
pub mod schema;
pub mod severity;
pub mod shaping;
pub mod synthenv;
pub mod trainer;

pub use error::{RacError, Result};
pub use severity::Level;

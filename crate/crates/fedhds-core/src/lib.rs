//! Hierarchical coreset selection for simulated federated fine-tuning.
//!
//! Clients fuse precomputed per-layer features into a low-dimensional
//! space, group them with density clustering, and upload one privacy-
//! protected centroid per group; the server clusters the uploads a second
//! time to drop cross-client redundancy and notifies each client which
//! groups survived. Each client then trains a small model on one sample
//! per surviving group, and the server aggregates the updates weighted by
//! coreset size. Everything is deterministic under a single master seed.

pub mod cluster;
pub mod config;
pub mod error;
pub mod features;
pub mod fedsim;
pub mod linalg;
pub mod metrics;
pub mod partition;
pub mod privacy;
pub mod reduce;
pub mod report;
pub mod rng;
pub mod selection;

pub use error::{Error, Result};
pub use linalg::Matrix;

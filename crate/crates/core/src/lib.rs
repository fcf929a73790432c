//! Path-structured multimarginal Schrödinger bridges over sequential
//! distributional snapshots of a resource state.
//!
//! The pipeline: ingest execution profiles, extract snapshots at planned
//! times ([`marginals`]), solve the entropic multimarginal bridge by Sinkhorn
//! scaling ([`bridge`]), predict distributions at arbitrary times
//! ([`predict`]) and score them with exact Wasserstein distances
//! ([`evaluate`]). [`context`] picks the profiled context closest to a query
//! and [`synth`] produces seeded test data.

pub mod archive;
pub mod bridge;
pub mod cli;
pub mod context;
pub mod error;
pub mod evaluate;
pub mod linalg;
pub mod marginals;
pub mod predict;
pub mod synth;

pub use error::{Error, Result};

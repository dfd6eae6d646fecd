//! Detection of coordinated hashtag promotion from co-sharing networks.
//!
//! The stages are usable on their own or chained through [`pipeline`]:
//! ingest, co-share projection, noise-corrected backbone, Louvain clustering,
//! node2vec embeddings, edge features, and per-cluster isolation forests with
//! TreeSHAP explanations.

pub mod anomaly;
pub mod backbone;
pub mod community;
pub mod cosharing;
pub mod embedding;
pub mod error;
pub mod features;
pub mod graph;
pub mod ingest;
pub mod pipeline;
pub mod util;

pub use error::{Error, Result};

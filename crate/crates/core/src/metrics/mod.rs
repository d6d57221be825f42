//! Summary evaluation.
//!
//! Everything here is a pure function of its inputs except the thin
//! wrappers that fetch embeddings or aspect lists through a [`Session`].
//!
//! [`Session`]: crate::session::Session

pub mod aspects;
pub mod kmeans;
pub mod length;
pub mod opinion;
pub mod position;
pub mod rouge;

use thiserror::Error;

use crate::gateway::GatewayError;

pub use aspects::{aspect_overlap, compare_aspects, AspectMatch, AspectOverlapReport};
pub use kmeans::{kmeans, OpinionClustering};
pub use length::length_stats;
pub use opinion::{opinion_coverage, opinion_coverage_vectors, OpinionReport, DEFAULT_K, DEFAULT_T};
pub use position::{
    position_from_scores, position_representation, SentencePosition, PositionReport, DEFAULT_CUTOFF,
};
pub use rouge::{rouge1_recall, rouge1_recall_docasref, UnigramBag};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MetricError {
    #[error("metric undefined: {0}")]
    Undefined(String),
    #[error("invalid metric parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

//! Bounded-memory stream summaries.
//!
//! Every structure here answers approximate queries over an unbounded stream
//! in fixed space: membership (Bloom), frequency (count-min and its dyadic
//! range arrays), cardinality (HyperLogLog), heavy hitters (Space-Saving),
//! quantiles (t-digest), dimensionality reduction (sparse random
//! projections), and a decay-weighted validation sample (damped reservoir).
//! All of them serialize through [`codec`] with a common binary header and,
//! where the structure supports it, merge losslessly so streams can be
//! sketched in partitions.

pub mod bloom;
pub mod cms;
pub mod codec;
pub mod hll;
pub mod preset;
pub mod projection;
pub mod reservoir;
pub mod space_saving;
pub mod summary;
pub mod tdigest;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SketchError {
    /// Item type does not match the summary's domain.
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    /// A counter hit its representable maximum and was clamped.
    #[error("counter saturated")]
    Saturated,
    /// Merge attempted across different kinds or parameterizations.
    #[error("incompatible sketches: {0}")]
    Incompatible(String),
    /// Operation is not defined for this structure.
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    /// Query on a summary with no content where content is required.
    #[error("empty summary")]
    EmptySummary,
    /// Parameter outside its documented domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// Malformed or truncated serialized bytes.
    #[error("codec error: {0}")]
    Codec(String),
}

pub type Result<T> = std::result::Result<T, SketchError>;

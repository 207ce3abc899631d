//! Driftline: a streaming runtime for self-adapting ML pipelines.
//!
//! The crate wires together the stages of an auto-adaptive model pipeline:
//!
//! * [`sketch`] — bounded-memory summaries of high-rate input streams plus
//!   the decay-weighted validation reservoir;
//! * [`joiner`] — key-based joining of primary events with delayed labels
//!   under an event-time watermark;
//! * [`shift`] — dataset-shift detection over a frozen reference window and
//!   a sliding test window;
//! * [`monitor`] — data and prediction monitoring, world-state maintenance;
//! * [`policy`] — the rule-based engine that balances retraining cost
//!   against expected benefit and issues lifecycle actions;
//! * [`modelkit`] — trainer/predictor wrappers with reference model
//!   families, warm-started hyperparameter search, and atomic activation;
//! * [`store`] — append-only, checksummed, replayable stores for models,
//!   training records, system state, health events, and diagnostics;
//! * [`runtime`] — the deterministic replay/simulation harness gluing the
//!   stages together.
//!
//! Numeric kernels are generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below fix them to `f64`, which is what the runtime uses.

pub mod hash;
pub mod joiner;
pub mod modelkit;
pub mod monitor;
pub mod policy;
pub mod runtime;
pub mod scalar;
pub mod shift;
pub mod sketch;
pub mod store;

pub use scalar::Real;

/// `f64` t-digest, the variant the runtime stages use.
pub type TDigest = sketch::tdigest::TDigest<f64>;
/// `f64` sparse random projection.
pub type RandomProjection = sketch::projection::RandomProjection<f64>;
/// `f64` histogram used by the drift statistics.
pub type Histogram = shift::histogram::Histogram<f64>;
/// `f64` density-ratio model.
pub type RatioModel = shift::kliep::RatioModel<f64>;

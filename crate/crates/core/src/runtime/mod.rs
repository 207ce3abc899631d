//! The replay/simulation harness: deterministic end-to-end runs.
//!
//! `run` wires the stages along the architecture's data-flow edges:
//! sketcher -> joiner -> monitors -> policy -> modelkit -> stores. A run is
//! a pure function of (config, seed): simulated event time replaces wall
//! time everywhere, every random stream derives from the master seed, and
//! all state lands in the stores, from which `report` can reconstruct the
//! run and `replay` can reproduce its decisions.

pub mod config;
pub mod pipeline;
pub mod report;
pub mod synth;

use thiserror::Error;

pub use config::{DriftKind, GeneratorConfig, InjectionSpec, ScenarioConfig, StreamSource};
pub use pipeline::{replay_run, run, PipelineObserver, RunReport};
pub use report::{format_report, reconstruct_report, ReportFormat};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("store error: {0}")]
    Store(#[from] crate::store::StoreError),
    #[error("joiner error: {0}")]
    Join(#[from] crate::joiner::JoinError),
    #[error("model error: {0}")]
    Model(#[from] crate::modelkit::ModelError),
    #[error("policy error: {0}")]
    Policy(#[from] crate::policy::PolicyError),
    #[error("sketch error: {0}")]
    Sketch(#[from] crate::sketch::SketchError),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

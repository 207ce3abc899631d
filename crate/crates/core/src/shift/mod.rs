//! Dataset-shift detection.
//!
//! Detectors compare a frozen reference window (drawn from the training-time
//! distribution) against a sliding test window. The bank covers two-sample
//! statistics on each dimension ([`stats`]), direct density-ratio
//! change-point scoring ([`kliep`]), and supervised error-distance drift
//! detection ([`eddm`]). [`detect`] aggregates them into a [`ShiftReport`].

pub mod detect;
pub mod eddm;
pub mod histogram;
pub mod kliep;
pub mod stats;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ShiftError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("histograms have different bin edges")]
    IncompatibleHistogram,
    #[error("optimizer did not converge; last objective {last_objective}")]
    Convergence { last_objective: f64 },
    #[error("not enough data: {0}")]
    NotReady(String),
}

pub type Result<T> = std::result::Result<T, ShiftError>;

/// Taxonomy of detected shifts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftType {
    /// Input marginal p(x) changed.
    Covariate,
    /// Label marginal p(y) changed.
    PriorProbability,
    /// Abrupt, persistent distribution change at a point in time.
    ChangePoint,
    /// Slow degradation surfaced by supervised error distances.
    Gradual,
    /// Transient out-of-band points.
    Anomaly,
    /// Evidence of change without a clean classification.
    Unknown,
}

/// Point uncertainty attached to a report: a p-value where a null
/// distribution exists, a bootstrap 95% interval otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Uncertainty {
    PValue(f64),
    Interval { lo: f64, hi: f64 },
}

impl Uncertainty {
    pub fn p_value(&self) -> Option<f64> {
        match self {
            Uncertainty::PValue(p) => Some(*p),
            Uncertainty::Interval { .. } => None,
        }
    }
}

/// Per-dimension attribution: which feature moved, by how much.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureAttribution {
    pub dimension: usize,
    /// The dimension's detector statistic (KS D for numeric features).
    pub statistic: f64,
    /// Unadjusted p-value for that dimension, when defined.
    pub p_value: Option<f64>,
}

/// Detector output consumed by monitoring and the policy engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    #[serde(rename = "type")]
    pub shift_type: ShiftType,
    /// Max normalized statistic across the bank (KS D is already in [0,1]).
    pub magnitude: f64,
    #[serde(flatten)]
    pub uncertainty: UncertaintyField,
    /// Dimensions ranked by their statistic, strongest first.
    pub features: Vec<FeatureAttribution>,
    pub detector: String,
    pub ref_window: u64,
    pub test_window: u64,
}

/// Wire shape for `uncertainty`: `p_value` or `ci` field on the JSON record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyField {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci: Option<(f64, f64)>,
}

impl From<Uncertainty> for UncertaintyField {
    fn from(u: Uncertainty) -> Self {
        match u {
            Uncertainty::PValue(p) => UncertaintyField { p_value: Some(p), ci: None },
            Uncertainty::Interval { lo, hi } => UncertaintyField { p_value: None, ci: Some((lo, hi)) },
        }
    }
}

impl ShiftReport {
    /// Significance evidence as a p-value; interval-backed reports fall back
    /// to "no p-value" (None).
    pub fn p_value(&self) -> Option<f64> {
        self.uncertainty.p_value
    }
}

/// A frozen reference sample and a sliding test sample, row-major.
#[derive(Debug, Clone, Default)]
pub struct WindowPair {
    pub reference: Vec<Vec<f64>>,
    pub test: Vec<Vec<f64>>,
    /// Identifiers stamped into reports for provenance.
    pub ref_id: u64,
    pub test_id: u64,
}

impl WindowPair {
    pub fn new(reference: Vec<Vec<f64>>, test: Vec<Vec<f64>>) -> Self {
        Self { reference, test, ref_id: 0, test_id: 0 }
    }

    pub fn feature_dims(&self) -> usize {
        self.reference.first().map_or(0, Vec::len)
    }

    /// One dimension of each window as contiguous columns.
    pub fn column(&self, dim: usize) -> (Vec<f64>, Vec<f64>) {
        let r = self.reference.iter().map(|row| row[dim]).collect();
        let t = self.test.iter().map(|row| row[dim]).collect();
        (r, t)
    }
}

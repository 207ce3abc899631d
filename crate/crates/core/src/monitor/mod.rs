//! Data and prediction monitoring, and the world state they maintain.
//!
//! The data monitor watches the raw feature stream: it accumulates a frozen
//! reference window during warm-up, slides a test window afterwards, and
//! re-evaluates the detector bank on every window advance (progression
//! testing). The prediction monitor applies the same machinery to the
//! prediction distribution and layers supervised signals on top: rolling
//! accuracy and error-distance drift. Both converge in [`SystemState`],
//! the policy engine's view of the world.

pub mod data;
pub mod prediction;

use serde::{Deserialize, Serialize};

use crate::shift::ShiftReport;

pub use data::{DataMonitor, DataMonitorConfig};
pub use prediction::{PredictionMonitor, PredictionMonitorConfig};

/// One entry on the health stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthEvent {
    pub timestamp: i64,
    pub kind: HealthEventKind,
    pub source: String,
    /// Named values; serde_json::Map keeps keys sorted, so records are
    /// byte-stable.
    pub payload: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HealthEventKind {
    Metric,
    Warning,
    Expiry,
    DetectorFired,
    ActionTaken,
}

impl HealthEvent {
    pub fn new(timestamp: i64, kind: HealthEventKind, source: &str) -> Self {
        Self { timestamp, kind, source: source.to_string(), payload: serde_json::Map::new() }
    }

    pub fn with(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.payload.insert(key.to_string(), value.into());
        self
    }
}

/// A shift report together with where it landed on the health stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftEvidence {
    pub report: ShiftReport,
    /// Health-store sequence number of the detector_fired event.
    pub report_seq: u64,
    pub observed_at: i64,
}

/// The policy engine's world view. Persisted to the state store; the
/// snapshot id is the store sequence number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    /// Simulated wall clock (ms since stream start).
    pub wall_clock: i64,
    /// Seconds since the last retrain completed; infinity encoded as the
    /// full elapsed time when no model was ever trained.
    pub time_since_retrain: f64,
    pub retrain_cost: f64,
    pub prediction_value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latest_shift: Option<ShiftEvidence>,
    /// joined / offered primaries, in [0, 1].
    pub label_coverage: f64,
    /// Rolling accuracy of the active model, when labels have arrived.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_health: Option<f64>,
    /// Best certified validation accuracy across the model history.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_health: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active_model_version: Option<u64>,
    /// Snapshot could not be persisted; values may lag the stores.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub stale: bool,
}

impl SystemState {
    /// `baseline_health - model_health`, floored at zero.
    pub fn health_drop(&self) -> Option<f64> {
        match (self.baseline_health, self.model_health) {
            (Some(b), Some(h)) => Some((b - h).max(0.0)),
            _ => None,
        }
    }
}

/// Builds consistent [`SystemState`] snapshots from lifecycle bookkeeping.
#[derive(Debug, Clone)]
pub struct StateTracker {
    pub retrain_cost: f64,
    pub prediction_value: f64,
    last_retrain_at: Option<i64>,
    started_at: i64,
    latest_shift: Option<ShiftEvidence>,
    active_model_version: Option<u64>,
    baseline_health: Option<f64>,
}

impl StateTracker {
    pub fn new(retrain_cost: f64, prediction_value: f64, started_at: i64) -> Self {
        Self {
            retrain_cost,
            prediction_value,
            last_retrain_at: None,
            started_at,
            latest_shift: None,
            active_model_version: None,
            baseline_health: None,
        }
    }

    pub fn record_retrain(&mut self, version: u64, certified_accuracy: f64, now: i64) {
        self.last_retrain_at = Some(now);
        self.active_model_version = Some(version);
        self.baseline_health = Some(
            self.baseline_health
                .map_or(certified_accuracy, |b| b.max(certified_accuracy)),
        );
    }

    pub fn record_rollback(&mut self, version: u64, now: i64) {
        self.active_model_version = Some(version);
        self.last_retrain_at = Some(now);
    }

    pub fn record_shift(&mut self, evidence: ShiftEvidence) {
        self.latest_shift = Some(evidence);
    }

    pub fn latest_shift(&self) -> Option<&ShiftEvidence> {
        self.latest_shift.as_ref()
    }

    pub fn active_model_version(&self) -> Option<u64> {
        self.active_model_version
    }

    pub fn snapshot(
        &self,
        now: i64,
        label_coverage: f64,
        model_health: Option<f64>,
        stale: bool,
    ) -> SystemState {
        let since = match self.last_retrain_at {
            Some(t) => (now - t).max(0) as f64 / 1000.0,
            None => (now - self.started_at).max(0) as f64 / 1000.0,
        };
        SystemState {
            wall_clock: now,
            time_since_retrain: since,
            retrain_cost: self.retrain_cost,
            prediction_value: self.prediction_value,
            latest_shift: self.latest_shift.clone(),
            label_coverage,
            model_health,
            baseline_health: self.baseline_health,
            active_model_version: self.active_model_version,
            stale,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_reflects_retrain_time() {
        let mut t = StateTracker::new(100.0, 1.0, 0);
        let s = t.snapshot(5_000, 1.0, None, false);
        assert_eq!(s.time_since_retrain, 5.0);
        t.record_retrain(1, 0.93, 5_000);
        let s = t.snapshot(5_010, 1.0, Some(0.9), false);
        assert!(s.time_since_retrain < 0.02);
        assert_eq!(s.active_model_version, Some(1));
        assert_eq!(s.baseline_health, Some(0.93));
        assert!((s.health_drop().unwrap() - 0.03).abs() < 1e-12);
    }

    #[test]
    fn baseline_health_is_running_max() {
        let mut t = StateTracker::new(1.0, 1.0, 0);
        t.record_retrain(1, 0.95, 10);
        t.record_retrain(2, 0.75, 20);
        let s = t.snapshot(30, 1.0, Some(0.74), false);
        assert_eq!(s.baseline_health, Some(0.95));
    }

    #[test]
    fn health_event_payloads_serialize_deterministically() {
        let e = HealthEvent::new(5, HealthEventKind::Metric, "test")
            .with("zeta", 1.0)
            .with("alpha", 2.0);
        let a = serde_json::to_string(&e).unwrap();
        let e2 = HealthEvent::new(5, HealthEventKind::Metric, "test")
            .with("alpha", 2.0)
            .with("zeta", 1.0);
        let b = serde_json::to_string(&e2).unwrap();
        assert_eq!(a, b, "map keys must serialize sorted");
    }
}

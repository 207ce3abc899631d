//! Prediction monitoring: the same shift machinery pointed at predictions.
//!
//! The distribution windows track `(predicted class, confidence)` rows, so
//! a model whose output proportions move gets flagged as prior-probability
//! shift even when no labels ever arrive. When labels do arrive, rolling
//! accuracy feeds model health and the error distances feed the gradual
//! (EDDM) detector.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::joiner::Label;
use crate::modelkit::Prediction;
use crate::shift::detect::{run_detectors, DetectorConfig, WindowSide};
use crate::shift::eddm::{DriftLevel, EddmState};
use crate::shift::{FeatureAttribution, ShiftReport, ShiftType, Uncertainty, WindowPair};

use super::{HealthEvent, HealthEventKind};

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PredictionMonitorConfig {
    pub reference_size: usize,
    pub test_size: usize,
    pub advance_every: usize,
    /// Labeled outcomes in the rolling health window.
    pub health_window: usize,
    pub detector: DetectorConfig,
    pub eddm_warning: f64,
    pub eddm_drift: f64,
    /// An EDDM drift signal is reported only when rolling accuracy sits at
    /// least this far below the since-activation average; error-distance
    /// statistics alone are too noisy on stationary Bernoulli error
    /// streams.
    pub gradual_health_margin: f64,
}

impl Default for PredictionMonitorConfig {
    fn default() -> Self {
        Self {
            reference_size: 500,
            test_size: 500,
            advance_every: 250,
            health_window: 1000,
            detector: DetectorConfig { side: WindowSide::Labels, ..Default::default() },
            eddm_warning: 0.95,
            eddm_drift: 0.90,
            gradual_health_margin: 0.03,
        }
    }
}

#[derive(Debug)]
pub struct PredictionMonitor {
    config: PredictionMonitorConfig,
    reference: Vec<Vec<f64>>,
    test: VecDeque<Vec<f64>>,
    since_advance: usize,
    advance_count: u64,
    last_bank_fired: bool,
    eddm: EddmState,
    rolling: VecDeque<bool>,
    labeled: u64,
    lifetime_correct: u64,
    lifetime_total: u64,
    rng: ChaCha20Rng,
}

impl PredictionMonitor {
    pub fn new(config: PredictionMonitorConfig) -> Self {
        let eddm = EddmState::new(config.eddm_warning, config.eddm_drift);
        let rng = ChaCha20Rng::seed_from_u64(config.detector.seed ^ 0x70c1);
        Self {
            reference: Vec::with_capacity(config.reference_size),
            test: VecDeque::with_capacity(config.test_size),
            since_advance: 0,
            advance_count: 0,
            last_bank_fired: false,
            eddm,
            rolling: VecDeque::new(),
            labeled: 0,
            lifetime_correct: 0,
            lifetime_total: 0,
            config,
            rng,
        }
    }

    /// Observe a served prediction (truth may come later or never).
    pub fn observe_prediction(
        &mut self,
        pred: &Prediction,
        now: i64,
    ) -> (Option<ShiftReport>, Vec<HealthEvent>) {
        let row = vec![class_value(&pred.value), pred.confidence];
        if self.reference.len() < self.config.reference_size {
            self.reference.push(row);
            return (None, Vec::new());
        }
        self.test.push_back(row);
        if self.test.len() > self.config.test_size {
            self.test.pop_front();
        }
        self.since_advance += 1;
        if self.since_advance < self.config.advance_every
            || self.test.len() < self.config.test_size
        {
            return (None, Vec::new());
        }
        self.since_advance = 0;
        self.advance_count += 1;

        let pair = WindowPair {
            reference: self.reference.clone(),
            test: self.test.iter().cloned().collect(),
            ref_id: 0,
            test_id: self.advance_count,
        };
        let mut events = Vec::new();
        match run_detectors(&pair, &self.config.detector) {
            Ok(detection) => {
                self.last_bank_fired = detection.report.is_some();
                if let Some(report) = detection.report {
                    events.push(
                        HealthEvent::new(now, HealthEventKind::Metric, "prediction_monitor")
                            .with("prediction_distribution_shift", report.magnitude),
                    );
                    return (Some(report), events);
                }
            }
            Err(_) => {}
        }
        (None, events)
    }

    /// Observe ground truth for an earlier prediction.
    pub fn observe_truth(
        &mut self,
        pred: &Prediction,
        truth: &Label,
        now: i64,
    ) -> (Option<ShiftReport>, Vec<HealthEvent>) {
        let correct = match (pred.value, truth) {
            (Label::Class(p), Label::Class(t)) => p == *t,
            (Label::Real(p), Label::Real(t)) => (p - t).abs() < 0.5,
            _ => false,
        };
        self.labeled += 1;
        self.lifetime_correct += u64::from(correct);
        self.lifetime_total += 1;
        self.rolling.push_back(correct);
        if self.rolling.len() > self.config.health_window {
            self.rolling.pop_front();
        }

        let level = self.eddm.update(!correct);
        let mut events = Vec::new();
        if level == DriftLevel::Warning && self.eddm.error_count() % 10 == 0 {
            events.push(
                HealthEvent::new(now, HealthEventKind::Warning, "prediction_monitor")
                    .with("eddm_ratio", self.eddm.ratio()),
            );
        }
        if level == DriftLevel::Drift {
            // Corroborate the distance collapse with an actual accuracy
            // drop; stationary error streams trip the ratio spuriously.
            let lifetime = self.lifetime_correct as f64 / self.lifetime_total.max(1) as f64;
            let corroborated = self
                .model_health()
                .is_some_and(|h| h < lifetime - self.config.gradual_health_margin);
            if !corroborated {
                self.eddm.reset();
                return (None, events);
            }
            // Error distances collapsed without (necessarily) an abrupt
            // distribution break: gradual drift.
            let (lo, hi) = self.eddm.ratio_bootstrap_ci(200, &mut self.rng);
            let shift_type = if self.last_bank_fired {
                ShiftType::Unknown
            } else {
                ShiftType::Gradual
            };
            let report = ShiftReport {
                shift_type,
                magnitude: 1.0 - self.eddm.ratio(),
                uncertainty: Uncertainty::Interval { lo, hi }.into(),
                features: vec![FeatureAttribution {
                    dimension: 0,
                    statistic: self.eddm.ratio(),
                    p_value: None,
                }],
                detector: "eddm".into(),
                ref_window: 0,
                test_window: self.advance_count,
            };
            self.eddm.reset();
            events.push(
                HealthEvent::new(now, HealthEventKind::Metric, "prediction_monitor")
                    .with("eddm_drift", true),
            );
            return (Some(report), events);
        }
        (None, events)
    }

    /// Rolling accuracy over the health window.
    pub fn model_health(&self) -> Option<f64> {
        if self.rolling.len() < 20 {
            return None;
        }
        let correct = self.rolling.iter().filter(|&&c| c).count();
        Some(correct as f64 / self.rolling.len() as f64)
    }

    pub fn labeled(&self) -> u64 {
        self.labeled
    }

    /// Reset on model activation or rollback: distribution windows restart
    /// under the new model, as does the error-distance detector.
    pub fn on_activation(&mut self) {
        self.reference.clear();
        self.test.clear();
        self.since_advance = 0;
        self.last_bank_fired = false;
        self.rolling.clear();
        self.lifetime_correct = 0;
        self.lifetime_total = 0;
        self.eddm.reset();
    }
}

fn class_value(label: &Label) -> f64 {
    match label {
        Label::Class(c) => f64::from(*c),
        Label::Real(r) => *r,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn pred(class: u32, confidence: f64) -> Prediction {
        Prediction { value: Label::Class(class), confidence, model_version: 1, timestamp: 0 }
    }

    #[test]
    fn rolling_health_tracks_accuracy() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let mut m = PredictionMonitor::new(PredictionMonitorConfig::default());
        for _ in 0..1000 {
            let correct = rng.random::<f64>() < 0.9;
            let truth = Label::Class(u32::from(correct));
            m.observe_truth(&pred(1, 0.8), &truth, 0);
        }
        let health = m.model_health().unwrap();
        assert!((health - 0.90).abs() < 0.03, "health {health}");
    }

    #[test]
    fn unlabeled_predictions_only_update_distribution() {
        let mut m = PredictionMonitor::new(PredictionMonitorConfig::default());
        let (report, events) = m.observe_prediction(&pred(0, 0.7), 0);
        assert!(report.is_none());
        assert!(events.is_empty());
        assert!(m.model_health().is_none());
        assert_eq!(m.labeled(), 0);
    }

    #[test]
    fn output_distribution_shift_reports_prior_probability() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let mut m = PredictionMonitor::new(PredictionMonitorConfig {
            reference_size: 300,
            test_size: 300,
            advance_every: 150,
            ..Default::default()
        });
        // Reference: balanced predictions.
        let mut reported = None;
        for i in 0..2000 {
            let class = if i < 600 {
                u32::from(rng.random::<f64>() < 0.5)
            } else {
                // Model output collapses to class 1.
                u32::from(rng.random::<f64>() < 0.95)
            };
            let (r, _) = m.observe_prediction(&pred(class, 0.6 + 0.3 * rng.random::<f64>()), i);
            if let Some(r) = r {
                reported = Some(r);
                break;
            }
        }
        let report = reported.expect("prediction-side shift must fire");
        assert_eq!(report.shift_type, ShiftType::PriorProbability);
    }

    #[test]
    fn collapsing_accuracy_raises_gradual_drift() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut m = PredictionMonitor::new(PredictionMonitorConfig::default());
        // Healthy phase: errors exactly every 50 labeled outcomes.
        for i in 0..5000u32 {
            let correct = i % 50 != 0;
            let truth = Label::Class(u32::from(correct));
            m.observe_truth(&pred(1, 0.9), &truth, i64::from(i));
        }
        // Degraded phase: 30% error rate.
        let mut report = None;
        for i in 0..3000u32 {
            let correct = rng.random::<f64>() > 0.3;
            let truth = Label::Class(u32::from(correct));
            let (r, _) = m.observe_truth(&pred(1, 0.9), &truth, 5000 + i64::from(i));
            if let Some(r) = r {
                report = Some(r);
                break;
            }
        }
        let report = report.expect("gradual drift must be reported");
        assert_eq!(report.shift_type, ShiftType::Gradual);
        assert!(report.uncertainty.ci.is_some(), "EDDM reports carry intervals");
        assert_eq!(report.detector, "eddm");
    }

    #[test]
    fn activation_resets_windows_and_eddm() {
        let mut m = PredictionMonitor::new(PredictionMonitorConfig::default());
        for i in 0..600 {
            m.observe_prediction(&pred(0, 0.5), i);
            m.observe_truth(&pred(0, 0.5), &Label::Class(0), i);
        }
        assert!(m.model_health().is_some());
        m.on_activation();
        assert!(m.model_health().is_none());
        assert_eq!(m.eddm.error_count(), 0);
    }
}

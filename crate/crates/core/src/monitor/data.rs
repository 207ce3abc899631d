//! Data monitoring: windows over the feature stream plus anomaly banding.

use std::collections::VecDeque;

use crate::shift::detect::{run_detectors, DetectorConfig};
use crate::shift::{
    FeatureAttribution, ShiftError, ShiftReport, ShiftType, Uncertainty, WindowPair,
};
use crate::sketch::tdigest::TDigest;

use super::{HealthEvent, HealthEventKind};

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct DataMonitorConfig {
    /// Warm-up length; the first reference window is exactly this many
    /// events.
    pub reference_size: usize,
    pub test_size: usize,
    /// Events between detector-bank evaluations.
    pub advance_every: usize,
    /// Consecutive firing advances required before the reference re-freezes.
    pub refreeze_after: u32,
    /// Consecutive KLIEP spikes that upgrade a report to change-point.
    pub sustained_spikes: u32,
    pub detector: DetectorConfig,
    /// Reference quantile band for per-event anomaly scoring.
    pub anomaly_lo_q: f64,
    pub anomaly_hi_q: f64,
    /// Out-of-band events in the current test window that trigger an
    /// anomaly report.
    pub anomaly_min_count: usize,
}

impl Default for DataMonitorConfig {
    fn default() -> Self {
        Self {
            reference_size: 1000,
            test_size: 1000,
            advance_every: 500,
            refreeze_after: 2,
            sustained_spikes: 2,
            detector: DetectorConfig::default(),
            anomaly_lo_q: 0.001,
            anomaly_hi_q: 0.999,
            anomaly_min_count: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MonitorStats {
    pub events: u64,
    pub malformed: u64,
    pub advances: u64,
    pub fires: u64,
    pub reports: u64,
    pub refreezes: u64,
    pub anomalies: u64,
}

#[derive(Debug)]
pub struct DataMonitor {
    config: DataMonitorConfig,
    reference: Vec<Vec<f64>>,
    bands: Vec<(f64, f64)>,
    test: VecDeque<Vec<f64>>,
    outside_band: VecDeque<bool>,
    ref_id: u64,
    advance_count: u64,
    since_advance: usize,
    consecutive_fires: u32,
    spike_streak: u32,
    anomaly_reported_at: u64,
    stats: MonitorStats,
}

impl DataMonitor {
    pub fn new(config: DataMonitorConfig) -> Self {
        Self {
            test: VecDeque::with_capacity(config.test_size),
            outside_band: VecDeque::with_capacity(config.test_size),
            reference: Vec::with_capacity(config.reference_size),
            bands: Vec::new(),
            ref_id: 0,
            advance_count: 0,
            since_advance: 0,
            consecutive_fires: 0,
            spike_streak: 0,
            anomaly_reported_at: 0,
            stats: MonitorStats::default(),
            config,
        }
    }

    pub fn warmed_up(&self) -> bool {
        self.reference.len() >= self.config.reference_size && !self.bands.is_empty()
    }

    /// Feed one event's feature vector. Malformed events are counted,
    /// reported as warnings, and skipped.
    pub fn step(&mut self, features: &[f64], now: i64) -> (Option<ShiftReport>, Vec<HealthEvent>) {
        let mut events = Vec::new();
        self.stats.events += 1;

        let expected_dim = self.reference.first().map_or(features.len(), Vec::len);
        if features.is_empty()
            || features.len() != expected_dim
            || features.iter().any(|v| !v.is_finite())
        {
            self.stats.malformed += 1;
            events.push(
                HealthEvent::new(now, HealthEventKind::Warning, "data_monitor")
                    .with("reason", "malformed_event")
                    .with("malformed_total", self.stats.malformed),
            );
            return (None, events);
        }

        if !self.warmed_up() {
            self.reference.push(features.to_vec());
            if self.reference.len() >= self.config.reference_size {
                self.freeze_reference(now, &mut events);
            }
            return (None, events);
        }

        // Anomaly banding on the single event.
        let outside = features
            .iter()
            .zip(&self.bands)
            .any(|(&v, &(lo, hi))| v < lo || v > hi);
        if outside {
            self.stats.anomalies += 1;
        }
        self.test.push_back(features.to_vec());
        self.outside_band.push_back(outside);
        if self.test.len() > self.config.test_size {
            self.test.pop_front();
            self.outside_band.pop_front();
        }

        self.since_advance += 1;
        if self.since_advance < self.config.advance_every || self.test.len() < self.config.test_size
        {
            return (None, events);
        }
        self.since_advance = 0;
        self.advance_count += 1;
        self.stats.advances += 1;

        let report = self
            .evaluate_bank(now, &mut events)
            .or_else(|| self.evaluate_anomaly_burst(now, &mut events));
        (report, events)
    }

    fn evaluate_bank(&mut self, now: i64, events: &mut Vec<HealthEvent>) -> Option<ShiftReport> {
        let pair = WindowPair {
            reference: self.reference.clone(),
            test: self.test.iter().cloned().collect(),
            ref_id: self.ref_id,
            test_id: self.advance_count,
        };
        let detection = match run_detectors(&pair, &self.config.detector) {
            Ok(d) => d,
            Err(ShiftError::NotReady(_)) => return None,
            Err(e) => {
                events.push(
                    HealthEvent::new(now, HealthEventKind::Warning, "data_monitor")
                        .with("reason", "detector_error")
                        .with("detail", e.to_string()),
                );
                return None;
            }
        };

        if detection.diagnostics.kliep_spike {
            self.spike_streak += 1;
        } else {
            self.spike_streak = 0;
        }

        let mut report = match detection.report {
            Some(r) => r,
            None => {
                self.consecutive_fires = 0;
                return None;
            }
        };
        self.stats.fires += 1;
        self.consecutive_fires += 1;

        // A sustained density-ratio spike marks an abrupt persistent change.
        if self.spike_streak >= self.config.sustained_spikes {
            report.shift_type = ShiftType::ChangePoint;
        }

        if self.consecutive_fires >= self.config.refreeze_after {
            self.refreeze(now, events);
        }
        self.stats.reports += 1;
        Some(report)
    }

    /// Out-of-band burst in the current window, tested against a Poisson
    /// null at the band's nominal rate.
    fn evaluate_anomaly_burst(
        &mut self,
        now: i64,
        events: &mut Vec<HealthEvent>,
    ) -> Option<ShiftReport> {
        let count = self.outside_band.iter().filter(|&&b| b).count();
        if count < self.config.anomaly_min_count || self.advance_count == self.anomaly_reported_at {
            return None;
        }
        let dims = self.bands.len() as f64;
        let nominal = (1.0 - (self.config.anomaly_hi_q - self.config.anomaly_lo_q)) * dims;
        let lambda = nominal * self.test.len() as f64;
        let p = poisson_tail(lambda, count as u64);
        if p >= self.config.detector.significance {
            return None;
        }
        self.anomaly_reported_at = self.advance_count;
        self.stats.reports += 1;
        events.push(
            HealthEvent::new(now, HealthEventKind::Metric, "data_monitor")
                .with("anomaly_burst_count", count as u64)
                .with("window", self.test.len() as u64),
        );
        Some(ShiftReport {
            shift_type: ShiftType::Anomaly,
            magnitude: count as f64 / self.test.len() as f64,
            uncertainty: Uncertainty::PValue(p).into(),
            features: vec![FeatureAttribution {
                dimension: 0,
                statistic: count as f64,
                p_value: Some(p),
            }],
            detector: "tdigest_band".into(),
            ref_window: self.ref_id,
            test_window: self.advance_count,
        })
    }

    fn freeze_reference(&mut self, now: i64, events: &mut Vec<HealthEvent>) {
        let dims = self.reference.first().map_or(0, Vec::len);
        let mut digests: Vec<TDigest<f64>> = (0..dims).map(|_| TDigest::new(100.0)).collect();
        for row in &self.reference {
            for (d, &v) in row.iter().enumerate() {
                digests[d].insert(v);
            }
        }
        self.bands = digests
            .iter_mut()
            .map(|t| {
                (
                    t.quantile(self.config.anomaly_lo_q).unwrap_or(f64::NEG_INFINITY),
                    t.quantile(self.config.anomaly_hi_q).unwrap_or(f64::INFINITY),
                )
            })
            .collect();
        events.push(
            HealthEvent::new(now, HealthEventKind::Metric, "data_monitor")
                .with("reference_frozen", self.ref_id)
                .with("size", self.reference.len() as u64),
        );
    }

    /// Replace the reference with the current test window. Events never sit
    /// in both windows: the test window is drained into the reference.
    fn refreeze(&mut self, now: i64, events: &mut Vec<HealthEvent>) {
        self.ref_id += 1;
        self.reference = self.test.drain(..).collect();
        self.outside_band.clear();
        self.consecutive_fires = 0;
        self.spike_streak = 0;
        self.stats.refreezes += 1;
        let mut freeze_events = Vec::new();
        self.freeze_reference(now, &mut freeze_events);
        events.extend(freeze_events);
        events.push(
            HealthEvent::new(now, HealthEventKind::Metric, "data_monitor")
                .with("reference_refrozen", self.ref_id),
        );
    }

    pub fn stats(&self) -> MonitorStats {
        self.stats
    }

    pub fn reference_id(&self) -> u64 {
        self.ref_id
    }

    pub fn reference_rows(&self) -> &[Vec<f64>] {
        &self.reference
    }

    pub fn reference_len(&self) -> usize {
        self.reference.len()
    }

    pub fn test_len(&self) -> usize {
        self.test.len()
    }
}

fn poisson_tail(lambda: f64, k: u64) -> f64 {
    // P(X >= k) for X ~ Poisson(lambda).
    if k == 0 {
        return 1.0;
    }
    let mut term = (-lambda).exp();
    let mut cdf = term;
    for i in 1..k {
        term *= lambda / i as f64;
        cdf += term;
    }
    (1.0 - cdf).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn gauss(rng: &mut ChaCha20Rng) -> f64 {
        let u1: f64 = rng.random::<f64>().max(1e-12);
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    fn config() -> DataMonitorConfig {
        DataMonitorConfig {
            reference_size: 400,
            test_size: 400,
            advance_every: 200,
            ..Default::default()
        }
    }

    #[test]
    fn warm_up_accumulates_without_reports() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let mut m = DataMonitor::new(config());
        for i in 0..399 {
            let (report, _) = m.step(&[gauss(&mut rng), gauss(&mut rng)], i);
            assert!(report.is_none());
            assert!(!m.warmed_up());
        }
        m.step(&[0.0, 0.0], 399);
        assert!(m.warmed_up());
        assert_eq!(m.reference_len(), 400);
        assert_eq!(m.test_len(), 0, "no event may sit in both windows");
    }

    #[test]
    fn malformed_events_are_counted_and_skipped() {
        let mut m = DataMonitor::new(config());
        m.step(&[1.0, 2.0], 0);
        let (_, events) = m.step(&[f64::NAN, 0.0], 1);
        assert!(matches!(events[0].kind, HealthEventKind::Warning));
        let (_, events) = m.step(&[1.0], 2); // dimension mismatch
        assert!(!events.is_empty());
        assert_eq!(m.stats().malformed, 2);
        assert_eq!(m.reference_len(), 1);
    }

    #[test]
    fn stationary_stream_fires_rarely() {
        // Null calibration pooled over independent streams: a single frozen
        // reference conditions that run's rate, so the marginal rate is what
        // the 5% significance speaks about.
        let mut advances = 0u64;
        let mut fires = 0u64;
        for seed in 0..10u64 {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let mut m = DataMonitor::new(config());
            for i in 0..10_400 {
                m.step(&[gauss(&mut rng), gauss(&mut rng)], i);
            }
            advances += m.stats().advances;
            fires += m.stats().fires;
        }
        assert!(advances >= 400, "expected many advances, got {advances}");
        let rate = fires as f64 / advances as f64;
        assert!(rate <= 0.05 + 0.02, "pooled firing rate {rate}");
    }

    #[test]
    fn abrupt_shift_reports_and_refreezes_after_confirmation() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        // Gate out stationary false fires so the confirmation sequencing is
        // exercised deterministically (the stationary null cannot reach
        // D = 0.2 at these window sizes).
        let mut cfg = config();
        cfg.detector.significance = 0.01;
        cfg.detector.min_magnitude = 0.2;
        let mut m = DataMonitor::new(cfg);
        for i in 0..1000 {
            m.step(&[gauss(&mut rng), gauss(&mut rng)], i);
        }
        assert_eq!(m.reference_id(), 0);
        let mut first_report_at = None;
        let mut refrozen_at = None;
        for i in 0..2000 {
            let (report, _) = m.step(&[gauss(&mut rng) + 2.5, gauss(&mut rng)], 1000 + i);
            if report.is_some() && first_report_at.is_none() {
                first_report_at = Some(i);
            }
            if m.reference_id() == 1 && refrozen_at.is_none() {
                refrozen_at = Some(i);
                assert_eq!(m.test_len(), 0, "refreeze drains the test window");
            }
        }
        let fired = first_report_at.expect("shift must be reported");
        let frozen = refrozen_at.expect("reference must re-freeze");
        assert!(fired < frozen, "emission precedes confirmation");
        assert_eq!(m.stats().refreezes, 1);
        // Post-refreeze the stream is stationary again relative to the new
        // reference: no further refreezes.
        for i in 0..2000 {
            m.step(&[gauss(&mut rng) + 2.5, gauss(&mut rng)], 3000 + i);
        }
        assert_eq!(m.stats().refreezes, 1);
    }

    #[test]
    fn anomaly_burst_produces_anomaly_report() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let mut cfg = config();
        cfg.anomaly_min_count = 10;
        let mut m = DataMonitor::new(cfg);
        for i in 0..800 {
            m.step(&[gauss(&mut rng)], i);
        }
        let mut saw_anomaly = false;
        for i in 0..600 {
            // One in ten events is far out of band.
            let v = if i % 10 == 0 { 40.0 } else { gauss(&mut rng) };
            let (report, _) = m.step(&[v], 800 + i);
            if let Some(r) = report {
                if r.shift_type == crate::shift::ShiftType::Anomaly {
                    saw_anomaly = true;
                    assert!(r.p_value().unwrap() < 0.05);
                    break;
                }
            }
        }
        assert!(saw_anomaly);
    }
}

//! Early drift detection from the distance between classification errors.
//!
//! Tracks the running mean and deviation of the gap (in observations)
//! between consecutive errors. A shrinking `p' + 2s'` relative to its
//! historical maximum signals degradation: below 0.95 of the maximum is a
//! warning, below 0.90 is drift. No level is ever raised before 30 errors
//! have been observed.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftLevel {
    Normal,
    Warning,
    Drift,
}

/// Distances kept for bootstrap intervals on the monitoring ratio.
const RECENT_WINDOW: usize = 200;

#[derive(Debug, Clone)]
pub struct EddmState {
    warning_threshold: f64,
    drift_threshold: f64,
    min_errors: u64,
    steps: u64,
    last_error_step: Option<u64>,
    error_count: u64,
    distance_count: u64,
    mean_distance: f64,
    m2: f64,
    max_mean: f64,
    max_std: f64,
    level: DriftLevel,
    recent_distances: VecDeque<f64>,
}

impl Default for EddmState {
    fn default() -> Self {
        Self::new(0.95, 0.90)
    }
}

impl EddmState {
    pub fn new(warning_threshold: f64, drift_threshold: f64) -> Self {
        Self {
            warning_threshold,
            drift_threshold,
            min_errors: 30,
            steps: 0,
            last_error_step: None,
            error_count: 0,
            distance_count: 0,
            mean_distance: 0.0,
            m2: 0.0,
            max_mean: 0.0,
            max_std: 0.0,
            level: DriftLevel::Normal,
            recent_distances: VecDeque::with_capacity(RECENT_WINDOW),
        }
    }

    /// Observe one classification outcome.
    pub fn update(&mut self, is_error: bool) -> DriftLevel {
        self.steps += 1;
        if !is_error {
            return self.level;
        }
        self.error_count += 1;
        if let Some(last) = self.last_error_step {
            let distance = (self.steps - last) as f64;
            self.distance_count += 1;
            let delta = distance - self.mean_distance;
            self.mean_distance += delta / self.distance_count as f64;
            self.m2 += delta * (distance - self.mean_distance);
            if self.recent_distances.len() == RECENT_WINDOW {
                self.recent_distances.pop_front();
            }
            self.recent_distances.push_back(distance);
        }
        self.last_error_step = Some(self.steps);

        // The 30-error minimum gates the whole monitoring statistic: the
        // maxima as well as the level, so early high-variance estimates
        // cannot lock in a spurious baseline.
        if self.distance_count >= 2 && self.error_count >= self.min_errors {
            let std = self.std_distance();
            let metric = self.mean_distance + 2.0 * std;
            if metric > self.max_mean + 2.0 * self.max_std {
                self.max_mean = self.mean_distance;
                self.max_std = std;
            }
            // Drift latches until reset.
            if self.level != DriftLevel::Drift {
                let ratio = self.ratio();
                self.level = if ratio < self.drift_threshold {
                    DriftLevel::Drift
                } else if ratio < self.warning_threshold {
                    DriftLevel::Warning
                } else {
                    DriftLevel::Normal
                };
            }
        }
        self.level
    }

    /// `(p' + 2s') / (p'max + 2s'max)`; 1 while no maximum exists.
    pub fn ratio(&self) -> f64 {
        let denom = self.max_mean + 2.0 * self.max_std;
        if denom <= 0.0 {
            return 1.0;
        }
        (self.mean_distance + 2.0 * self.std_distance()) / denom
    }

    fn std_distance(&self) -> f64 {
        if self.distance_count < 2 {
            0.0
        } else {
            (self.m2 / self.distance_count as f64).sqrt()
        }
    }

    /// Bootstrap 95% interval of the monitoring ratio over the recent
    /// inter-error distances.
    pub fn ratio_bootstrap_ci<R: Rng + ?Sized>(&self, draws: usize, rng: &mut R) -> (f64, f64) {
        let denom = self.max_mean + 2.0 * self.max_std;
        if self.recent_distances.len() < 4 || denom <= 0.0 {
            let r = self.ratio();
            return (r, r);
        }
        let data: Vec<f64> = self.recent_distances.iter().copied().collect();
        let mut ratios: Vec<f64> = (0..draws.max(40))
            .map(|_| {
                let mut sum = 0.0;
                let mut sq = 0.0;
                for _ in 0..data.len() {
                    let v = data[rng.random_range(0..data.len())];
                    sum += v;
                    sq += v * v;
                }
                let n = data.len() as f64;
                let mean = sum / n;
                let var = (sq / n - mean * mean).max(0.0);
                (mean + 2.0 * var.sqrt()) / denom
            })
            .collect();
        ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let lo = ratios[(ratios.len() as f64 * 0.025) as usize];
        let hi = ratios[((ratios.len() as f64 * 0.975) as usize).min(ratios.len() - 1)];
        (lo, hi)
    }

    pub fn level(&self) -> DriftLevel {
        self.level
    }

    pub fn error_count(&self) -> u64 {
        self.error_count
    }

    pub fn mean_distance(&self) -> f64 {
        self.mean_distance
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Forget everything; used after a drift signal has been acted on.
    pub fn reset(&mut self) {
        let (w, d) = (self.warning_threshold, self.drift_threshold);
        *self = Self::new(w, d);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn gate_holds_below_thirty_errors() {
        // Collapsing distances, but only 29 errors: must stay normal.
        let mut s = EddmState::default();
        for gap in (2..60).rev().step_by(2) {
            for _ in 0..gap {
                s.update(false);
            }
            s.update(true);
        }
        assert_eq!(s.error_count(), 29);
        assert_eq!(s.level(), DriftLevel::Normal);
    }

    #[test]
    fn gate_is_exhaustive_over_random_sequences() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..500 {
            let mut s = EddmState::default();
            let mut errors = 0u64;
            while errors < 30 {
                let is_error = rng.random::<f64>() < 0.3;
                let level = s.update(is_error);
                if is_error {
                    errors += 1;
                }
                if errors < 30 {
                    assert_eq!(level, DriftLevel::Normal, "level raised at {errors} errors");
                }
            }
        }
    }

    #[test]
    fn constant_error_rate_stays_normal() {
        // Constant rate = constant spacing: the monitoring ratio is 1 by
        // construction and no level is ever raised.
        let mut s = EddmState::default();
        for step in 1..=10_000u64 {
            s.update(step % 50 == 0);
            assert_eq!(s.level(), DriftLevel::Normal);
        }
        assert!((s.ratio() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn error_rate_step_is_flagged_quickly() {
        // 1% error rate stepping to 20%: flagged within 500 post-change
        // steps in at least 90% of seeds.
        let mut hits = 0;
        for seed in 0..20u64 {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let mut s = EddmState::default();
            for step in 1..=5000u64 {
                s.update(step % 100 == 0);
            }
            assert_eq!(s.level(), DriftLevel::Normal, "no false alarm pre-change");
            let mut post_steps = 0u64;
            while post_steps < 500 {
                post_steps += 1;
                if s.update(rng.random::<f64>() < 0.20) == DriftLevel::Drift {
                    hits += 1;
                    break;
                }
            }
        }
        assert!(hits >= 18, "only {hits}/20 seeds flagged within 500 steps");
    }

    #[test]
    fn reset_clears_drift_latch() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let mut s = EddmState::default();
        for step in 1..=5000u64 {
            s.update(step % 100 == 0);
        }
        for _ in 0..2000 {
            s.update(rng.random::<f64>() < 0.25);
        }
        assert_eq!(s.level(), DriftLevel::Drift);
        s.reset();
        assert_eq!(s.level(), DriftLevel::Normal);
        assert_eq!(s.error_count(), 0);
    }

    #[test]
    fn bootstrap_interval_brackets_ratio() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut s = EddmState::default();
        for _ in 0..3000 {
            s.update(rng.random::<f64>() < 0.05);
        }
        let (lo, hi) = s.ratio_bootstrap_ci(200, &mut rng);
        assert!(lo <= hi);
        assert!(lo > 0.0);
    }
}

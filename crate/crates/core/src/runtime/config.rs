//! Scenario configuration: one document covering every module's parameters.

use serde::{Deserialize, Serialize};

use crate::joiner::JoinerConfig;
use crate::modelkit::{HpRange, HpSpace, ModelFamily};
use crate::monitor::{DataMonitorConfig, PredictionMonitorConfig};
use crate::policy::{default_rules, CostModel, Rule};
use crate::sketch::preset::SketchPreset;

use super::RunError;

/// Where the event stream comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamSource {
    /// Synthetic Gaussian class-conditional mixture.
    Generator(GeneratorConfig),
    /// JSONL event records, one per line.
    File { path: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    /// Number of primary events.
    pub events: usize,
    pub dims: usize,
    pub classes: usize,
    /// Distance between class centers, in feature standard deviations.
    pub class_sep: f64,
    /// Events between a primary and its feedback record.
    pub label_delay: usize,
    /// Class priors; uniform when empty.
    pub priors: Vec<f64>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            events: 10_000,
            dims: 2,
            classes: 2,
            class_sep: 3.0,
            label_delay: 50,
            priors: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftKind {
    CovariateMeanShift,
    PriorRebalance,
    AbruptChangepoint,
    GradualLinear,
    AnomalyBurst,
}

/// One injected disturbance, addressed by primary-event index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InjectionSpec {
    pub kind: DriftKind,
    pub start: usize,
    /// Abrupt kinds use 0 (permanent); gradual and burst kinds need a span.
    #[serde(default)]
    pub duration: usize,
    /// Kind-specific scale: feature standard deviations for mean shifts and
    /// bursts, the target class-0 proportion for prior rebalancing.
    pub magnitude: f64,
    /// Affected feature dimensions; empty means dimension 0.
    #[serde(default)]
    pub dims: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelkitConfig {
    pub family: ModelFamily,
    /// Minimum examples any training run needs.
    pub min_examples: usize,
    /// Joined examples accumulated before the bootstrap training.
    pub initial_train_at: usize,
    /// Trailing joined-example window used for retraining.
    pub retrain_window: usize,
    /// Random-search budget; 1 disables search (defaults or warm start).
    pub search_budget: usize,
    pub hp_space: HpSpace,
}

impl Default for ModelkitConfig {
    fn default() -> Self {
        Self {
            family: ModelFamily::SgdLinearClassifier,
            min_examples: 200,
            initial_train_at: 2000,
            retrain_window: 2000,
            search_budget: 1,
            hp_space: HpSpace {
                ranges: vec![
                    HpRange {
                        name: "learning_rate".into(),
                        lo: 0.01,
                        hi: 1.0,
                        log_scale: true,
                        integer: false,
                    },
                    HpRange { name: "epochs".into(), lo: 2.0, hi: 8.0, log_scale: false, integer: true },
                ],
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct StoreConfig {
    pub segment_cap_bytes: u64,
    /// Total on-disk budget; eviction keeps usage below this.
    pub budget_bytes: u64,
    pub reservoir_capacity: usize,
    pub reservoir_decay: f64,
    pub reservoir_decay_period: u64,
    /// Events between validation-reservoir snapshots.
    pub reservoir_snapshot_every: u64,
}

impl Default for StoreConfig {
    fn default() -> Self {
        Self {
            segment_cap_bytes: 4 << 20,
            budget_bytes: 1 << 30,
            reservoir_capacity: 500,
            reservoir_decay: 0.5,
            reservoir_decay_period: 5_000,
            reservoir_snapshot_every: 10_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Simulated milliseconds per event index; all wall-clock fields derive
    /// from this.
    pub ms_per_event: i64,
    /// Events between policy evaluations (and state snapshots).
    pub policy_every: u64,
    /// Run the generator inline instead of on a producer thread.
    pub single_thread: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { ms_per_event: 10, policy_every: 500, single_thread: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Master seed; every random stream in the run derives from it.
    pub seed: u64,
    pub stream: StreamSource,
    #[serde(default)]
    pub injections: Vec<InjectionSpec>,
    #[serde(default)]
    pub sketch: SketchPreset,
    #[serde(default)]
    pub joiner: JoinerConfig,
    #[serde(default)]
    pub data_monitor: DataMonitorConfig,
    #[serde(default)]
    pub prediction_monitor: PredictionMonitorConfig,
    #[serde(default = "default_rules")]
    pub rules: Vec<Rule>,
    #[serde(default)]
    pub cost: CostModel,
    #[serde(default)]
    pub modelkit: ModelkitConfig,
    #[serde(default)]
    pub store: StoreConfig,
    #[serde(default)]
    pub run: RunConfig,
}

impl ScenarioConfig {
    /// Structural validation with field paths, before any processing.
    pub fn validate(&self) -> Result<(), RunError> {
        let fail = |path: &str, msg: String| Err(RunError::Config(format!("{path}: {msg}")));
        if let StreamSource::Generator(g) = &self.stream {
            if g.events == 0 {
                return fail("stream.generator.events", "must be >= 1".into());
            }
            if g.dims == 0 {
                return fail("stream.generator.dims", "must be >= 1".into());
            }
            if g.classes < 2 {
                return fail("stream.generator.classes", "must be >= 2".into());
            }
            if !g.priors.is_empty() {
                if g.priors.len() != g.classes {
                    return fail(
                        "stream.generator.priors",
                        format!("{} entries for {} classes", g.priors.len(), g.classes),
                    );
                }
                let sum: f64 = g.priors.iter().sum();
                if (sum - 1.0).abs() > 1e-9 || g.priors.iter().any(|&p| p < 0.0) {
                    return fail("stream.generator.priors", "must be a distribution".into());
                }
            }
            for (i, inj) in self.injections.iter().enumerate() {
                if inj.start >= g.events {
                    return fail(
                        &format!("injections[{i}].start"),
                        format!("{} beyond stream length {}", inj.start, g.events),
                    );
                }
                if inj.start + inj.duration > g.events {
                    return fail(
                        &format!("injections[{i}].duration"),
                        "span extends beyond the stream".into(),
                    );
                }
            }
        }
        for (i, inj) in self.injections.iter().enumerate() {
            match inj.kind {
                DriftKind::GradualLinear | DriftKind::AnomalyBurst => {
                    if inj.duration == 0 {
                        return fail(
                            &format!("injections[{i}].duration"),
                            "gradual and burst injections need duration > 0".into(),
                        );
                    }
                }
                DriftKind::AbruptChangepoint => {
                    if inj.duration != 0 {
                        return fail(
                            &format!("injections[{i}].duration"),
                            "abrupt change-points are permanent (duration = 0)".into(),
                        );
                    }
                }
                DriftKind::PriorRebalance => {
                    if !(0.0..=1.0).contains(&inj.magnitude) {
                        return fail(
                            &format!("injections[{i}].magnitude"),
                            "prior rebalance magnitude is a proportion in [0, 1]".into(),
                        );
                    }
                }
                DriftKind::CovariateMeanShift => {}
            }
        }
        if self.run.ms_per_event <= 0 {
            return fail("run.ms_per_event", "must be >= 1".into());
        }
        if self.run.policy_every == 0 {
            return fail("run.policy_every", "must be >= 1".into());
        }
        if self.modelkit.min_examples < 10 {
            return fail("modelkit.min_examples", "must be >= 10".into());
        }
        if self.store.reservoir_capacity == 0 {
            return fail("store.reservoir_capacity", "must be >= 1".into());
        }
        if !(self.store.reservoir_decay > 0.0 && self.store.reservoir_decay <= 1.0) {
            return fail("store.reservoir_decay", "must be in (0, 1]".into());
        }
        Ok(())
    }

    /// Canonical JSON digest, stamped into run reports.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config always serializes");
        format!("{:016x}", crate::hash::xxh64(&bytes, 0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ScenarioConfig {
        ScenarioConfig {
            seed: 1,
            stream: StreamSource::Generator(GeneratorConfig::default()),
            injections: Vec::new(),
            sketch: SketchPreset::default(),
            joiner: JoinerConfig::default(),
            data_monitor: DataMonitorConfig::default(),
            prediction_monitor: PredictionMonitorConfig::default(),
            rules: default_rules(),
            cost: CostModel::default(),
            modelkit: ModelkitConfig::default(),
            store: StoreConfig::default(),
            run: RunConfig::default(),
        }
    }

    #[test]
    fn default_config_validates() {
        base().validate().unwrap();
    }

    #[test]
    fn validation_reports_field_paths() {
        let mut c = base();
        c.injections.push(InjectionSpec {
            kind: DriftKind::CovariateMeanShift,
            start: 1_000_000,
            duration: 0,
            magnitude: 2.0,
            dims: vec![0],
        });
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("injections[0].start"), "{err}");

        let mut c = base();
        c.injections.push(InjectionSpec {
            kind: DriftKind::GradualLinear,
            start: 10,
            duration: 0,
            magnitude: 1.0,
            dims: vec![],
        });
        assert!(c.validate().unwrap_err().to_string().contains("injections[0].duration"));

        let mut c = base();
        c.run.policy_every = 0;
        assert!(c.validate().unwrap_err().to_string().contains("run.policy_every"));
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = base();
        let mut b = base();
        assert_eq!(a.digest(), b.digest());
        b.seed = 2;
        assert_ne!(a.digest(), b.digest());
    }
}

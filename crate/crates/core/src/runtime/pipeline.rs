//! The pipeline: one event loop over the stream, stage by stage.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::path::Path;
use std::sync::mpsc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::hash::stream_seed;
use crate::joiner::{
    EventRecord, Expiration, FeedbackEvent, JoinedExample, Joiner, Label, PrimaryEvent,
};
use crate::modelkit::{
    search::warm_start_search, Hyperparams, Prediction, Predictor, Trainer, TrainingRecord,
};
use crate::monitor::{
    DataMonitor, HealthEvent, HealthEventKind, PredictionMonitor, ShiftEvidence, StateTracker,
    SystemState,
};
use crate::policy::{action_name, ActionKind, Decision, PolicyEngine};
use crate::shift::detect::WindowSide;
use crate::shift::{ShiftReport, ShiftType};
use crate::sketch::codec;
use crate::sketch::preset::SketchSuite;
use crate::sketch::reservoir::DampedReservoir;
use crate::sketch::tdigest::TDigest;
use crate::store::{StoreKind, StoreOptions, StoreSet};

use super::config::{ScenarioConfig, StreamSource};
use super::synth;
use super::RunError;

/// Diagnostic-log record kinds. The event records make a run replayable;
/// the rest make it explainable.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiagRecord {
    /// One input stream record, in arrival order.
    Event { record: EventRecord },
    /// A joined example resolved against the prediction served for it.
    Outcome {
        key: String,
        primary_ts: i64,
        truth: Label,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        predicted: Option<Label>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        correct: Option<bool>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        model_version: Option<u64>,
    },
    /// A policy decision with full provenance.
    Decision { decision: Decision },
    /// An expired join-buffer entry.
    Expiry { expiration: Expiration },
}

/// State-store record kinds; snapshot ids are store sequence numbers.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateRecord {
    Snapshot { state: SystemState },
    ReservoirSnapshot {
        capacity: usize,
        seen: u64,
        items: Vec<JoinedExample>,
    },
    ReferenceWindow {
        reference_id: u64,
        rows: Vec<Vec<f64>>,
    },
}

/// Observation points on the documented data-flow edges, for integration
/// tests that assert module isolation.
pub trait PipelineObserver {
    fn on_sketcher(&mut self, _key: &str) {}
    fn on_data_monitor(&mut self, _features: &[f64]) {}
    fn on_joiner_emit(&mut self, _example: &JoinedExample) {}
    fn on_prediction(&mut self, _prediction: &Prediction) {}
    fn on_policy(&mut self, _snapshot_id: u64, _decision: &Decision) {}
    fn on_training(&mut self, _examples: usize, _version: u64) {}
    fn on_activation(&mut self, _version: u64) {}
}

struct NoopObserver;
impl PipelineObserver for NoopObserver {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSummary {
    pub at_event: u64,
    #[serde(rename = "type")]
    pub shift_type: ShiftType,
    pub magnitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
    pub detector: String,
    pub report_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSummary {
    pub decision_id: u64,
    pub at_event: u64,
    pub action: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseAccuracy {
    pub name: String,
    pub from_event: u64,
    pub to_event: u64,
    pub accuracy: f64,
    pub examples: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionOutcome {
    pub kind: super::config::DriftKind,
    pub start_event: u64,
    /// Primary events between the injection and the first detector report.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection_latency: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_digest: String,
    pub seed: u64,
    pub events: u64,
    pub primaries: u64,
    pub feedbacks: u64,
    pub joined: u64,
    pub expired: u64,
    pub label_coverage: f64,
    pub detections: Vec<DetectionSummary>,
    pub injections: Vec<InjectionOutcome>,
    pub actions: Vec<ActionSummary>,
    pub phase_accuracy: Vec<PhaseAccuracy>,
    pub models_trained: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_model_version: Option<u64>,
    pub sketch_bytes: u64,
    pub store_bytes: u64,
    pub store_root: String,
}

struct OutcomeRow {
    primary_index: u64,
    correct: Option<bool>,
}

struct Pipeline<'a> {
    config: &'a ScenarioConfig,
    stores: StoreSet,
    suite: SketchSuite,
    feature_digests: Vec<TDigest<f64>>,
    joiner: Joiner,
    data_monitor: DataMonitor,
    prediction_monitor: PredictionMonitor,
    policy: PolicyEngine,
    trainer: Trainer,
    predictor: Predictor,
    tracker: StateTracker,
    reservoir: DampedReservoir<JoinedExample>,
    reservoir_rng: ChaCha20Rng,
    last_reservoir_snapshot: Option<u64>,
    persisted_references: Vec<u64>,
    training_buffer: VecDeque<JoinedExample>,
    training_history: Vec<TrainingRecord>,
    pending_predictions: HashMap<String, VecDeque<Prediction>>,
    applied_decisions: BTreeSet<u64>,
    outcomes: Vec<OutcomeRow>,
    detections: Vec<DetectionSummary>,
    actions: Vec<ActionSummary>,
    primaries: u64,
    feedbacks: u64,
    now: i64,
    models_trained: u64,
}

impl<'a> Pipeline<'a> {
    fn new(config: &'a ScenarioConfig, out_dir: &Path) -> Result<Self, RunError> {
        let seed = config.seed;
        let stores = StoreSet::open(
            out_dir,
            StoreOptions {
                segment_cap_bytes: config.store.segment_cap_bytes,
                fsync_on_seal: false,
            },
        )?;
        let suite = SketchSuite::new(&config.sketch, stream_seed(seed, "sketch"))?;

        // Detector randomness is derived from the master seed; window sides
        // are fixed by the stage they serve.
        let mut dm_config = config.data_monitor.clone();
        dm_config.detector.seed = stream_seed(seed, "detector.data");
        dm_config.detector.side = WindowSide::Features;
        let mut pm_config = config.prediction_monitor.clone();
        pm_config.detector.seed = stream_seed(seed, "detector.prediction");
        pm_config.detector.side = WindowSide::Labels;

        Ok(Self {
            stores,
            suite,
            feature_digests: Vec::new(),
            joiner: Joiner::new(config.joiner.clone())?,
            data_monitor: DataMonitor::new(dm_config),
            prediction_monitor: PredictionMonitor::new(pm_config),
            policy: PolicyEngine::new(config.rules.clone(), config.cost.clone())?,
            trainer: Trainer::new(config.modelkit.family, config.modelkit.min_examples),
            predictor: Predictor::new(),
            tracker: StateTracker::new(config.cost.retrain_cost, 1.0, 0),
            reservoir: DampedReservoir::new(
                config.store.reservoir_capacity,
                config.store.reservoir_decay,
                config.store.reservoir_decay_period,
            )?,
            reservoir_rng: ChaCha20Rng::seed_from_u64(stream_seed(seed, "reservoir")),
            last_reservoir_snapshot: None,
            persisted_references: Vec::new(),
            training_buffer: VecDeque::new(),
            training_history: Vec::new(),
            pending_predictions: HashMap::new(),
            applied_decisions: BTreeSet::new(),
            outcomes: Vec::new(),
            detections: Vec::new(),
            actions: Vec::new(),
            primaries: 0,
            feedbacks: 0,
            now: 0,
            models_trained: 0,
            config,
        })
    }

    fn consume(
        &mut self,
        record: EventRecord,
        observer: &mut dyn PipelineObserver,
    ) -> Result<(), RunError> {
        self.now = record.ts;
        self.stores
            .append(StoreKind::Diagnostic, &DiagRecord::Event { record: record.clone() })?;

        let emissions = if let Some(features) = record.features.clone() {
            self.primaries += 1;
            let features = features.into_vector();
            self.step_primary(&record.key, record.ts, features, observer)?
        } else if let Some(label) = record.label {
            self.feedbacks += 1;
            let feedback = FeedbackEvent {
                key: record.key.clone(),
                timestamp: record.ts,
                label,
                weak: record.weak,
            };
            self.joiner.offer_feedback(feedback)?
        } else {
            Vec::new()
        };
        self.handle_emissions(emissions, observer)?;

        // Event time drives the watermark; expirations feed the health
        // stream and release their pending predictions.
        let expirations = self.joiner.advance_watermark(record.ts);
        for expiration in expirations {
            if expiration.side == crate::joiner::Side::Primary {
                if let Some(queue) = self.pending_predictions.get_mut(&expiration.key) {
                    queue.pop_front();
                    if queue.is_empty() {
                        self.pending_predictions.remove(&expiration.key);
                    }
                }
            }
            let event = HealthEvent::new(self.now, HealthEventKind::Expiry, "joiner")
                .with("key", expiration.key.clone())
                .with("side", serde_json::to_value(expiration.side)?)
                .with("age", expiration.age);
            self.stores.append(StoreKind::Health, &event)?;
            self.stores
                .append(StoreKind::Diagnostic, &DiagRecord::Expiry { expiration })?;
        }

        // Lifecycle cadence is driven by primary count.
        if record.features.is_some() {
            if self.predictor.active_version().is_none()
                && self.training_buffer.len() >= self.config.modelkit.initial_train_at
            {
                self.train_and_activate(None, "bootstrap", observer)?;
            }
            if self.primaries % self.config.run.policy_every == 0 {
                self.policy_cycle(observer)?;
            }
            if self.primaries % self.config.store.reservoir_snapshot_every == 0
                && !self.reservoir.is_empty()
            {
                self.snapshot_reservoir()?;
            }
        }
        Ok(())
    }

    fn step_primary(
        &mut self,
        key: &str,
        ts: i64,
        features: Vec<f64>,
        observer: &mut dyn PipelineObserver,
    ) -> Result<Vec<JoinedExample>, RunError> {
        // Sketcher: bounded-memory view of the raw stream.
        observer.on_sketcher(key);
        self.suite.insert(key.as_bytes());
        if self.feature_digests.len() != features.len() {
            self.feature_digests = (0..features.len()).map(|_| TDigest::new(100.0)).collect();
        }
        for (digest, &v) in self.feature_digests.iter_mut().zip(&features) {
            digest.insert(v);
        }

        // Data monitoring.
        observer.on_data_monitor(&features);
        let (report, events) = self.data_monitor.step(&features, ts);
        self.record_health(events)?;
        if let Some(report) = report {
            self.record_report(report)?;
        }
        self.persist_reference_if_refrozen()?;

        // Prediction path.
        if let Some(prediction) = self.predictor.predict(&features, ts)? {
            observer.on_prediction(&prediction);
            let (pred_report, events) = self.prediction_monitor.observe_prediction(&prediction, ts);
            self.record_health(events)?;
            if let Some(report) = pred_report {
                self.record_report(report)?;
            }
            self.pending_predictions
                .entry(key.to_string())
                .or_default()
                .push_back(prediction);
        }

        // Joiner.
        let primary = PrimaryEvent { key: key.to_string(), timestamp: ts, features };
        Ok(self.joiner.offer_primary(primary)?)
    }

    fn handle_emissions(
        &mut self,
        emissions: Vec<JoinedExample>,
        observer: &mut dyn PipelineObserver,
    ) -> Result<(), RunError> {
        for example in emissions {
            observer.on_joiner_emit(&example);
            // Resolve the prediction served at primary time, if any.
            let pending = self
                .pending_predictions
                .get_mut(&example.key)
                .and_then(VecDeque::pop_front);
            if self
                .pending_predictions
                .get(&example.key)
                .is_some_and(VecDeque::is_empty)
            {
                self.pending_predictions.remove(&example.key);
            }
            let (predicted, correct, version) = match &pending {
                Some(p) => {
                    let (report, events) =
                        self.prediction_monitor.observe_truth(p, &example.label, self.now);
                    self.record_health(events)?;
                    if let Some(report) = report {
                        self.record_report(report)?;
                    }
                    let correct = match (p.value, example.label) {
                        (Label::Class(a), Label::Class(b)) => a == b,
                        (Label::Real(a), Label::Real(b)) => (a - b).abs() < 0.5,
                        _ => false,
                    };
                    (Some(p.value), Some(correct), Some(p.model_version))
                }
                None => (None, None, None),
            };
            self.outcomes.push(OutcomeRow {
                primary_index: (example.primary_ts / self.config.run.ms_per_event) as u64,
                correct,
            });
            self.stores.append(
                StoreKind::Diagnostic,
                &DiagRecord::Outcome {
                    key: example.key.clone(),
                    primary_ts: example.primary_ts,
                    truth: example.label,
                    predicted,
                    correct,
                    model_version: version,
                },
            )?;
            self.training_buffer.push_back(example.clone());
            let cap = self
                .config
                .modelkit
                .retrain_window
                .max(self.config.modelkit.initial_train_at)
                * 2;
            while self.training_buffer.len() > cap {
                self.training_buffer.pop_front();
            }
            self.reservoir.observe(example, &mut self.reservoir_rng);
        }
        Ok(())
    }

    fn record_health(&mut self, events: Vec<HealthEvent>) -> Result<(), RunError> {
        for event in events {
            self.stores.append(StoreKind::Health, &event)?;
        }
        Ok(())
    }

    /// Detector reports land on the health stream; their sequence number is
    /// the report id carried into provenance.
    fn record_report(&mut self, report: ShiftReport) -> Result<(), RunError> {
        let event = HealthEvent::new(self.now, HealthEventKind::DetectorFired, "monitor")
            .with("report", serde_json::to_value(&report)?);
        let seq = self.stores.append(StoreKind::Health, &event)?;
        self.detections.push(DetectionSummary {
            at_event: (self.now / self.config.run.ms_per_event) as u64,
            shift_type: report.shift_type,
            magnitude: report.magnitude,
            p_value: report.p_value(),
            detector: report.detector.clone(),
            report_seq: seq,
        });
        self.tracker.record_shift(ShiftEvidence {
            report,
            report_seq: seq,
            observed_at: self.now,
        });
        Ok(())
    }

    /// Persist each reference-window generation once; the segment holding
    /// the current reference stays pinned against eviction.
    fn persist_reference_if_refrozen(&mut self) -> Result<(), RunError> {
        if !self.data_monitor.warmed_up() {
            return Ok(());
        }
        let current = self.data_monitor.reference_id();
        if self.persisted_references.contains(&current) {
            return Ok(());
        }
        let seq = self.stores.append(
            StoreKind::State,
            &StateRecord::ReferenceWindow {
                reference_id: current,
                rows: self.data_monitor.reference_rows().to_vec(),
            },
        )?;
        self.stores.state.clear_pins();
        self.stores.state.pin(seq);
        self.persisted_references.push(current);
        Ok(())
    }

    fn policy_cycle(&mut self, observer: &mut dyn PipelineObserver) -> Result<(), RunError> {
        let counters = self.joiner.counters();
        let coverage = if counters.offered_primary == 0 {
            1.0
        } else {
            counters.joined as f64 / counters.offered_primary as f64
        };
        let health = self.prediction_monitor.model_health();
        let state = self.tracker.snapshot(self.now, coverage, health, false);
        let snapshot_id = self
            .stores
            .append(StoreKind::State, &StateRecord::Snapshot { state: state.clone() })?;
        let decision = self.policy.evaluate(&state, snapshot_id);
        observer.on_policy(snapshot_id, &decision);
        self.stores.append(
            StoreKind::Diagnostic,
            &DiagRecord::Decision { decision: decision.clone() },
        )?;
        self.apply_decision(&decision, observer)?;

        // Space management runs on the policy cadence.
        if self.stores.total_bytes() > self.config.store.budget_bytes {
            self.stores.evict(self.config.store.budget_bytes)?;
        }
        Ok(())
    }

    /// Execute a policy decision. Retries of the same decision id are
    /// acknowledged without re-execution.
    fn apply_decision(
        &mut self,
        decision: &Decision,
        observer: &mut dyn PipelineObserver,
    ) -> Result<(), RunError> {
        if !self.applied_decisions.insert(decision.provenance.decision_id) {
            return Ok(());
        }
        if decision.action.kind != ActionKind::KeepExisting {
            self.actions.push(ActionSummary {
                decision_id: decision.provenance.decision_id,
                at_event: (self.now / self.config.run.ms_per_event) as u64,
                action: action_name(decision.action.kind).into(),
                rule: decision.provenance.rule_id.clone(),
            });
        }
        match decision.action.kind {
            ActionKind::KeepExisting => {}
            ActionKind::RaiseAlert => {
                let event = HealthEvent::new(self.now, HealthEventKind::ActionTaken, "policy")
                    .with("action", "raise_alert")
                    .with(
                        "reason",
                        decision.action.params.alert_reason.clone().unwrap_or_default(),
                    )
                    .with("decision_id", decision.provenance.decision_id);
                self.stores.append(StoreKind::Health, &event)?;
            }
            ActionKind::Retrain => {
                self.train_and_activate(
                    Some(decision),
                    &format!("decision_{}", decision.provenance.decision_id),
                    observer,
                )?;
            }
            ActionKind::Rollback => {
                let target = decision.action.params.rollback_target.or_else(|| {
                    self.predictor
                        .active_version()
                        .and_then(|v| v.checked_sub(1))
                        .filter(|&v| v >= 1)
                });
                match target.map(|t| self.stores.models.get(t)) {
                    Some(Ok(artifact)) => {
                        let version = artifact.version;
                        self.predictor.activate(std::sync::Arc::new(artifact));
                        self.prediction_monitor.on_activation();
                        self.tracker.record_rollback(version, self.now);
                        self.pin_models(version);
                        observer.on_activation(version);
                        let event =
                            HealthEvent::new(self.now, HealthEventKind::ActionTaken, "policy")
                                .with("action", "rollback")
                                .with("version", version)
                                .with("decision_id", decision.provenance.decision_id);
                        self.stores.append(StoreKind::Health, &event)?;
                    }
                    _ => {
                        let event =
                            HealthEvent::new(self.now, HealthEventKind::Warning, "policy")
                                .with("failed_action", "rollback")
                                .with("reason", "target version missing")
                                .with("decision_id", decision.provenance.decision_id);
                        self.stores.append(StoreKind::Health, &event)?;
                    }
                }
            }
            ActionKind::TransferLearn => {
                let event = HealthEvent::new(self.now, HealthEventKind::Warning, "policy")
                    .with("failed_action", "transfer_learn")
                    .with("reason", "unsupported operation")
                    .with("decision_id", decision.provenance.decision_id);
                self.stores.append(StoreKind::Health, &event)?;
            }
        }
        Ok(())
    }

    fn train_and_activate(
        &mut self,
        decision: Option<&Decision>,
        seed_tag: &str,
        observer: &mut dyn PipelineObserver,
    ) -> Result<(), RunError> {
        let window = decision
            .and_then(|d| d.action.params.retrain_window)
            .unwrap_or(self.config.modelkit.retrain_window);
        let skip = self.training_buffer.len().saturating_sub(window);
        let data: Vec<JoinedExample> =
            self.training_buffer.iter().skip(skip).cloned().collect();
        let train_seed = stream_seed(self.config.seed, &format!("train.{seed_tag}"));

        let hp = if self.config.modelkit.search_budget > 1 {
            match warm_start_search(
                &self.training_history,
                &self.config.modelkit.hp_space,
                self.config.modelkit.search_budget,
                stream_seed(self.config.seed, &format!("hpo.{seed_tag}")),
                self.config.modelkit.family,
                &data,
            ) {
                Ok(hp) => hp,
                Err(_) => Hyperparams::default(),
            }
        } else if let Some(best) = self
            .training_history
            .iter()
            .max_by(|a, b| a.metrics.accuracy.partial_cmp(&b.metrics.accuracy).unwrap())
        {
            best.hyperparams.clone()
        } else {
            Hyperparams::default()
        };

        observer.on_training(data.len(), self.trainer.next_version());
        match self.trainer.train(&data, &hp, train_seed, self.now, self.last_reservoir_snapshot) {
            Ok((artifact, record)) => {
                let version = artifact.version;
                let certified = artifact.metrics.accuracy;
                self.stores.models.put(&artifact)?;
                self.stores.append(StoreKind::Training, &record)?;
                self.training_history.push(record);
                self.predictor.activate(std::sync::Arc::new(artifact));
                self.prediction_monitor.on_activation();
                self.tracker.record_retrain(version, certified, self.now);
                self.pin_models(version);
                self.models_trained += 1;
                observer.on_activation(version);
                let event = HealthEvent::new(self.now, HealthEventKind::ActionTaken, "lifecycle")
                    .with("action", "retrain")
                    .with("version", version)
                    .with("examples", data.len() as u64)
                    .with("holdout_accuracy", certified);
                self.stores.append(StoreKind::Health, &event)?;
            }
            Err(e) => {
                let event = HealthEvent::new(self.now, HealthEventKind::Warning, "lifecycle")
                    .with("failed_action", "retrain")
                    .with("reason", e.to_string());
                self.stores.append(StoreKind::Health, &event)?;
            }
        }
        Ok(())
    }

    fn pin_models(&mut self, active: u64) {
        let mut pins = vec![active];
        if active > 1 {
            pins.push(active - 1);
        }
        self.stores.pinned_models = pins;
    }

    fn snapshot_reservoir(&mut self) -> Result<(), RunError> {
        let items: Vec<JoinedExample> = self.reservoir.items().cloned().collect();
        let seq = self.stores.append(
            StoreKind::State,
            &StateRecord::ReservoirSnapshot {
                capacity: self.reservoir.capacity(),
                seen: self.reservoir.seen(),
                items,
            },
        )?;
        self.last_reservoir_snapshot = Some(seq);
        Ok(())
    }

    fn finish(mut self) -> Result<RunReport, RunError> {
        let counters = self.joiner.counters();
        let coverage = if counters.offered_primary == 0 {
            1.0
        } else {
            counters.joined as f64 / counters.offered_primary as f64
        };

        let sketch_bytes = self.suite.serialized_size() as u64
            + self
                .feature_digests
                .iter_mut()
                .map(|d| codec::encode_tdigest(d).len() as u64)
                .sum::<u64>();

        let phase_accuracy = self.phase_accuracies();
        let injections = self.injection_outcomes();
        let final_metrics = HealthEvent::new(self.now, HealthEventKind::Metric, "run")
            .with("sketch_bytes", sketch_bytes)
            .with("distinct_keys_estimate", self.suite.hll.cardinality())
            .with("events", self.primaries + self.feedbacks);
        self.stores.append(StoreKind::Health, &final_metrics)?;
        self.stores.sync_all()?;

        Ok(RunReport {
            config_digest: self.config.digest(),
            seed: self.config.seed,
            events: self.primaries + self.feedbacks,
            primaries: self.primaries,
            feedbacks: self.feedbacks,
            joined: counters.joined,
            expired: counters.expired_primary + counters.expired_feedback,
            label_coverage: coverage,
            detections: self.detections,
            injections,
            actions: self.actions,
            phase_accuracy,
            models_trained: self.models_trained,
            final_model_version: self.predictor.active_version(),
            sketch_bytes,
            store_bytes: self.stores.total_bytes(),
            store_root: self.stores.root().display().to_string(),
        })
    }

    fn phase_accuracies(&self) -> Vec<PhaseAccuracy> {
        phase_accuracies_from(
            &self.outcomes,
            self.config.injections.first().map(|i| i.start as u64),
            self.primaries,
        )
    }

    fn injection_outcomes(&self) -> Vec<InjectionOutcome> {
        self.config
            .injections
            .iter()
            .map(|inj| {
                let start = inj.start as u64;
                let latency = self
                    .detections
                    .iter()
                    .find(|d| d.at_event >= start && d.shift_type != ShiftType::Anomaly)
                    .map(|d| d.at_event - start);
                InjectionOutcome { kind: inj.kind, start_event: start, detection_latency: latency }
            })
            .collect()
    }
}

/// Accuracy by phase around the first injection: the trailing pre-shift
/// stretch, the immediate post-shift drop window, and the recovery window.
fn phase_accuracies_from(
    outcomes: &[OutcomeRow],
    first_injection: Option<u64>,
    primaries: u64,
) -> Vec<PhaseAccuracy> {
    let accuracy_in = |name: &str, from: u64, to: u64| -> PhaseAccuracy {
        let mut correct = 0u64;
        let mut total = 0u64;
        for row in outcomes {
            if row.primary_index >= from && row.primary_index < to {
                if let Some(c) = row.correct {
                    total += 1;
                    correct += u64::from(c);
                }
            }
        }
        PhaseAccuracy {
            name: name.to_string(),
            from_event: from,
            to_event: to,
            accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
            examples: total,
        }
    };
    match first_injection {
        Some(start) => vec![
            accuracy_in("pre_shift", start.saturating_sub(10_000), start),
            accuracy_in("post_shift", start, start + 2_000),
            accuracy_in("recovered", start + 8_000, start + 10_000),
            accuracy_in("overall", 0, primaries.max(1)),
        ],
        None => vec![accuracy_in("overall", 0, primaries.max(1))],
    }
}

/// Materialize the configured stream (generated or loaded), with
/// injections applied.
pub fn materialize_stream(config: &ScenarioConfig) -> Result<Vec<EventRecord>, RunError> {
    let base = match &config.stream {
        StreamSource::Generator(g) => synth::generate(g, config.seed, config.run.ms_per_event),
        StreamSource::File { path } => read_jsonl(Path::new(path))?,
    };
    synth::inject(&base, &config.injections, config.seed)
}

pub fn read_jsonl(path: &Path) -> Result<Vec<EventRecord>, RunError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: EventRecord = serde_json::from_str(line)
            .map_err(|e| RunError::Config(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(record);
    }
    Ok(out)
}

/// Run a scenario into `out_dir`. Deterministic per (config, seed).
pub fn run(config: &ScenarioConfig, out_dir: &Path) -> Result<RunReport, RunError> {
    run_with_observer(config, out_dir, &mut NoopObserver)
}

pub fn run_with_observer(
    config: &ScenarioConfig,
    out_dir: &Path,
    observer: &mut dyn PipelineObserver,
) -> Result<RunReport, RunError> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(
        out_dir.join("config.json"),
        serde_json::to_vec_pretty(config)?,
    )?;

    let stream = materialize_stream(config)?;
    let report = if config.run.single_thread {
        let mut pipeline = Pipeline::new(config, out_dir)?;
        for record in stream {
            pipeline.consume(record, observer)?;
        }
        pipeline.finish()?
    } else {
        // Producer/consumer pipelining; event order is preserved by the
        // channel, so the stores come out identical to single-thread mode.
        let (tx, rx) = mpsc::sync_channel::<EventRecord>(1024);
        let producer = std::thread::spawn(move || {
            for record in stream {
                if tx.send(record).is_err() {
                    break;
                }
            }
        });
        let mut pipeline = Pipeline::new(config, out_dir)?;
        for record in rx {
            pipeline.consume(record, observer)?;
        }
        producer.join().expect("producer thread panicked");
        pipeline.finish()?
    };

    std::fs::write(out_dir.join("report.json"), serde_json::to_vec_pretty(&report)?)?;
    Ok(report)
}

/// Re-run a recorded run from its diagnostic log into a fresh directory and
/// return both action sequences (recorded, replayed). Identical sequences
/// demonstrate provenance closure.
pub fn replay_run(
    run_dir: &Path,
    replay_dir: &Path,
) -> Result<(Vec<String>, Vec<String>), RunError> {
    let config: ScenarioConfig =
        serde_json::from_slice(&std::fs::read(run_dir.join("config.json"))?)?;
    let stores = StoreSet::open(run_dir, StoreOptions::default())?;
    let recorded = stores.replay(StoreKind::Diagnostic, 0, stores.diag.next_seq())?;

    let mut events = Vec::new();
    let mut recorded_actions = Vec::new();
    for (_, value) in recorded {
        let record: DiagRecord = serde_json::from_value(value)?;
        match record {
            DiagRecord::Event { record } => events.push(record),
            DiagRecord::Decision { decision } => {
                recorded_actions.push(decision.provenance.action.clone())
            }
            _ => {}
        }
    }

    std::fs::create_dir_all(replay_dir)?;
    std::fs::write(
        replay_dir.join("config.json"),
        serde_json::to_vec_pretty(&config)?,
    )?;
    let mut pipeline = Pipeline::new(&config, replay_dir)?;
    let mut observer = NoopObserver;
    for record in events {
        pipeline.consume(record, &mut observer)?;
    }
    let _ = pipeline.finish()?;

    let replay_stores = StoreSet::open(replay_dir, StoreOptions::default())?;
    let replayed = replay_stores.replay(StoreKind::Diagnostic, 0, replay_stores.diag.next_seq())?;
    let mut replayed_actions = Vec::new();
    for (_, value) in replayed {
        if let Ok(DiagRecord::Decision { decision }) = serde_json::from_value(value) {
            replayed_actions.push(decision.provenance.action);
        }
    }
    Ok((recorded_actions, replayed_actions))
}

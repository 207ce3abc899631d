//! Trainer and predictor wrappers around the built-in model families.
//!
//! The wrapper interface is the contract: training captures full metadata
//! (hyperparameters, window span, validation metrics, simulated start time
//! and cost) and produces a versioned immutable artifact; the predictor
//! subscribes to activations and swaps artifacts atomically between
//! predictions. The two reference families are deliberately simple — an SGD
//! softmax classifier and Gaussian naive Bayes — because production
//! deployments are expected to plug their own pipeline behind `train`.

pub mod gnb;
pub mod search;
pub mod sgd;

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::joiner::{JoinedExample, Label};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("not ready: {0}")]
    NotReady(String),
    #[error("data error: non-finite features at rows {0:?}")]
    NonFiniteFeatures(Vec<usize>),
    #[error("data error: {0}")]
    Data(String),
    #[error("dimension mismatch: model expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown model version {0}")]
    UnknownVersion(u64),
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    SgdLinearClassifier,
    GaussianNaiveBayes,
}

/// Named hyperparameter values. BTreeMap keeps serialization canonical.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Hyperparams(pub BTreeMap<String, f64>);

impl Hyperparams {
    pub fn get_or(&self, name: &str, default: f64) -> f64 {
        self.0.get(name).copied().unwrap_or(default)
    }

    pub fn set(mut self, name: &str, value: f64) -> Self {
        self.0.insert(name.to_string(), value);
        self
    }
}

/// One searchable hyperparameter range.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HpRange {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    /// Sample uniformly in log10 space.
    #[serde(default)]
    pub log_scale: bool,
    /// Round sampled values to integers.
    #[serde(default)]
    pub integer: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct HpSpace {
    pub ranges: Vec<HpRange>,
}

impl HpSpace {
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Hyperparams {
        let mut out = BTreeMap::new();
        for r in &self.ranges {
            let v = if r.log_scale {
                let (llo, lhi) = (r.lo.log10(), r.hi.log10());
                10f64.powf(rng.random_range(llo..=lhi))
            } else {
                rng.random_range(r.lo..=r.hi)
            };
            out.insert(r.name.clone(), if r.integer { v.round() } else { v });
        }
        Hyperparams(out)
    }

    /// True when every named value sits inside its declared range.
    pub fn contains(&self, hp: &Hyperparams) -> bool {
        self.ranges.iter().all(|r| {
            hp.0.get(&r.name)
                .is_none_or(|&v| v >= r.lo && v <= r.hi)
        })
    }
}

/// Family-specific numeric state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family_state", rename_all = "snake_case")]
pub enum ModelParameters {
    SgdLinear {
        /// One weight row per class, `classes[i]` order.
        classes: Vec<u32>,
        weights: Vec<Vec<f64>>,
        bias: Vec<f64>,
    },
    GaussianNb {
        classes: Vec<u32>,
        priors: Vec<f64>,
        means: Vec<Vec<f64>>,
        variances: Vec<Vec<f64>>,
    },
}

impl ModelParameters {
    pub fn input_dim(&self) -> usize {
        match self {
            ModelParameters::SgdLinear { weights, .. } => weights.first().map_or(0, Vec::len),
            ModelParameters::GaussianNb { means, .. } => means.first().map_or(0, Vec::len),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationMetrics {
    pub accuracy: f64,
    pub log_loss: f64,
    pub holdout_size: usize,
}

/// Where the training data came from, for provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainedOn {
    /// Validation-reservoir snapshot recorded alongside the training run.
    pub reservoir_snapshot: Option<u64>,
    pub window_start_ts: i64,
    pub window_end_ts: i64,
    pub examples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub version: u64,
    pub family: ModelFamily,
    pub parameters: ModelParameters,
    pub hyperparams: Hyperparams,
    pub trained_on: TrainedOn,
    pub metrics: ValidationMetrics,
    /// Simulated event time at which training started.
    pub created_at: i64,
    /// Simulated training cost: one unit per example.
    pub train_duration: u64,
}

/// Training metadata written to the training store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub version: u64,
    pub family: ModelFamily,
    pub hyperparams: Hyperparams,
    pub metrics: ValidationMetrics,
    pub trained_on: TrainedOn,
    pub started_at: i64,
    pub duration: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub value: Label,
    /// Max class probability.
    pub confidence: f64,
    pub model_version: u64,
    pub timestamp: i64,
}

/// Deterministic fit of a family on time-ordered examples: the trailing 20%
/// is held out for metrics and never touches the optimizer.
pub fn fit(
    family: ModelFamily,
    data: &[JoinedExample],
    hp: &Hyperparams,
    seed: u64,
) -> Result<(ModelParameters, ValidationMetrics)> {
    validate_data(data)?;
    let holdout_len = (data.len() / 5).max(1);
    let split = data.len() - holdout_len;
    if split == 0 {
        return Err(ModelError::NotReady("no rows left after holdout split".into()));
    }
    let (train, holdout) = data.split_at(split);
    debug_assert!(train.len() + holdout.len() == data.len());
    let params = match family {
        ModelFamily::SgdLinearClassifier => sgd::fit(train, hp, seed)?,
        ModelFamily::GaussianNaiveBayes => gnb::fit(train, hp)?,
    };
    let metrics = evaluate(&params, holdout)?;
    Ok((params, metrics))
}

/// Accuracy and log-loss of a parameter set on labeled examples.
pub fn evaluate(params: &ModelParameters, rows: &[JoinedExample]) -> Result<ValidationMetrics> {
    if rows.is_empty() {
        return Err(ModelError::NotReady("empty evaluation set".into()));
    }
    let mut correct = 0usize;
    let mut log_loss = 0.0;
    for row in rows {
        let truth = row
            .label
            .as_class()
            .ok_or_else(|| ModelError::Data("classifier families need class labels".into()))?;
        let probs = class_probabilities(params, &row.features)?;
        let (best_class, best_p) = probs
            .iter()
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .copied()
            .unwrap();
        if best_class == truth && best_p > 0.0 {
            correct += 1;
        }
        let p_true = probs
            .iter()
            .find(|(c, _)| *c == truth)
            .map_or(1e-15, |(_, p)| p.max(1e-15));
        log_loss -= p_true.ln();
    }
    Ok(ValidationMetrics {
        accuracy: correct as f64 / rows.len() as f64,
        log_loss: log_loss / rows.len() as f64,
        holdout_size: rows.len(),
    })
}

/// `(class, probability)` pairs for a feature vector.
pub fn class_probabilities(params: &ModelParameters, features: &[f64]) -> Result<Vec<(u32, f64)>> {
    let expected = params.input_dim();
    if features.len() != expected {
        return Err(ModelError::DimensionMismatch { expected, got: features.len() });
    }
    Ok(match params {
        ModelParameters::SgdLinear { classes, weights, bias } => {
            sgd::probabilities(classes, weights, bias, features)
        }
        ModelParameters::GaussianNb { classes, priors, means, variances } => {
            gnb::probabilities(classes, priors, means, variances, features)
        }
    })
}

/// Pure prediction from an artifact.
pub fn predict(model: &ModelArtifact, features: &[f64], now: i64) -> Result<Prediction> {
    let probs = class_probabilities(&model.parameters, features)?;
    let (class, confidence) = probs
        .into_iter()
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .expect("families always expose at least one class");
    Ok(Prediction {
        value: Label::Class(class),
        confidence,
        model_version: model.version,
        timestamp: now,
    })
}

fn validate_data(data: &[JoinedExample]) -> Result<()> {
    let mut bad_rows = Vec::new();
    let dim = data.first().map_or(0, |r| r.features.len());
    for (i, row) in data.iter().enumerate() {
        if row.features.len() != dim {
            return Err(ModelError::Data(format!(
                "row {i} has dimension {} but the batch started with {dim}",
                row.features.len()
            )));
        }
        if row.features.iter().any(|v| !v.is_finite()) {
            bad_rows.push(i);
        }
    }
    if !bad_rows.is_empty() {
        bad_rows.truncate(16);
        return Err(ModelError::NonFiniteFeatures(bad_rows));
    }
    Ok(())
}

/// Version-allocating trainer wrapper. Versions are consumed only by
/// successful training runs.
#[derive(Debug)]
pub struct Trainer {
    pub family: ModelFamily,
    pub min_examples: usize,
    next_version: u64,
}

impl Trainer {
    pub fn new(family: ModelFamily, min_examples: usize) -> Self {
        Self { family, min_examples, next_version: 1 }
    }

    pub fn train(
        &mut self,
        data: &[JoinedExample],
        hp: &Hyperparams,
        seed: u64,
        now: i64,
        reservoir_snapshot: Option<u64>,
    ) -> Result<(ModelArtifact, TrainingRecord)> {
        if data.len() < self.min_examples {
            return Err(ModelError::NotReady(format!(
                "{} examples below the minimum {}",
                data.len(),
                self.min_examples
            )));
        }
        let (parameters, metrics) = fit(self.family, data, hp, seed)?;
        let version = self.next_version;
        self.next_version += 1;
        let trained_on = TrainedOn {
            reservoir_snapshot,
            window_start_ts: data.first().map_or(now, |r| r.primary_ts),
            window_end_ts: data.last().map_or(now, |r| r.primary_ts),
            examples: data.len(),
        };
        let duration = data.len() as u64;
        let artifact = ModelArtifact {
            version,
            family: self.family,
            parameters,
            hyperparams: hp.clone(),
            trained_on,
            metrics,
            created_at: now,
            train_duration: duration,
        };
        let record = TrainingRecord {
            version,
            family: self.family,
            hyperparams: hp.clone(),
            metrics,
            trained_on,
            started_at: now,
            duration,
            seed,
        };
        Ok((artifact, record))
    }

    pub fn next_version(&self) -> u64 {
        self.next_version
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Activated,
    AlreadyActive,
}

/// Atomic holder of the active model. Predictions see either the old or the
/// new artifact, never a mix.
#[derive(Debug, Default)]
pub struct Predictor {
    active: RwLock<Option<Arc<ModelArtifact>>>,
}

impl Predictor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn activate(&self, artifact: Arc<ModelArtifact>) -> Activation {
        let mut slot = self.active.write().unwrap();
        if slot.as_ref().is_some_and(|a| a.version == artifact.version) {
            return Activation::AlreadyActive;
        }
        *slot = Some(artifact);
        Activation::Activated
    }

    pub fn active(&self) -> Option<Arc<ModelArtifact>> {
        self.active.read().unwrap().clone()
    }

    pub fn active_version(&self) -> Option<u64> {
        self.active.read().unwrap().as_ref().map(|a| a.version)
    }

    pub fn predict(&self, features: &[f64], now: i64) -> Result<Option<Prediction>> {
        let model = self.active();
        match model {
            Some(m) => predict(&m, features, now).map(Some),
            None => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    pub(crate) fn blob_data(
        rng: &mut ChaCha20Rng,
        n: usize,
        separation: f64,
    ) -> Vec<JoinedExample> {
        (0..n)
            .map(|i| {
                let class = (rng.random::<f64>() < 0.5) as u32;
                let center = if class == 0 { -separation / 2.0 } else { separation / 2.0 };
                let gauss = |rng: &mut ChaCha20Rng| {
                    let u1: f64 = rng.random::<f64>().max(1e-12);
                    let u2: f64 = rng.random();
                    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
                };
                JoinedExample {
                    key: format!("e{i}"),
                    features: vec![center + gauss(rng), gauss(rng)],
                    label: Label::Class(class),
                    weak: false,
                    primary_ts: i as i64 * 10,
                    feedback_ts: i as i64 * 10 + 5,
                    join_latency: 5,
                }
            })
            .collect()
    }

    #[test]
    fn separable_blobs_reach_holdout_accuracy() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let data = blob_data(&mut rng, 500, 6.0);
        for family in [ModelFamily::SgdLinearClassifier, ModelFamily::GaussianNaiveBayes] {
            let (_, metrics) = fit(family, &data, &Hyperparams::default(), 7).unwrap();
            assert!(
                metrics.accuracy >= 0.95,
                "{family:?} holdout accuracy {}",
                metrics.accuracy
            );
        }
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let data = blob_data(&mut rng, 300, 3.0);
        for family in [ModelFamily::SgdLinearClassifier, ModelFamily::GaussianNaiveBayes] {
            let (p1, _) = fit(family, &data, &Hyperparams::default(), 42).unwrap();
            let (p2, _) = fit(family, &data, &Hyperparams::default(), 42).unwrap();
            assert_eq!(
                serde_json::to_vec(&p1).unwrap(),
                serde_json::to_vec(&p2).unwrap(),
                "{family:?} parameters must be byte-identical"
            );
            let (p3, _) = fit(family, &data, &Hyperparams::default(), 43).unwrap();
            if family == ModelFamily::SgdLinearClassifier {
                assert_ne!(serde_json::to_vec(&p1).unwrap(), serde_json::to_vec(&p3).unwrap());
            }
        }
    }

    #[test]
    fn trainer_rejects_small_batches_without_consuming_versions() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let data = blob_data(&mut rng, 10, 3.0);
        let mut trainer = Trainer::new(ModelFamily::SgdLinearClassifier, 100);
        assert!(matches!(
            trainer.train(&data, &Hyperparams::default(), 1, 0, None),
            Err(ModelError::NotReady(_))
        ));
        assert_eq!(trainer.next_version(), 1);
        let data = blob_data(&mut rng, 200, 3.0);
        let (artifact, record) = trainer.train(&data, &Hyperparams::default(), 1, 0, None).unwrap();
        assert_eq!(artifact.version, 1);
        assert_eq!(record.version, 1);
        assert_eq!(trainer.next_version(), 2);
    }

    #[test]
    fn non_finite_features_list_offending_rows() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let mut data = blob_data(&mut rng, 50, 3.0);
        data[7].features[0] = f64::NAN;
        data[31].features[1] = f64::INFINITY;
        match fit(ModelFamily::GaussianNaiveBayes, &data, &Hyperparams::default(), 0) {
            Err(ModelError::NonFiniteFeatures(rows)) => assert_eq!(rows, vec![7, 31]),
            other => panic!("expected NonFiniteFeatures, got {other:?}"),
        }
    }

    #[test]
    fn prediction_carries_active_version_and_confidence() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let data = blob_data(&mut rng, 300, 5.0);
        let mut trainer = Trainer::new(ModelFamily::SgdLinearClassifier, 50);
        let (artifact, _) = trainer.train(&data, &Hyperparams::default(), 1, 0, None).unwrap();
        let predictor = Predictor::new();
        assert!(predictor.predict(&[0.0, 0.0], 0).unwrap().is_none());
        assert_eq!(predictor.activate(Arc::new(artifact.clone())), Activation::Activated);
        assert_eq!(
            predictor.activate(Arc::new(artifact)),
            Activation::AlreadyActive
        );
        let p = predictor.predict(&[3.0, 0.0], 99).unwrap().unwrap();
        assert_eq!(p.model_version, 1);
        assert_eq!(p.value, Label::Class(1));
        assert!(p.confidence > 0.5 && p.confidence <= 1.0);
        assert_eq!(p.timestamp, 99);
        assert!(matches!(
            predictor.predict(&[1.0], 0),
            Err(ModelError::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn activation_is_atomic_under_concurrency() {
        use std::sync::atomic::{AtomicBool, Ordering};
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let data = blob_data(&mut rng, 300, 5.0);
        let mut trainer = Trainer::new(ModelFamily::SgdLinearClassifier, 50);
        let (v1, _) = trainer.train(&data, &Hyperparams::default(), 1, 0, None).unwrap();
        let (v2, _) = trainer
            .train(&data, &Hyperparams::default().set("learning_rate", 0.5), 2, 0, None)
            .unwrap();
        let m1 = Arc::new(v1);
        let m2 = Arc::new(v2);

        let predictor = Arc::new(Predictor::new());
        predictor.activate(m1.clone());
        let stop = Arc::new(AtomicBool::new(false));

        // Pure per-version oracles computed outside the race.
        let probe = vec![0.7, -0.3];
        let expect1 = predict(&m1, &probe, 0).unwrap();
        let expect2 = predict(&m2, &probe, 0).unwrap();

        // Swapper churns until the reader has sampled enough predictions.
        let swapper = {
            let predictor = predictor.clone();
            let stop = stop.clone();
            let (m1, m2) = (m1.clone(), m2.clone());
            std::thread::spawn(move || {
                while !stop.load(Ordering::Relaxed) {
                    predictor.activate(m2.clone());
                    predictor.activate(m1.clone());
                }
            })
        };
        let mut seen = Vec::with_capacity(2000);
        while seen.len() < 2000 {
            if let Some(p) = predictor.predict(&probe, 0).unwrap() {
                seen.push(p);
            }
        }
        stop.store(true, Ordering::Relaxed);
        swapper.join().unwrap();
        for p in seen {
            let expected = if p.model_version == 1 { &expect1 } else { &expect2 };
            assert_eq!(p.value, expected.value, "mixed-parameter prediction observed");
            assert_eq!(p.confidence, expected.confidence);
        }
    }

    #[test]
    fn gaussian_nb_confidence_is_half_at_the_midpoint() {
        let params = ModelParameters::GaussianNb {
            classes: vec![0, 1],
            priors: vec![0.5, 0.5],
            means: vec![vec![-1.0], vec![1.0]],
            variances: vec![vec![1.0], vec![1.0]],
        };
        let probs = class_probabilities(&params, &[0.0]).unwrap();
        assert!((probs[0].1 - 0.5).abs() < 1e-12);
        assert!((probs[1].1 - 0.5).abs() < 1e-12);
    }
}

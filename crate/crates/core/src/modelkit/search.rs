//! Warm-started hyperparameter search.
//!
//! Seeded random search over the declared ranges. The best prior
//! configuration from the training history is always candidate 1, so a
//! budget of one returns the warm start unchanged. Candidates are compared
//! on the same fixed inner holdout (the trailing split inside `fit`);
//! earlier candidates win ties.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::joiner::JoinedExample;

use super::{fit, HpSpace, Hyperparams, ModelError, ModelFamily, Result, TrainingRecord};

pub fn warm_start_search(
    history: &[TrainingRecord],
    space: &HpSpace,
    budget: usize,
    seed: u64,
    family: ModelFamily,
    data: &[JoinedExample],
) -> Result<Hyperparams> {
    if budget == 0 {
        return Err(ModelError::Config("search budget must be >= 1".into()));
    }
    if space.ranges.is_empty() {
        return Err(ModelError::Config("empty hyperparameter space".into()));
    }

    let mut candidates = Vec::with_capacity(budget);
    let warm = history
        .iter()
        .filter(|r| r.family == family)
        .max_by(|a, b| {
            a.metrics
                .accuracy
                .partial_cmp(&b.metrics.accuracy)
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .map(|r| r.hyperparams.clone());
    if let Some(hp) = warm {
        candidates.push(hp);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    while candidates.len() < budget {
        candidates.push(space.sample(&mut rng));
    }
    candidates.truncate(budget);

    let mut best: Option<(f64, Hyperparams)> = None;
    for hp in candidates {
        let score = match fit(family, data, &hp, seed) {
            Ok((_, metrics)) => metrics.accuracy,
            Err(_) => continue,
        };
        // Strictly-better comparison keeps the earliest candidate on ties,
        // which is what makes budget=1 return the warm start.
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, hp));
        }
    }
    best.map(|(_, hp)| hp)
        .ok_or_else(|| ModelError::NotReady("no candidate trained successfully".into()))
}

#[cfg(test)]
mod tests {
    use super::super::tests::blob_data;
    use super::super::{TrainedOn, ValidationMetrics};
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn space() -> HpSpace {
        HpSpace {
            ranges: vec![
                HpRange { name: "learning_rate".into(), lo: 0.001, hi: 1.0, log_scale: true, integer: false },
                HpRange { name: "epochs".into(), lo: 1.0, hi: 10.0, log_scale: false, integer: true },
            ],
        }
    }

    use super::super::HpRange;

    fn record(accuracy: f64, hp: Hyperparams) -> TrainingRecord {
        TrainingRecord {
            version: 1,
            family: ModelFamily::SgdLinearClassifier,
            hyperparams: hp,
            metrics: ValidationMetrics { accuracy, log_loss: 0.1, holdout_size: 10 },
            trained_on: TrainedOn {
                reservoir_snapshot: None,
                window_start_ts: 0,
                window_end_ts: 0,
                examples: 0,
            },
            started_at: 0,
            duration: 0,
            seed: 0,
        }
    }

    #[test]
    fn budget_one_returns_best_prior() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let data = blob_data(&mut rng, 200, 4.0);
        let good = Hyperparams::default().set("learning_rate", 0.2);
        let bad = Hyperparams::default().set("learning_rate", 0.0001);
        let history = vec![record(0.60, bad), record(0.95, good.clone())];
        let hp = warm_start_search(
            &history,
            &space(),
            1,
            9,
            ModelFamily::SgdLinearClassifier,
            &data,
        )
        .unwrap();
        assert_eq!(hp, good);
    }

    #[test]
    fn empty_history_draws_are_deterministic_per_seed() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let data = blob_data(&mut rng, 200, 4.0);
        let a = warm_start_search(&[], &space(), 4, 7, ModelFamily::SgdLinearClassifier, &data)
            .unwrap();
        let b = warm_start_search(&[], &space(), 4, 7, ModelFamily::SgdLinearClassifier, &data)
            .unwrap();
        assert_eq!(a, b);
        let c = warm_start_search(&[], &space(), 4, 8, ModelFamily::SgdLinearClassifier, &data)
            .unwrap();
        // Different seed explores a different candidate set (values differ
        // with overwhelming probability).
        assert_ne!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&c).unwrap());
    }

    #[test]
    fn search_beats_or_matches_a_poor_default() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut wins = 0;
        for seed in 0..10u64 {
            let data = blob_data(&mut rng, 400, 2.5);
            let default_hp = Hyperparams::default().set("learning_rate", 0.0005);
            let (_, default_metrics) =
                fit(ModelFamily::SgdLinearClassifier, &data, &default_hp, seed).unwrap();
            let hp = warm_start_search(
                &[],
                &space(),
                16,
                seed,
                ModelFamily::SgdLinearClassifier,
                &data,
            )
            .unwrap();
            let (_, searched) = fit(ModelFamily::SgdLinearClassifier, &data, &hp, seed).unwrap();
            if searched.accuracy >= default_metrics.accuracy {
                wins += 1;
            }
        }
        assert!(wins >= 9, "search matched the default only {wins}/10 times");
    }

    #[test]
    fn rejects_empty_space_and_zero_budget() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let data = blob_data(&mut rng, 100, 4.0);
        assert!(matches!(
            warm_start_search(&[], &HpSpace::default(), 4, 0, ModelFamily::SgdLinearClassifier, &data),
            Err(ModelError::Config(_))
        ));
        assert!(matches!(
            warm_start_search(&[], &space(), 0, 0, ModelFamily::SgdLinearClassifier, &data),
            Err(ModelError::Config(_))
        ));
    }
}

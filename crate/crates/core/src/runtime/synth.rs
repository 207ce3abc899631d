//! Synthetic stream generation and drift injection.
//!
//! The generator produces Gaussian class-conditional mixtures as interleaved
//! primary/feedback records (feedback for primary i arrives `label_delay`
//! slots later). Injection is a pure function of (stream, specs, seed):
//! magnitudes are expressed in units of the stream's own per-dimension
//! standard deviation, so the same spec works on generated and recorded
//! streams alike.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::collections::HashMap;

use crate::hash::stream_seed;
use crate::joiner::{EventRecord, Features, Label};

use super::config::{DriftKind, GeneratorConfig, InjectionSpec};
use super::RunError;

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Class centers: evenly spaced on a circle in the first two dimensions
/// (a line when dims == 1), `class_sep` apart for the two-class case.
pub fn class_center(class: usize, classes: usize, dims: usize, class_sep: f64) -> Vec<f64> {
    let mut center = vec![0.0; dims];
    if classes == 2 {
        center[0] = if class == 0 { -class_sep / 2.0 } else { class_sep / 2.0 };
    } else {
        let angle = 2.0 * std::f64::consts::PI * class as f64 / classes as f64;
        center[0] = class_sep / 2.0 * angle.cos();
        if dims > 1 {
            center[1] = class_sep / 2.0 * angle.sin();
        }
    }
    center
}

/// Generate the interleaved event stream: primary `e<i>` at slot i and its
/// feedback `label_delay` slots later. Timestamps are slot * ms_per_event.
pub fn generate(config: &GeneratorConfig, seed: u64, ms_per_event: i64) -> Vec<EventRecord> {
    let mut rng = ChaCha20Rng::seed_from_u64(stream_seed(seed, "generator"));
    let priors: Vec<f64> = if config.priors.is_empty() {
        vec![1.0 / config.classes as f64; config.classes]
    } else {
        config.priors.clone()
    };
    let cumulative: Vec<f64> = priors
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();

    let mut stream = Vec::with_capacity(config.events * 2);
    let mut pending: HashMap<usize, EventRecord> = HashMap::new();
    let total_slots = config.events + config.label_delay + 1;
    for slot in 0..total_slots {
        if slot < config.events {
            let u: f64 = rng.random();
            let class = cumulative.partition_point(|&c| c < u).min(config.classes - 1);
            let center = class_center(class, config.classes, config.dims, config.class_sep);
            let features: Vec<f64> = center
                .iter()
                .map(|&mu| mu + standard_normal(&mut rng))
                .collect();
            let ts = slot as i64 * ms_per_event;
            stream.push(EventRecord {
                key: format!("e{slot}"),
                ts,
                features: Some(Features::Vector(features)),
                label: None,
                weak: false,
                source: None,
            });
            let feedback_slot = slot + config.label_delay;
            pending.insert(
                feedback_slot,
                EventRecord {
                    key: format!("e{slot}"),
                    ts: feedback_slot as i64 * ms_per_event,
                    features: None,
                    label: Some(Label::Class(class as u32)),
                    weak: false,
                    source: None,
                },
            );
        }
        if let Some(feedback) = pending.remove(&slot) {
            stream.push(feedback);
        }
    }
    stream
}

/// Per-dimension mean and standard deviation over the primary records.
fn feature_moments(stream: &[EventRecord]) -> (Vec<f64>, Vec<f64>) {
    let mut n = 0.0;
    let mut sums: Vec<f64> = Vec::new();
    let mut sqs: Vec<f64> = Vec::new();
    for record in stream {
        if let Some(f) = &record.features {
            let v = f.clone().into_vector();
            if sums.is_empty() {
                sums = vec![0.0; v.len()];
                sqs = vec![0.0; v.len()];
            }
            n += 1.0;
            for (i, x) in v.iter().enumerate() {
                sums[i] += x;
                sqs[i] += x * x;
            }
        }
    }
    if n == 0.0 {
        return (Vec::new(), Vec::new());
    }
    let means: Vec<f64> = sums.iter().map(|s| s / n).collect();
    let stds: Vec<f64> = sqs
        .iter()
        .zip(&means)
        .map(|(sq, m)| (sq / n - m * m).max(0.0).sqrt().max(1e-12))
        .collect();
    (means, stds)
}

/// Apply injections to a stream. Pure in (stream, specs, seed): injections
/// compose in list order, each a deterministic function of the primary
/// index.
pub fn inject(
    stream: &[EventRecord],
    specs: &[InjectionSpec],
    seed: u64,
) -> Result<Vec<EventRecord>, RunError> {
    let primary_count = stream.iter().filter(|r| r.features.is_some()).count();
    for (i, spec) in specs.iter().enumerate() {
        if spec.start >= primary_count {
            return Err(RunError::Config(format!(
                "injections[{i}].start: {} beyond stream primaries {primary_count}",
                spec.start
            )));
        }
    }
    let (means, stds) = feature_moments(stream);
    let mut out = stream.to_vec();

    for (spec_idx, spec) in specs.iter().enumerate() {
        let mut rng = ChaCha20Rng::seed_from_u64(stream_seed(
            seed ^ (spec_idx as u64).rotate_left(32),
            "inject",
        ));
        match spec.kind {
            DriftKind::CovariateMeanShift
            | DriftKind::GradualLinear
            | DriftKind::AnomalyBurst
            | DriftKind::AbruptChangepoint => {
                apply_feature_injection(&mut out, spec, &means, &stds);
            }
            DriftKind::PriorRebalance => {
                apply_prior_rebalance(&mut out, spec, &mut rng);
            }
        }
    }
    Ok(out)
}

fn affected_dims(spec: &InjectionSpec, dims: usize) -> Vec<usize> {
    if spec.dims.is_empty() {
        vec![0]
    } else {
        spec.dims.iter().copied().filter(|&d| d < dims).collect()
    }
}

fn apply_feature_injection(
    stream: &mut [EventRecord],
    spec: &InjectionSpec,
    means: &[f64],
    stds: &[f64],
) {
    let mut primary_idx = 0usize;
    for record in stream.iter_mut() {
        let Some(features) = &mut record.features else { continue };
        let idx = primary_idx;
        primary_idx += 1;

        let active = match spec.kind {
            // Permanent from the start index.
            DriftKind::CovariateMeanShift | DriftKind::AbruptChangepoint => idx >= spec.start,
            // Ramp over the span, then hold.
            DriftKind::GradualLinear => idx >= spec.start,
            // Transient: out-of-band inside the span only.
            DriftKind::AnomalyBurst => idx >= spec.start && idx < spec.start + spec.duration,
            DriftKind::PriorRebalance => false,
        };
        if !active {
            continue;
        }
        let ramp = if spec.kind == DriftKind::GradualLinear {
            ((idx - spec.start) as f64 / spec.duration as f64).min(1.0)
        } else {
            1.0
        };
        let mut v = features.clone().into_vector();
        for &d in &affected_dims(spec, v.len()) {
            match spec.kind {
                DriftKind::CovariateMeanShift | DriftKind::GradualLinear | DriftKind::AnomalyBurst => {
                    v[d] += ramp * spec.magnitude * stds[d];
                }
                DriftKind::AbruptChangepoint => {
                    // Joint mean and scale break.
                    v[d] = means[d]
                        + (v[d] - means[d]) * (1.0 + spec.magnitude)
                        + spec.magnitude * stds[d];
                }
                DriftKind::PriorRebalance => {}
            }
        }
        *features = Features::Vector(v);
    }
}

/// Resample labels to the target proportions while keeping p(x|y) fixed:
/// when an event's label flips, its features are replaced by a reservoir
/// draw from the target class's original conditionals.
fn apply_prior_rebalance(
    stream: &mut Vec<EventRecord>,
    spec: &InjectionSpec,
    rng: &mut ChaCha20Rng,
) {
    const POOL: usize = 512;
    let mut pools: HashMap<u32, Vec<Vec<f64>>> = HashMap::new();
    let mut pool_seen: HashMap<u32, u64> = HashMap::new();
    let mut relabeled: HashMap<String, Label> = HashMap::new();
    let mut primary_idx = 0usize;

    // Original labels by key (feedback may trail its primary).
    let labels: HashMap<String, u32> = stream
        .iter()
        .filter_map(|r| match (&r.features, &r.label) {
            (None, Some(Label::Class(c))) => Some((r.key.clone(), *c)),
            _ => None,
        })
        .collect();

    for record in stream.iter_mut() {
        let Some(features) = &record.features else { continue };
        let idx = primary_idx;
        primary_idx += 1;
        let Some(&original) = labels.get(&record.key) else { continue };

        // Keep the class-conditional pools fed with original rows.
        let pool = pools.entry(original).or_default();
        let seen = pool_seen.entry(original).or_insert(0);
        *seen += 1;
        let row = features.clone().into_vector();
        if pool.len() < POOL {
            pool.push(row);
        } else {
            let j = rng.random_range(0..*seen);
            if (j as usize) < POOL {
                pool[j as usize] = row;
            }
        }

        let active = idx >= spec.start
            && (spec.duration == 0 || idx < spec.start + spec.duration);
        if !active {
            continue;
        }
        // Two-class proportions: magnitude is the class-0 target.
        let target: u32 = u32::from(rng.random::<f64>() >= spec.magnitude);
        if target != original {
            if let Some(candidates) = pools.get(&target) {
                if !candidates.is_empty() {
                    let pick = rng.random_range(0..candidates.len());
                    *record.features.as_mut().unwrap() =
                        Features::Vector(candidates[pick].clone());
                    relabeled.insert(record.key.clone(), Label::Class(target));
                }
            }
        }
    }

    // Rewrite the trailing feedback records to match.
    for record in stream.iter_mut() {
        if record.features.is_none() {
            if let Some(new_label) = relabeled.get(&record.key) {
                record.label = Some(*new_label);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn generator() -> GeneratorConfig {
        GeneratorConfig { events: 2000, label_delay: 25, ..Default::default() }
    }

    #[test]
    fn generator_is_deterministic_and_interleaved() {
        let a = generate(&generator(), 5, 10);
        let b = generate(&generator(), 5, 10);
        assert_eq!(a, b);
        let c = generate(&generator(), 6, 10);
        assert_ne!(a, c);

        let primaries = a.iter().filter(|r| r.features.is_some()).count();
        let feedbacks = a.iter().filter(|r| r.label.is_some()).count();
        assert_eq!(primaries, 2000);
        assert_eq!(feedbacks, 2000);
        // Timestamps never decrease along the stream.
        assert!(a.windows(2).all(|w| w[0].ts <= w[1].ts));
    }

    #[test]
    fn magnitude_zero_changes_nothing() {
        let stream = generate(&generator(), 1, 10);
        let specs = vec![InjectionSpec {
            kind: DriftKind::CovariateMeanShift,
            start: 100,
            duration: 0,
            magnitude: 0.0,
            dims: vec![0],
        }];
        let out = inject(&stream, &specs, 1).unwrap();
        assert_eq!(out, stream);
    }

    #[test]
    fn covariate_shift_moves_the_mean() {
        let stream = generate(&generator(), 2, 10);
        let specs = vec![InjectionSpec {
            kind: DriftKind::CovariateMeanShift,
            start: 1000,
            duration: 0,
            magnitude: 2.0,
            dims: vec![0],
        }];
        let out = inject(&stream, &specs, 2).unwrap();
        let dim0 = |records: &[EventRecord], lo: usize, hi: usize| -> f64 {
            let vals: Vec<f64> = records
                .iter()
                .filter(|r| r.features.is_some())
                .skip(lo)
                .take(hi - lo)
                .map(|r| r.features.clone().unwrap().into_vector()[0])
                .collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        let before = dim0(&out, 0, 1000);
        let after = dim0(&out, 1000, 2000);
        // Generator std on dim 0 is ~sqrt(1 + sep^2/4) ~ 1.8 at sep 3.
        assert!(after - before > 2.5, "shift {before} -> {after}");
    }

    #[test]
    fn prior_rebalance_hits_target_proportions() {
        let mut cfg = generator();
        cfg.events = 10_000;
        let stream = generate(&cfg, 3, 10);
        let specs = vec![InjectionSpec {
            kind: DriftKind::PriorRebalance,
            start: 0,
            duration: 0,
            magnitude: 0.9,
            dims: vec![],
        }];
        let out = inject(&stream, &specs, 3).unwrap();
        let labels: Vec<u32> = out
            .iter()
            .filter_map(|r| match r.label {
                Some(Label::Class(c)) if r.features.is_none() => Some(c),
                _ => None,
            })
            .collect();
        let p0 = labels.iter().filter(|&&c| c == 0).count() as f64 / labels.len() as f64;
        assert!((p0 - 0.9).abs() <= 0.02, "class-0 proportion {p0}");
        // p(x|y) preserved: class-0 rows still center near the class-0 mean.
        let mut primary_idx = 0;
        let final_labels: HashMap<String, u32> = out
            .iter()
            .filter_map(|r| match (&r.features, &r.label) {
                (None, Some(Label::Class(c))) => Some((r.key.clone(), *c)),
                _ => None,
            })
            .collect();
        let mut class0_mean = 0.0;
        let mut n0 = 0.0;
        for r in &out {
            if let Some(f) = &r.features {
                primary_idx += 1;
                if primary_idx > 1000 {
                    if let Some(0) = final_labels.get(&r.key) {
                        class0_mean += f.clone().into_vector()[0];
                        n0 += 1.0;
                    }
                }
            }
        }
        class0_mean /= n0;
        assert!((class0_mean + 1.5).abs() < 0.2, "class-0 conditional mean {class0_mean}");
    }

    #[test]
    fn anomaly_burst_reverts() {
        let stream = generate(&generator(), 4, 10);
        let specs = vec![InjectionSpec {
            kind: DriftKind::AnomalyBurst,
            start: 500,
            duration: 50,
            magnitude: 10.0,
            dims: vec![0],
        }];
        let out = inject(&stream, &specs, 4).unwrap();
        let primaries: Vec<Vec<f64>> = out
            .iter()
            .filter(|r| r.features.is_some())
            .map(|r| r.features.clone().unwrap().into_vector())
            .collect();
        assert!(primaries[520][0] > 8.0, "inside burst");
        assert!(primaries[560][0] < 8.0, "after burst");
        assert!(primaries[499][0] < 8.0, "before burst");
    }

    #[test]
    fn injections_compose_in_order_deterministically() {
        let stream = generate(&generator(), 5, 10);
        let specs = vec![
            InjectionSpec {
                kind: DriftKind::AbruptChangepoint,
                start: 800,
                duration: 0,
                magnitude: 0.5,
                dims: vec![0],
            },
            InjectionSpec {
                kind: DriftKind::GradualLinear,
                start: 1200,
                duration: 400,
                magnitude: 1.0,
                dims: vec![1],
            },
        ];
        let a = inject(&stream, &specs, 9).unwrap();
        let b = inject(&stream, &specs, 9).unwrap();
        assert_eq!(a, b);
        let bad = vec![InjectionSpec {
            kind: DriftKind::CovariateMeanShift,
            start: 99_999,
            duration: 0,
            magnitude: 1.0,
            dims: vec![],
        }];
        assert!(inject(&stream, &bad, 0).is_err());
    }
}

//! Damped reservoir: a fixed-capacity sample weighted toward recent points.
//!
//! With `decay_factor = 1` this is plain uniform reservoir sampling (every
//! one of n seen items kept with probability s/n). With decay, the total
//! weight seen so far shrinks every `decay_period` events, which raises the
//! inclusion probability of everything that arrives afterwards.

use rand::Rng;

use super::{Result, SketchError};

/// Renormalization threshold that keeps weights inside comfortable f64
/// range during very long undecayed runs.
const RENORM_LIMIT: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct Stored<T> {
    pub item: T,
    /// Decayed weight at which the item currently stands; diagnostic only.
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct DampedReservoir<T> {
    capacity: usize,
    items: Vec<Stored<T>>,
    decay_factor: f64,
    decay_period: u64,
    /// Weight a newly arriving item is inserted at.
    running_weight: f64,
    /// Decayed total weight observed so far.
    total_weight: f64,
    events_since_decay: u64,
    seen: u64,
}

impl<T> DampedReservoir<T> {
    pub fn new(capacity: usize, decay_factor: f64, decay_period: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(SketchError::Domain("capacity must be >= 1".into()));
        }
        if !(decay_factor > 0.0 && decay_factor <= 1.0) {
            return Err(SketchError::Domain("decay_factor must be in (0, 1]".into()));
        }
        if decay_period == 0 {
            return Err(SketchError::Domain("decay_period must be >= 1".into()));
        }
        Ok(Self {
            capacity,
            items: Vec::with_capacity(capacity),
            decay_factor,
            decay_period,
            running_weight: 1.0,
            total_weight: 0.0,
            events_since_decay: 0,
            seen: 0,
        })
    }

    /// Uniform reservoir sampling (no decay).
    pub fn uniform(capacity: usize) -> Result<Self> {
        Self::new(capacity, 1.0, u64::MAX)
    }

    /// Observe one item. The supplied RNG is the only source of randomness,
    /// so a seeded stream makes runs replayable.
    pub fn observe<R: Rng + ?Sized>(&mut self, item: T, rng: &mut R) {
        self.seen += 1;
        self.total_weight += self.running_weight;
        if self.items.len() < self.capacity {
            self.items.push(Stored { item, weight: self.running_weight });
        } else {
            let p = (self.capacity as f64) * self.running_weight / self.total_weight;
            if rng.random::<f64>() < p {
                let victim = rng.random_range(0..self.capacity);
                self.items[victim] = Stored { item, weight: self.running_weight };
            }
        }
        self.events_since_decay += 1;
        if self.events_since_decay >= self.decay_period && self.decay_factor < 1.0 {
            self.apply_decay();
        }
        if self.total_weight > RENORM_LIMIT || self.running_weight > RENORM_LIMIT {
            self.renormalize();
        }
    }

    fn apply_decay(&mut self) {
        self.events_since_decay = 0;
        // Shrinking everything already seen is what privileges new arrivals.
        self.total_weight *= self.decay_factor;
        for stored in &mut self.items {
            stored.weight *= self.decay_factor;
        }
    }

    fn renormalize(&mut self) {
        // Scaling the insertion weight and the total together leaves every
        // inclusion probability unchanged.
        let scale = 1.0 / self.total_weight;
        self.running_weight *= scale;
        self.total_weight = 1.0;
        for stored in &mut self.items {
            stored.weight *= scale;
        }
    }

    pub fn items(&self) -> impl Iterator<Item = &T> {
        self.items.iter().map(|s| &s.item)
    }

    pub fn stored(&self) -> &[Stored<T>] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }

    pub fn decay_factor(&self) -> f64 {
        self.decay_factor
    }

    pub fn decay_period(&self) -> u64 {
        self.decay_period
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn under_capacity_keeps_everything() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let mut r = DampedReservoir::uniform(10).unwrap();
        for i in 0..5 {
            r.observe(i, &mut rng);
        }
        let mut kept: Vec<i32> = r.items().copied().collect();
        kept.sort_unstable();
        assert_eq!(kept, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(DampedReservoir::<u8>::new(0, 1.0, 10).is_err());
        assert!(DampedReservoir::<u8>::new(4, 0.0, 10).is_err());
        assert!(DampedReservoir::<u8>::new(4, 1.1, 10).is_err());
        assert!(DampedReservoir::<u8>::new(4, 0.5, 0).is_err());
    }

    #[test]
    fn uniform_mode_matches_reservoir_sampling_rates() {
        // Monte Carlo: inclusion rate of every position ~ s/n within 3 sigma.
        let trials = 10_000usize;
        let n = 60usize;
        let s = 6usize;
        let mut counts = vec![0u32; n];
        let mut rng = ChaCha20Rng::seed_from_u64(123);
        for _ in 0..trials {
            let mut r = DampedReservoir::uniform(s).unwrap();
            for i in 0..n {
                r.observe(i, &mut rng);
            }
            for &kept in r.items() {
                counts[kept] += 1;
            }
        }
        let expect = trials as f64 * s as f64 / n as f64;
        let sigma = (trials as f64 * (s as f64 / n as f64) * (1.0 - s as f64 / n as f64)).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            assert!(
                (f64::from(c) - expect).abs() < 5.0 * sigma,
                "position {i}: count {c} vs expected {expect}"
            );
        }
    }

    #[test]
    fn decay_prefers_recent_cohorts() {
        // Latest-period items should be included at >= 2x the rate of the
        // previous period with decay_factor 0.5.
        let trials = 10_000usize;
        let period = 100u64;
        let mut latest = 0u64;
        let mut older = 0u64;
        let mut rng = ChaCha20Rng::seed_from_u64(321);
        for _ in 0..trials {
            let mut r = DampedReservoir::new(10, 0.5, period).unwrap();
            for i in 0..300usize {
                r.observe(i, &mut rng);
            }
            for &kept in r.items() {
                if kept >= 200 {
                    latest += 1;
                } else if kept >= 100 {
                    older += 1;
                }
            }
        }
        let rate_latest = latest as f64 / (trials * 100) as f64;
        let rate_older = older as f64 / (trials * 100) as f64;
        assert!(
            rate_latest >= 2.0 * rate_older,
            "latest {rate_latest} vs older {rate_older}"
        );
    }

    #[test]
    fn renormalization_keeps_probabilities_stable() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let mut r = DampedReservoir::new(5, 0.5, 10).unwrap();
        for i in 0..100_000usize {
            r.observe(i, &mut rng);
        }
        // After heavy decay every kept item is recent.
        assert!(r.items().all(|&i| i > 90_000));
        assert_eq!(r.len(), 5);
    }
}

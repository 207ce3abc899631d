//! Space-Saving heavy hitters over a fixed budget of counters.
//!
//! Tracks at most `capacity` items. When an untracked item arrives at a full
//! summary it replaces the least-frequent counter, inheriting that count as
//! its overestimation error. Every tracked estimate is within `N/capacity`
//! of the true count, and the top-k query reports which entries are
//! guaranteed to really be in the top k.

use std::collections::{BTreeSet, HashMap};

use super::{Result, SketchError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Counter {
    /// Estimated count; never below the true count.
    pub count: u64,
    /// Overestimation error: the count inherited at admission.
    pub error: u64,
}

/// One reported heavy hitter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeavyHitter {
    pub item: Vec<u8>,
    pub count: u64,
    pub error: u64,
    /// True iff `count - error` is at least the (k+1)-th counter's count,
    /// which proves membership in the true top k.
    pub guaranteed: bool,
}

#[derive(Debug, Clone, Default)]
pub struct SpaceSavingSummary {
    capacity: usize,
    counters: HashMap<Vec<u8>, Counter>,
    // (count, item) ordering for O(log c) minimum lookups.
    by_count: BTreeSet<(u64, Vec<u8>)>,
    total: u64,
}

impl SpaceSavingSummary {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity < 1 {
            return Err(SketchError::Domain("capacity must be >= 1".into()));
        }
        Ok(Self {
            capacity,
            counters: HashMap::with_capacity(capacity),
            by_count: BTreeSet::new(),
            total: 0,
        })
    }

    pub fn insert(&mut self, item: &[u8]) {
        self.insert_count(item, 1);
    }

    pub fn insert_count(&mut self, item: &[u8], weight: u64) {
        self.total = self.total.saturating_add(weight);
        if let Some(counter) = self.counters.get_mut(item) {
            self.by_count.remove(&(counter.count, item.to_vec()));
            counter.count = counter.count.saturating_add(weight);
            self.by_count.insert((counter.count, item.to_vec()));
        } else if self.counters.len() < self.capacity {
            self.counters.insert(item.to_vec(), Counter { count: weight, error: 0 });
            self.by_count.insert((weight, item.to_vec()));
        } else {
            // Replace the least frequent tracked element.
            let (min_count, victim) = self.by_count.iter().next().cloned().unwrap();
            self.by_count.remove(&(min_count, victim.clone()));
            self.counters.remove(&victim);
            let count = min_count.saturating_add(weight);
            self.counters.insert(item.to_vec(), Counter { count, error: min_count });
            self.by_count.insert((count, item.to_vec()));
        }
    }

    /// Top-k by estimated count with per-entry exactness flags.
    pub fn heavy_hitters(&self, k: usize) -> Result<Vec<HeavyHitter>> {
        if k > self.capacity {
            return Err(SketchError::Domain(format!(
                "k {k} exceeds capacity {}",
                self.capacity
            )));
        }
        let mut ranked: Vec<(&Vec<u8>, &Counter)> = self.counters.iter().collect();
        // Descending by count; ties broken by item bytes for determinism.
        ranked.sort_by(|a, b| b.1.count.cmp(&a.1.count).then_with(|| a.0.cmp(b.0)));
        let threshold = ranked.get(k).map_or(0, |(_, c)| c.count);
        Ok(ranked
            .into_iter()
            .take(k)
            .map(|(item, c)| HeavyHitter {
                item: item.clone(),
                count: c.count,
                error: c.error,
                guaranteed: c.count - c.error >= threshold,
            })
            .collect())
    }

    pub fn estimate(&self, item: &[u8]) -> Option<Counter> {
        self.counters.get(item).copied()
    }

    /// Counter union truncated back to capacity. Items absent on one side
    /// are assumed to have appeared up to that side's minimum count, which
    /// keeps every kept estimate an overestimate; the deterministic
    /// `(Na+Nb)/capacity` error bound is preserved.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.capacity != other.capacity {
            return Err(SketchError::Incompatible("space-saving capacities differ".into()));
        }
        let floor_self = self.absent_floor();
        let floor_other = other.absent_floor();
        let mut merged: HashMap<Vec<u8>, Counter> = HashMap::new();
        for (item, c) in &self.counters {
            let (oc, oe) = match other.counters.get(item) {
                Some(o) => (o.count, o.error),
                None => (floor_other, floor_other),
            };
            merged.insert(
                item.clone(),
                Counter { count: c.count.saturating_add(oc), error: c.error.saturating_add(oe) },
            );
        }
        for (item, o) in &other.counters {
            if merged.contains_key(item) {
                continue;
            }
            merged.insert(
                item.clone(),
                Counter {
                    count: o.count.saturating_add(floor_self),
                    error: o.error.saturating_add(floor_self),
                },
            );
        }
        let mut ranked: Vec<(Vec<u8>, Counter)> = merged.into_iter().collect();
        ranked.sort_by(|a, b| b.1.count.cmp(&a.1.count).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(self.capacity);
        self.counters = ranked.iter().cloned().collect();
        self.by_count = ranked.into_iter().map(|(item, c)| (c.count, item)).collect();
        self.total = self.total.saturating_add(other.total);
        Ok(())
    }

    fn absent_floor(&self) -> u64 {
        if self.counters.len() < self.capacity {
            0
        } else {
            self.by_count.iter().next().map_or(0, |(c, _)| *c)
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.counters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counters.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Counters in deterministic (descending count, then item) order.
    pub fn counters_sorted(&self) -> Vec<(Vec<u8>, Counter)> {
        let mut out: Vec<(Vec<u8>, Counter)> = self
            .counters
            .iter()
            .map(|(k, v)| (k.clone(), *v))
            .collect();
        out.sort_by(|a, b| b.1.count.cmp(&a.1.count).then_with(|| a.0.cmp(&b.0)));
        out
    }

    pub(crate) fn from_parts(capacity: usize, entries: Vec<(Vec<u8>, Counter)>, total: u64) -> Self {
        let by_count = entries.iter().map(|(item, c)| (c.count, item.clone())).collect();
        Self {
            capacity,
            counters: entries.into_iter().collect(),
            by_count,
            total,
        }
    }
}

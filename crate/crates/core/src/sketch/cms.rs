//! Count-min sketch: point, range, and inner-product frequency queries.
//!
//! Estimates never undercount. For width `w` and depth `d`, a point estimate
//! exceeds the true count by more than `(e/w)·N` with probability at most
//! `e^{-d}`. Range queries run on a dyadic array of sketches, one level per
//! power-of-two granularity of the key universe.

use crate::hash::{derive_seeds, xxh64};

use super::{Result, SketchError};

#[derive(Debug, Clone, PartialEq)]
pub struct CountMinSketch {
    grid: Vec<u64>, // d rows of w counters, row-major
    width: usize,
    depth: usize,
    seeds: Vec<u64>,
    total: u64,
}

impl CountMinSketch {
    pub fn new(width: usize, depth: usize, seed: u64) -> Result<Self> {
        if width < 1 || depth < 1 {
            return Err(SketchError::Domain("width and depth must be >= 1".into()));
        }
        Ok(Self {
            grid: vec![0; width * depth],
            width,
            depth,
            seeds: derive_seeds(seed, depth),
            total: 0,
        })
    }

    /// Sketch sized for the standard `(epsilon, delta)` guarantee:
    /// `w = ceil(e/epsilon)`, `d = ceil(ln(1/delta))`.
    pub fn with_error_bounds(epsilon: f64, delta: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&epsilon) || epsilon <= 0.0 {
            return Err(SketchError::Domain("epsilon must be in (0, 1)".into()));
        }
        if !(0.0..1.0).contains(&delta) || delta <= 0.0 {
            return Err(SketchError::Domain("delta must be in (0, 1)".into()));
        }
        let width = (std::f64::consts::E / epsilon).ceil() as usize;
        let depth = (1.0 / delta).ln().ceil().max(1.0) as usize;
        Self::new(width, depth, seed)
    }

    pub fn insert(&mut self, item: &[u8]) {
        self.insert_count(item, 1);
    }

    pub fn insert_count(&mut self, item: &[u8], count: u64) {
        for row in 0..self.depth {
            let col = (xxh64(item, self.seeds[row]) % self.width as u64) as usize;
            let cell = &mut self.grid[row * self.width + col];
            *cell = cell.saturating_add(count);
        }
        self.total = self.total.saturating_add(count);
    }

    /// Point estimate: min over rows of the hashed counter. Never less than
    /// the true count.
    pub fn estimate(&self, item: &[u8]) -> u64 {
        (0..self.depth)
            .map(|row| {
                let col = (xxh64(item, self.seeds[row]) % self.width as u64) as usize;
                self.grid[row * self.width + col]
            })
            .min()
            .unwrap_or(0)
    }

    /// Overestimate of `sum_x f_a(x) * f_b(x)`: min over rows of the
    /// row-wise dot product.
    pub fn inner_product(&self, other: &Self) -> Result<u64> {
        self.check_compatible(other)?;
        Ok((0..self.depth)
            .map(|row| {
                let a = &self.grid[row * self.width..(row + 1) * self.width];
                let b = &other.grid[row * self.width..(row + 1) * self.width];
                a.iter()
                    .zip(b)
                    .fold(0u64, |acc, (&x, &y)| acc.saturating_add(x.saturating_mul(y)))
            })
            .min()
            .unwrap_or(0))
    }

    /// Elementwise add; exactly equivalent to sketching the concatenated
    /// streams.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        self.check_compatible(other)?;
        for (a, b) in self.grid.iter_mut().zip(&other.grid) {
            *a = a.saturating_add(*b);
        }
        self.total = self.total.saturating_add(other.total);
        Ok(())
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.width != other.width || self.depth != other.depth || self.seeds != other.seeds {
            return Err(SketchError::Incompatible(
                "count-min parameters/seeds differ".into(),
            ));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub(crate) fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    pub(crate) fn cells(&self) -> &[u64] {
        &self.grid
    }

    pub(crate) fn from_parts(
        width: usize,
        depth: usize,
        seeds: Vec<u64>,
        grid: Vec<u64>,
        total: u64,
    ) -> Self {
        Self { grid, width, depth, seeds, total }
    }
}

/// Array of count-min sketches over dyadic levels of a bounded integer
/// universe, answering range counts with at most `2 log2(U)` point queries.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadicCmsArray {
    levels: Vec<CountMinSketch>,
    universe_bits: u32,
}

impl DyadicCmsArray {
    /// Universe is `[0, 2^universe_bits)`; 32 covers integer-keyed streams.
    pub fn new(universe_bits: u32, width: usize, depth: usize, seed: u64) -> Result<Self> {
        if universe_bits == 0 || universe_bits > 63 {
            return Err(SketchError::Domain("universe_bits must be in [1, 63]".into()));
        }
        let mut state = seed;
        let levels = (0..=universe_bits)
            .map(|_| CountMinSketch::new(width, depth, crate::hash::splitmix64(&mut state)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { levels, universe_bits })
    }

    pub fn insert(&mut self, key: u64) -> Result<()> {
        if key >= self.universe() {
            return Err(SketchError::Domain(format!(
                "key {key} outside universe [0, {})",
                self.universe()
            )));
        }
        for (level, sketch) in self.levels.iter_mut().enumerate() {
            sketch.insert(&(key >> level).to_le_bytes());
        }
        Ok(())
    }

    /// Overestimate of the number of inserted keys in `[lo, hi]`.
    pub fn range(&self, lo: u64, hi: u64) -> Result<u64> {
        if lo > hi {
            return Err(SketchError::Domain(format!("range lo {lo} > hi {hi}")));
        }
        if hi >= self.universe() {
            return Err(SketchError::Domain(format!(
                "hi {hi} outside universe [0, {})",
                self.universe()
            )));
        }
        let mut sum = 0u64;
        let mut cursor = lo;
        // Greedy dyadic cover: the largest aligned block that starts at
        // `cursor` and stays inside [lo, hi].
        loop {
            let align = if cursor == 0 {
                self.universe_bits
            } else {
                cursor.trailing_zeros().min(self.universe_bits)
            };
            let span = hi - cursor + 1;
            let fit = 63 - span.leading_zeros(); // floor(log2(span))
            let level = align.min(fit);
            sum = sum.saturating_add(
                self.levels[level as usize].estimate(&(cursor >> level).to_le_bytes()),
            );
            let step = 1u64 << level;
            if hi - cursor < step {
                break;
            }
            cursor += step;
            if cursor > hi {
                break;
            }
        }
        Ok(sum)
    }

    pub fn universe(&self) -> u64 {
        1u64 << self.universe_bits
    }

    pub fn universe_bits(&self) -> u32 {
        self.universe_bits
    }

    pub fn total(&self) -> u64 {
        self.levels[0].total()
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.universe_bits != other.universe_bits {
            return Err(SketchError::Incompatible("dyadic universes differ".into()));
        }
        for (a, b) in self.levels.iter_mut().zip(&other.levels) {
            a.merge(b)?;
        }
        Ok(())
    }

    pub(crate) fn levels(&self) -> &[CountMinSketch] {
        &self.levels
    }

    pub(crate) fn from_parts(universe_bits: u32, levels: Vec<CountMinSketch>) -> Self {
        Self { levels, universe_bits }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use std::collections::HashMap;

    #[test]
    fn empty_sketch_estimates_zero() {
        let s = CountMinSketch::new(64, 4, 0).unwrap();
        assert_eq!(s.estimate(b"never"), 0);
    }

    #[test]
    fn estimates_never_undercount() {
        let mut s = CountMinSketch::new(32, 3, 9).unwrap();
        for _ in 0..5 {
            s.insert(b"x");
        }
        assert!(s.estimate(b"x") >= 5);
    }

    #[test]
    fn row_sums_equal_total() {
        let mut s = CountMinSketch::new(16, 4, 2).unwrap();
        for i in 0u64..1000 {
            s.insert(&(i % 37).to_le_bytes());
        }
        for row in 0..s.depth() {
            let sum: u64 = s.cells()[row * s.width()..(row + 1) * s.width()].iter().sum();
            assert_eq!(sum, s.total());
        }
    }

    #[test]
    fn zipf_stream_respects_error_bound() {
        // Exact hash-map oracle against the (e/w)·N bound on every item.
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let universe = 10_000usize;
        let weights: Vec<f64> = (1..=universe).map(|r| 1.0 / (r as f64).powf(1.1)).collect();
        let cumulative: Vec<f64> = weights
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect();
        let total_w = *cumulative.last().unwrap();

        let mut sketch = CountMinSketch::new(2000, 5, 77).unwrap();
        let mut exact: HashMap<u64, u64> = HashMap::new();
        let n = 100_000u64;
        for _ in 0..n {
            let u: f64 = rng.random::<f64>() * total_w;
            let idx = cumulative.partition_point(|&c| c < u) as u64;
            sketch.insert(&idx.to_le_bytes());
            *exact.entry(idx).or_insert(0) += 1;
        }
        let bound = (std::f64::consts::E / 2000.0) * n as f64;
        let mut max_err = 0u64;
        for (&item, &count) in &exact {
            let est = sketch.estimate(&item.to_le_bytes());
            assert!(est >= count, "underestimate for {item}");
            max_err = max_err.max(est - count);
        }
        assert!(
            (max_err as f64) <= bound,
            "max overestimate {max_err} above bound {bound}"
        );
    }

    #[test]
    fn split_merge_equals_single_stream() {
        let mut whole = CountMinSketch::new(128, 4, 5).unwrap();
        let mut left = CountMinSketch::new(128, 4, 5).unwrap();
        let mut right = CountMinSketch::new(128, 4, 5).unwrap();
        for i in 0u64..2000 {
            let key = (i * i % 311).to_le_bytes();
            whole.insert(&key);
            if i < 1000 {
                left.insert(&key);
            } else {
                right.insert(&key);
            }
        }
        left.merge(&right).unwrap();
        assert_eq!(left, whole);
    }

    #[test]
    fn inner_product_overestimates() {
        let a0 = CountMinSketch::new(64, 3, 1).unwrap();
        let mut a = a0.clone();
        let b = a0.clone();
        a.insert(b"x");
        // b empty -> 0
        assert_eq!(a.inner_product(&b).unwrap(), 0);
        let mut b = a0.clone();
        b.insert(b"x");
        assert!(a.inner_product(&b).unwrap() >= 1);

        let other = CountMinSketch::new(64, 3, 2).unwrap();
        assert!(matches!(a.inner_product(&other), Err(SketchError::Incompatible(_))));
    }

    #[test]
    fn inner_product_zipf_accuracy() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let universe = 2_000usize;
        let weights: Vec<f64> = (1..=universe).map(|r| 1.0 / (r as f64).powf(1.2)).collect();
        let cum: Vec<f64> = weights
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect();
        let total_w = *cum.last().unwrap();
        let draw = |rng: &mut ChaCha20Rng| {
            let u: f64 = rng.random::<f64>() * total_w;
            cum.partition_point(|&c| c < u) as u64
        };

        let mut sa = CountMinSketch::new(4096, 5, 3).unwrap();
        let mut sb = CountMinSketch::new(4096, 5, 3).unwrap();
        let mut fa: HashMap<u64, u64> = HashMap::new();
        let mut fb: HashMap<u64, u64> = HashMap::new();
        for _ in 0..10_000 {
            let x = draw(&mut rng);
            sa.insert(&x.to_le_bytes());
            *fa.entry(x).or_insert(0) += 1;
            let y = draw(&mut rng);
            sb.insert(&y.to_le_bytes());
            *fb.entry(y).or_insert(0) += 1;
        }
        let exact: u64 = fa
            .iter()
            .map(|(k, &ca)| ca * fb.get(k).copied().unwrap_or(0))
            .sum();
        let est = sa.inner_product(&sb).unwrap();
        assert!(est >= exact);
        let rel = (est - exact) as f64 / exact as f64;
        assert!(rel < 0.10, "relative error {rel}");
    }

    #[test]
    fn dyadic_range_overestimates_and_tracks_exact() {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let mut arr = DyadicCmsArray::new(10, 256, 4, 13).unwrap();
        let mut keys = Vec::new();
        for _ in 0..10_000 {
            let k = rng.random_range(0u64..1024);
            arr.insert(k).unwrap();
            keys.push(k);
        }
        let mut rel_err_sum = 0.0;
        let mut cases = 0u32;
        for _ in 0..100 {
            let a = rng.random_range(0u64..1024);
            let b = rng.random_range(0u64..1024);
            let (lo, hi) = (a.min(b), a.max(b));
            let exact = keys.iter().filter(|&&k| k >= lo && k <= hi).count() as u64;
            let est = arr.range(lo, hi).unwrap();
            assert!(est >= exact, "range [{lo},{hi}] underestimated");
            if exact > 0 {
                rel_err_sum += (est - exact) as f64 / exact as f64;
                cases += 1;
            }
        }
        assert!(rel_err_sum / (cases as f64) < 0.05, "mean relative error too high");
    }

    #[test]
    fn dyadic_small_cases() {
        let mut arr = DyadicCmsArray::new(8, 64, 3, 1).unwrap();
        assert_eq!(arr.range(0, 255).unwrap(), 0);
        arr.insert(3).unwrap();
        arr.insert(3).unwrap();
        arr.insert(5).unwrap();
        assert!(arr.range(3, 5).unwrap() >= 3);
        assert!(arr.range(0, 255).unwrap() >= 3);
        assert!(matches!(arr.range(6, 2), Err(SketchError::Domain(_))));
        assert!(matches!(arr.insert(256), Err(SketchError::Domain(_))));
    }

    #[test]
    fn dyadic_levels_share_total() {
        let mut arr = DyadicCmsArray::new(6, 32, 2, 8).unwrap();
        for k in 0..40 {
            arr.insert(k % 64).unwrap();
        }
        for level in arr.levels() {
            assert_eq!(level.total(), 40);
        }
    }
}

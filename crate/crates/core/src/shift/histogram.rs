//! Histograms with frozen edges for distribution comparison.
//!
//! The divergence statistics are defined over two histograms with identical
//! edges, so edges are chosen once (Freedman-Diaconis on the reference
//! window) and reused for every test window until the reference is replaced.

use crate::scalar::Real;

use super::{Result, ShiftError};

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram<F: Real> {
    edges: Vec<F>,
    counts: Vec<u64>,
    /// Values below the first / above the last edge.
    pub underflow: u64,
    pub overflow: u64,
}

impl<F: Real> Histogram<F> {
    pub fn new(edges: Vec<F>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(ShiftError::Domain("need at least two edges".into()));
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ShiftError::Domain("edges must be strictly increasing".into()));
        }
        let bins = edges.len() - 1;
        Ok(Self { edges, counts: vec![0; bins], underflow: 0, overflow: 0 })
    }

    /// Equal-width edges spanning `[lo, hi]`.
    pub fn with_range(lo: F, hi: F, bins: usize) -> Result<Self> {
        if bins == 0 || lo >= hi {
            return Err(ShiftError::Domain("empty range or zero bins".into()));
        }
        let width = (hi - lo) / F::from_usize_lossy(bins);
        let edges = (0..=bins)
            .map(|i| lo + width * F::from_usize_lossy(i))
            .collect();
        Self::new(edges)
    }

    /// Freedman-Diaconis edges computed from a sample; the bin count falls
    /// back to sqrt(n) when the IQR degenerates and is capped to keep the
    /// divergence statistics stable on small windows.
    pub fn freedman_diaconis(sample: &[F]) -> Result<Self> {
        if sample.is_empty() {
            return Err(ShiftError::Domain("empty sample".into()));
        }
        let mut sorted: Vec<F> = sample.iter().copied().filter(|v| v.is_finite()).collect();
        if sorted.is_empty() {
            return Err(ShiftError::Domain("no finite values".into()));
        }
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = sorted.len();
        let lo = sorted[0];
        let hi = sorted[n - 1];
        if lo == hi {
            // Degenerate sample: one bin around the single value.
            let half = F::from_f64_lossy(0.5);
            return Self::new(vec![lo - half, hi + half]);
        }
        let q1 = sorted[n / 4];
        let q3 = sorted[(3 * n) / 4];
        let iqr = q3 - q1;
        let width = F::from_f64_lossy(2.0) * iqr / F::from_f64_lossy((n as f64).cbrt());
        let bins = if width > F::zero() {
            let raw = ((hi - lo) / width).to_f64_lossy().ceil();
            (raw as usize).clamp(1, 512)
        } else {
            ((n as f64).sqrt().ceil() as usize).clamp(1, 512)
        };
        Self::with_range(lo, hi, bins)
    }

    pub fn from_sample(edges: Vec<F>, sample: &[F]) -> Result<Self> {
        let mut h = Self::new(edges)?;
        for &v in sample {
            h.add(v);
        }
        Ok(h)
    }

    /// Fresh histogram with the same edges and zero counts.
    pub fn empty_like(&self) -> Self {
        Self {
            edges: self.edges.clone(),
            counts: vec![0; self.counts.len()],
            underflow: 0,
            overflow: 0,
        }
    }

    pub fn add(&mut self, value: F) {
        if value.is_nan() {
            return;
        }
        let first = self.edges[0];
        let last = *self.edges.last().unwrap();
        if value < first {
            self.underflow += 1;
            return;
        }
        if value > last {
            self.overflow += 1;
            return;
        }
        // partition_point gives the first edge > value; bin = that - 1.
        let idx = self.edges.partition_point(|e| *e <= value);
        let bin = idx.saturating_sub(1).min(self.counts.len() - 1);
        self.counts[bin] += 1;
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn edges(&self) -> &[F] {
        &self.edges
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    /// In-range total.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn same_edges(&self, other: &Self) -> bool {
        self.edges == other.edges
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_edges() {
        assert!(Histogram::<f64>::new(vec![0.0]).is_err());
        assert!(Histogram::<f64>::new(vec![0.0, 0.0]).is_err());
        assert!(Histogram::<f64>::new(vec![1.0, 0.5]).is_err());
    }

    #[test]
    fn counts_land_in_bins() {
        let mut h = Histogram::with_range(0.0f64, 10.0, 5).unwrap();
        for v in [0.5, 1.0, 2.5, 9.9, 10.0, -1.0, 11.0, f64::NAN] {
            h.add(v);
        }
        assert_eq!(h.total(), 5);
        assert_eq!(h.underflow, 1);
        assert_eq!(h.overflow, 1);
        assert_eq!(h.counts()[0], 2); // 0.5 and 1.0 (edge belongs to next bin? 1.0 -> bin 0? edges [0,2): yes)
    }

    #[test]
    fn freedman_diaconis_reasonable_bins() {
        let sample: Vec<f64> = (0..1000).map(|i| (i as f64) / 100.0).collect();
        let h = Histogram::freedman_diaconis(&sample).unwrap();
        assert!(h.bins() >= 5 && h.bins() <= 512);
        let degenerate = vec![3.0f64; 50];
        let h = Histogram::freedman_diaconis(&degenerate).unwrap();
        assert_eq!(h.bins(), 1);
    }

    #[test]
    fn max_value_falls_in_last_bin() {
        let mut h = Histogram::with_range(0.0f64, 1.0, 4).unwrap();
        h.add(1.0);
        assert_eq!(h.counts()[3], 1);
        assert_eq!(h.overflow, 0);
    }
}

//! t-digest quantile sketch.
//!
//! Merging variant with the asin-based scale function: incoming values are
//! buffered, then folded into the centroid list whenever the buffer fills.
//! Accuracy is best near the tails, which is what the drift detectors lean
//! on for their outlier bands.

use std::io::Write;

use crate::scalar::Real;

use super::{Result, SketchError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Centroid<F: Real> {
    pub mean: F,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TDigest<F: Real> {
    compression: f64,
    centroids: Vec<Centroid<F>>,
    buffer: Vec<F>,
    total_weight: f64,
    min: F,
    max: F,
}

impl<F: Real> TDigest<F> {
    pub fn new(compression: f64) -> Self {
        let compression = compression.max(10.0);
        Self {
            compression,
            centroids: Vec::new(),
            buffer: Vec::with_capacity(buffer_len(compression)),
            total_weight: 0.0,
            min: F::infinity(),
            max: F::neg_infinity(),
        }
    }

    pub fn insert(&mut self, value: F) {
        if value.is_nan() {
            return;
        }
        if value < self.min {
            self.min = value;
        }
        if value > self.max {
            self.max = value;
        }
        self.buffer.push(value);
        self.total_weight += 1.0;
        if self.buffer.len() >= buffer_len(self.compression) {
            self.compress();
        }
    }

    /// Interpolated quantile; monotone in `q`, exact at the extremes.
    pub fn quantile(&mut self, q: f64) -> Result<F> {
        if !(0.0..=1.0).contains(&q) {
            return Err(SketchError::Domain("q must be in [0, 1]".into()));
        }
        if self.total_weight < 1.0 {
            return Err(SketchError::EmptySummary);
        }
        self.compress();
        if q == 0.0 {
            return Ok(self.min);
        }
        if q == 1.0 {
            return Ok(self.max);
        }

        let target = q * self.total_weight;
        // Centroid i covers cumulative midpoint W_{<i} + w_i/2.
        let mut before = 0.0;
        let mut prev_mid = 0.0;
        let mut prev_mean = self.min;
        for c in &self.centroids {
            let mid = before + c.weight / 2.0;
            if target < mid {
                let span = mid - prev_mid;
                let t = if span > 0.0 { (target - prev_mid) / span } else { 0.0 };
                let lerp = prev_mean + (c.mean - prev_mean) * F::from_f64_lossy(t);
                return Ok(clamp(lerp, self.min, self.max));
            }
            before += c.weight;
            prev_mid = mid;
            prev_mean = c.mean;
        }
        Ok(self.max)
    }

    /// Centroid union followed by recompression; weight is conserved.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if (self.compression - other.compression).abs() > f64::EPSILON {
            return Err(SketchError::Incompatible("t-digest compressions differ".into()));
        }
        let mut snapshot = other.clone();
        snapshot.compress();
        self.compress();
        self.centroids.extend(snapshot.centroids.iter().copied());
        self.total_weight += snapshot.total_weight;
        if snapshot.min < self.min {
            self.min = snapshot.min;
        }
        if snapshot.max > self.max {
            self.max = snapshot.max;
        }
        self.recompress_centroids();
        Ok(())
    }

    /// Fold buffered points into the centroid list.
    pub fn compress(&mut self) {
        if self.buffer.is_empty() {
            return;
        }
        let buffered: Vec<F> = self.buffer.drain(..).collect();
        self.centroids
            .extend(buffered.into_iter().map(|v| Centroid { mean: v, weight: 1.0 }));
        self.recompress_centroids();
    }

    fn recompress_centroids(&mut self) {
        if self.centroids.is_empty() {
            return;
        }
        self.centroids
            .sort_by(|a, b| a.mean.partial_cmp(&b.mean).unwrap());
        let total: f64 = self.centroids.iter().map(|c| c.weight).sum();
        let mut merged: Vec<Centroid<F>> = Vec::with_capacity(self.centroids.len());
        let mut cur = self.centroids[0];
        let mut weight_before = 0.0;
        for &next in &self.centroids[1..] {
            let q0 = weight_before / total;
            let q2 = (weight_before + cur.weight + next.weight) / total;
            if self.scale(q2) - self.scale(q0) <= 1.0 {
                // Weighted mean keeps centroid means non-decreasing.
                let w = cur.weight + next.weight;
                let delta = next.mean - cur.mean;
                cur.mean = cur.mean + delta * F::from_f64_lossy(next.weight / w);
                cur.weight = w;
            } else {
                weight_before += cur.weight;
                merged.push(cur);
                cur = next;
            }
        }
        merged.push(cur);
        self.centroids = merged;
    }

    // k1 scale function: delta/(2 pi) * asin(2q - 1).
    fn scale(&self, q: f64) -> f64 {
        self.compression / (2.0 * std::f64::consts::PI) * (2.0 * q.clamp(0.0, 1.0) - 1.0).asin()
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub fn is_empty(&self) -> bool {
        self.total_weight < 1.0
    }

    pub fn min(&self) -> F {
        self.min
    }

    pub fn max(&self) -> F {
        self.max
    }

    pub fn compression(&self) -> f64 {
        self.compression
    }

    pub fn centroids(&mut self) -> &[Centroid<F>] {
        self.compress();
        &self.centroids
    }

    /// Debug export: one `mean,weight` line per centroid.
    pub fn write_csv<W: Write>(&mut self, out: &mut W) -> std::io::Result<()> {
        self.compress();
        writeln!(out, "mean,weight")?;
        for c in &self.centroids {
            writeln!(out, "{},{}", c.mean, c.weight)?;
        }
        Ok(())
    }

    pub(crate) fn from_parts(
        compression: f64,
        centroids: Vec<Centroid<F>>,
        total_weight: f64,
        min: F,
        max: F,
    ) -> Self {
        Self {
            compression,
            centroids,
            buffer: Vec::new(),
            total_weight,
            min,
            max,
        }
    }
}

fn buffer_len(compression: f64) -> usize {
    (compression as usize * 5).max(50)
}

fn clamp<F: Real>(v: F, lo: F, hi: F) -> F {
    if v < lo {
        lo
    } else if v > hi {
        hi
    } else {
        v
    }
}

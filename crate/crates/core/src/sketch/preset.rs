//! The combined multi-sketch preset used by the sketcher stage.
//!
//! When the queries a stream will face are not known in advance, the
//! sketcher keeps a membership filter, a frequency sketch, a heavy-hitter
//! summary, and a cardinality estimator side by side. The default preset is
//! sized so that a stream of 10^7 32-bit integers with 10^6 distinct values
//! serializes to well under 0.7 MB: frequency, heavy-hitter, and cardinality
//! structures are parameterized for ~4% error, and the Bloom filter takes
//! the remaining budget (about 5.5 bits per expected distinct item, ~7%
//! false-positive rate).

use serde::{Deserialize, Serialize};

use super::bloom::BloomFilter;
use super::cms::CountMinSketch;
use super::codec;
use super::hll::HyperLogLog;
use super::space_saving::SpaceSavingSummary;
use super::Result;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SketchPreset {
    /// Bloom filter size in bits.
    pub bloom_bits: u64,
    /// Bloom hash count.
    pub bloom_hashes: u32,
    /// Count-min width (columns per row).
    pub cms_width: usize,
    /// Count-min depth (rows).
    pub cms_depth: usize,
    /// HyperLogLog precision p (2^p registers).
    pub hll_precision: u8,
    /// Space-Saving counter budget.
    pub heavy_hitter_capacity: usize,
}

impl Default for SketchPreset {
    fn default() -> Self {
        Self {
            // ~5.5 bits per expected distinct item at n = 10^6.
            bloom_bits: 5_500_000,
            bloom_hashes: 4,
            // epsilon = e/68 ~ 4% of stream length.
            cms_width: 68,
            cms_depth: 4,
            // 1.04/sqrt(2^10) ~ 3.3% relative error.
            hll_precision: 10,
            // N/25 = 4% deterministic heavy-hitter bound.
            heavy_hitter_capacity: 25,
        }
    }
}

/// The four keyed summaries maintained together over one stream.
#[derive(Debug, Clone)]
pub struct SketchSuite {
    pub bloom: BloomFilter,
    pub cms: CountMinSketch,
    pub hll: HyperLogLog,
    pub heavy_hitters: SpaceSavingSummary,
}

impl SketchSuite {
    pub fn new(preset: &SketchPreset, seed: u64) -> Result<Self> {
        let mut state = seed;
        let s1 = crate::hash::splitmix64(&mut state);
        let s2 = crate::hash::splitmix64(&mut state);
        let s3 = crate::hash::splitmix64(&mut state);
        Ok(Self {
            bloom: BloomFilter::new(preset.bloom_bits, preset.bloom_hashes, s1)?,
            cms: CountMinSketch::new(preset.cms_width, preset.cms_depth, s2)?,
            hll: HyperLogLog::new(preset.hll_precision, s3)?,
            heavy_hitters: SpaceSavingSummary::new(preset.heavy_hitter_capacity)?,
        })
    }

    pub fn insert(&mut self, item: &[u8]) {
        self.bloom.insert(item);
        self.cms.insert(item);
        self.hll.insert(item);
        self.heavy_hitters.insert(item);
    }

    /// Total size of the four encoded summaries, headers included.
    pub fn serialized_size(&self) -> usize {
        codec::encode_bloom(&self.bloom).len()
            + codec::encode_cms(&self.cms).len()
            + codec::encode_hll(&self.hll).len()
            + codec::encode_space_saving(&self.heavy_hitters).len()
    }

    pub fn encode_all(&self) -> Vec<Vec<u8>> {
        vec![
            codec::encode_bloom(&self.bloom),
            codec::encode_cms(&self.cms),
            codec::encode_hll(&self.hll),
            codec::encode_space_saving(&self.heavy_hitters),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_items_fit_the_budget() {
        // 10^6 distinct 32-bit integers; combined serialization < 0.7 MB.
        let mut suite = SketchSuite::new(&SketchPreset::default(), 1).unwrap();
        for i in 0u32..1_000_000 {
            suite.insert(&i.to_le_bytes());
        }
        let size = suite.serialized_size();
        assert!(size < 700_000, "combined serialized size {size}");
        // Sanity on the cardinality estimate while we are here.
        let rel = (suite.hll.cardinality() - 1e6).abs() / 1e6;
        assert!(rel < 0.10, "hll relative error {rel}");
    }
}

//! Bloom filter for membership queries.
//!
//! Never returns a false negative; false positives occur at a rate set by
//! the bits-per-item budget and the hash count. `plan` computes the optimal
//! hash count and the expected false-positive rate for a given budget.

use crate::hash::{derive_seeds, xxh64};

use super::{Result, SketchError};

/// Answer of a membership query. A Bloom filter can rule an item out but
/// never confirm it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Membership {
    DefinitelyAbsent,
    MaybePresent,
}

/// Hash count and expected false-positive rate for inserting `n_expected`
/// items into `m_bits` bits: `k = round((m/n) ln 2)` clamped to `[1, 64]`,
/// `fpr = (1 - e^{-kn/m})^k`.
pub fn plan(n_expected: u64, m_bits: u64) -> Result<(u32, f64)> {
    if m_bits < 1 {
        return Err(SketchError::Domain("m_bits must be >= 1".into()));
    }
    if n_expected < 1 {
        return Err(SketchError::Domain("n_expected must be >= 1".into()));
    }
    let ratio = m_bits as f64 / n_expected as f64;
    let k = (ratio * std::f64::consts::LN_2).round().clamp(1.0, 64.0) as u32;
    let exponent = -(k as f64) * (n_expected as f64) / (m_bits as f64);
    let fpr = (1.0 - exponent.exp()).powi(k as i32);
    Ok((k, fpr))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BloomFilter {
    bits: Vec<u64>,
    m_bits: u64,
    k: u32,
    seeds: Vec<u64>,
    inserted: u64,
}

impl BloomFilter {
    /// Filter with `m_bits` bits and `k` hash functions seeded from `seed`.
    pub fn new(m_bits: u64, k: u32, seed: u64) -> Result<Self> {
        if m_bits < 1 {
            return Err(SketchError::Domain("m_bits must be >= 1".into()));
        }
        if !(1..=64).contains(&k) {
            return Err(SketchError::Domain("k must be in [1, 64]".into()));
        }
        let words = m_bits.div_ceil(64) as usize;
        Ok(Self {
            bits: vec![0; words],
            m_bits,
            k,
            seeds: derive_seeds(seed, k as usize),
            inserted: 0,
        })
    }

    /// Filter sized for `n_expected` items at the optimal hash count.
    pub fn with_capacity(n_expected: u64, m_bits: u64, seed: u64) -> Result<Self> {
        let (k, _) = plan(n_expected, m_bits)?;
        Self::new(m_bits, k, seed)
    }

    pub fn insert(&mut self, item: &[u8]) {
        for &s in &self.seeds {
            let bit = xxh64(item, s) % self.m_bits;
            self.bits[(bit / 64) as usize] |= 1 << (bit % 64);
        }
        self.inserted = self.inserted.saturating_add(1);
    }

    pub fn contains(&self, item: &[u8]) -> Membership {
        for &s in &self.seeds {
            let bit = xxh64(item, s) % self.m_bits;
            if self.bits[(bit / 64) as usize] & (1 << (bit % 64)) == 0 {
                return Membership::DefinitelyAbsent;
            }
        }
        Membership::MaybePresent
    }

    /// Bitwise OR with a filter of identical parameters; equivalent to having
    /// inserted both streams into one filter.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.m_bits != other.m_bits || self.k != other.k || self.seeds != other.seeds {
            return Err(SketchError::Incompatible(
                "bloom parameters/seeds differ".into(),
            ));
        }
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
        self.inserted = self.inserted.saturating_add(other.inserted);
        Ok(())
    }

    pub fn m_bits(&self) -> u64 {
        self.m_bits
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub(crate) fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    pub(crate) fn bit_words(&self) -> &[u64] {
        &self.bits
    }

    pub(crate) fn from_parts(m_bits: u64, k: u32, seeds: Vec<u64>, bits: Vec<u64>, inserted: u64) -> Self {
        Self { bits, m_bits, k, seeds, inserted }
    }
}

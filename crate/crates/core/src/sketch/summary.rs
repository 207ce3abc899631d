//! Uniform ingest/merge/serialize surface over the mergeable sketch family.
//!
//! The sketcher stage and the stores speak [`Summary`] so they can treat a
//! heterogeneous bank of sketches as one collection. Reservoirs are not part
//! of the family: merging two samples is not defined here, and attempting it
//! reports `Unsupported`.

use super::bloom::BloomFilter;
use super::cms::{CountMinSketch, DyadicCmsArray};
use super::codec;
use super::hll::HyperLogLog;
use super::space_saving::SpaceSavingSummary;
use super::tdigest::TDigest;
use super::{Result, SketchError};

/// A stream item presented to a summary.
#[derive(Debug, Clone, Copy)]
pub enum Item<'a> {
    /// Opaque identity (hashable) — Bloom, count-min, HLL, Space-Saving.
    Bytes(&'a [u8]),
    /// Real scalar — t-digest.
    Scalar(f64),
    /// Bounded integer key — dyadic range arrays.
    Key(u64),
}

#[derive(Debug, Clone)]
pub enum Summary {
    Bloom(BloomFilter),
    CountMin(CountMinSketch),
    DyadicCms(DyadicCmsArray),
    HyperLogLog(HyperLogLog),
    SpaceSaving(SpaceSavingSummary),
    TDigest(TDigest<f64>),
}

impl Summary {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Summary::Bloom(_) => "bloom",
            Summary::CountMin(_) => "count_min",
            Summary::DyadicCms(_) => "dyadic_cms",
            Summary::HyperLogLog(_) => "hyperloglog",
            Summary::SpaceSaving(_) => "space_saving",
            Summary::TDigest(_) => "t_digest",
        }
    }

    /// Feed one item. The item type must match the summary's domain.
    pub fn ingest(&mut self, item: Item<'_>) -> Result<()> {
        match (self, item) {
            (Summary::Bloom(s), Item::Bytes(b)) => {
                s.insert(b);
                Ok(())
            }
            (Summary::CountMin(s), Item::Bytes(b)) => {
                if s.total() == u64::MAX {
                    return Err(SketchError::Saturated);
                }
                s.insert(b);
                Ok(())
            }
            (Summary::DyadicCms(s), Item::Key(k)) => s.insert(k),
            (Summary::HyperLogLog(s), Item::Bytes(b)) => {
                s.insert(b);
                Ok(())
            }
            (Summary::SpaceSaving(s), Item::Bytes(b)) => {
                if s.total() == u64::MAX {
                    return Err(SketchError::Saturated);
                }
                s.insert(b);
                Ok(())
            }
            (Summary::TDigest(s), Item::Scalar(v)) => {
                s.insert(v);
                Ok(())
            }
            (s, i) => Err(SketchError::TypeMismatch(format!(
                "{} cannot ingest {:?}",
                s.kind_name(),
                i
            ))),
        }
    }

    /// Merge a same-kind, same-parameter summary into this one.
    pub fn merge(&mut self, other: &Summary) -> Result<()> {
        match (self, other) {
            (Summary::Bloom(a), Summary::Bloom(b)) => a.merge(b),
            (Summary::CountMin(a), Summary::CountMin(b)) => a.merge(b),
            (Summary::DyadicCms(a), Summary::DyadicCms(b)) => a.merge(b),
            (Summary::HyperLogLog(a), Summary::HyperLogLog(b)) => a.merge(b),
            (Summary::SpaceSaving(a), Summary::SpaceSaving(b)) => a.merge(b),
            (Summary::TDigest(a), Summary::TDigest(b)) => a.merge(b),
            (a, b) => Err(SketchError::Incompatible(format!(
                "cannot merge {} with {}",
                a.kind_name(),
                b.kind_name()
            ))),
        }
    }

    pub fn encode(&mut self) -> Vec<u8> {
        match self {
            Summary::Bloom(s) => codec::encode_bloom(s),
            Summary::CountMin(s) => codec::encode_cms(s),
            Summary::DyadicCms(s) => codec::encode_dyadic(s),
            Summary::HyperLogLog(s) => codec::encode_hll(s),
            Summary::SpaceSaving(s) => codec::encode_space_saving(s),
            Summary::TDigest(s) => codec::encode_tdigest(s),
        }
    }

    pub fn decode(data: &[u8]) -> Result<Summary> {
        Ok(match codec::peek_kind(data)? {
            codec::Kind::Bloom => Summary::Bloom(codec::decode_bloom(data)?),
            codec::Kind::CountMin => Summary::CountMin(codec::decode_cms(data)?),
            codec::Kind::DyadicCms => Summary::DyadicCms(codec::decode_dyadic(data)?),
            codec::Kind::HyperLogLog => Summary::HyperLogLog(codec::decode_hll(data)?),
            codec::Kind::SpaceSaving => Summary::SpaceSaving(codec::decode_space_saving(data)?),
            codec::Kind::TDigest => Summary::TDigest(codec::decode_tdigest(data)?),
            codec::Kind::Projection => {
                return Err(SketchError::Unsupported(
                    "projection specs are not stream summaries".into(),
                ))
            }
        })
    }
}

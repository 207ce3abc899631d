//! Binary serialization for every sketch.
//!
//! Layout: a 16-byte header (magic `DLSK`, kind tag, format version, flags,
//! parameter-block length, payload length), then the parameter block, then
//! the payload. Encoding is canonical, so decode-encode round-trips are
//! byte-exact; that is what the provenance stores rely on.

use super::bloom::BloomFilter;
use super::cms::{CountMinSketch, DyadicCmsArray};
use super::hll::HyperLogLog;
use super::projection::RandomProjection;
use super::space_saving::{Counter, SpaceSavingSummary};
use super::tdigest::{Centroid, TDigest};
use super::{Result, SketchError};

pub const MAGIC: &[u8; 4] = b"DLSK";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Kind {
    Bloom = 1,
    CountMin = 2,
    DyadicCms = 3,
    HyperLogLog = 4,
    SpaceSaving = 5,
    TDigest = 6,
    Projection = 7,
}

impl Kind {
    fn from_u8(v: u8) -> Result<Self> {
        Ok(match v {
            1 => Kind::Bloom,
            2 => Kind::CountMin,
            3 => Kind::DyadicCms,
            4 => Kind::HyperLogLog,
            5 => Kind::SpaceSaving,
            6 => Kind::TDigest,
            7 => Kind::Projection,
            other => return Err(SketchError::Codec(format!("unknown kind tag {other}"))),
        })
    }
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Self { buf: Vec::new() }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_bits().to_le_bytes());
    }

    fn bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn u8(&mut self) -> Result<u8> {
        let v = *self.buf.first().ok_or_else(truncated)?;
        self.buf = &self.buf[1..];
        Ok(v)
    }

    fn u32(&mut self) -> Result<u32> {
        let v = self.buf.get(..4).ok_or_else(truncated)?;
        self.buf = &self.buf[4..];
        Ok(u32::from_le_bytes(v.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        let v = self.buf.get(..8).ok_or_else(truncated)?;
        self.buf = &self.buf[8..];
        Ok(u64::from_le_bytes(v.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        let v = self.buf.get(..n).ok_or_else(truncated)?;
        self.buf = &self.buf[n..];
        Ok(v)
    }

    fn done(&self) -> bool {
        self.buf.is_empty()
    }
}

fn truncated() -> SketchError {
    SketchError::Codec("truncated input".into())
}

fn frame(kind: Kind, params: Vec<u8>, payload: Vec<u8>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + params.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.push(kind as u8);
    out.push(VERSION);
    out.extend_from_slice(&0u16.to_le_bytes()); // flags
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&params);
    out.extend_from_slice(&payload);
    out
}

fn unframe(data: &[u8]) -> Result<(Kind, &[u8], &[u8])> {
    if data.len() < 16 {
        return Err(truncated());
    }
    if &data[..4] != MAGIC {
        return Err(SketchError::Codec("bad magic".into()));
    }
    let kind = Kind::from_u8(data[4])?;
    if data[5] != VERSION {
        return Err(SketchError::Codec(format!("unsupported version {}", data[5])));
    }
    let param_len = u32::from_le_bytes(data[8..12].try_into().unwrap()) as usize;
    let payload_len = u32::from_le_bytes(data[12..16].try_into().unwrap()) as usize;
    if data.len() != 16 + param_len + payload_len {
        return Err(SketchError::Codec("length mismatch".into()));
    }
    Ok((kind, &data[16..16 + param_len], &data[16 + param_len..]))
}

/// Kind tag of an encoded sketch without decoding it.
pub fn peek_kind(data: &[u8]) -> Result<Kind> {
    Ok(unframe(data)?.0)
}

pub fn encode_bloom(filter: &BloomFilter) -> Vec<u8> {
    let mut params = Writer::new();
    params.u64(filter.m_bits());
    params.u32(filter.k());
    params.u64(filter.inserted());
    for &s in filter.seeds() {
        params.u64(s);
    }
    let mut payload = Writer::new();
    for &word in filter.bit_words() {
        payload.u64(word);
    }
    frame(Kind::Bloom, params.buf, payload.buf)
}

pub fn decode_bloom(data: &[u8]) -> Result<BloomFilter> {
    let (kind, params, payload) = unframe(data)?;
    if kind != Kind::Bloom {
        return Err(SketchError::Codec("not a bloom filter".into()));
    }
    let mut p = Reader { buf: params };
    let m_bits = p.u64()?;
    let k = p.u32()?;
    let inserted = p.u64()?;
    let seeds = (0..k).map(|_| p.u64()).collect::<Result<Vec<_>>>()?;
    let words = m_bits.div_ceil(64) as usize;
    let mut body = Reader { buf: payload };
    let bits = (0..words).map(|_| body.u64()).collect::<Result<Vec<_>>>()?;
    if !p.done() || !body.done() {
        return Err(SketchError::Codec("trailing bytes".into()));
    }
    Ok(BloomFilter::from_parts(m_bits, k, seeds, bits, inserted))
}

pub fn encode_cms(sketch: &CountMinSketch) -> Vec<u8> {
    let mut params = Writer::new();
    params.u64(sketch.width() as u64);
    params.u64(sketch.depth() as u64);
    params.u64(sketch.total());
    for &s in sketch.seeds() {
        params.u64(s);
    }
    let mut payload = Writer::new();
    for &c in sketch.cells() {
        payload.u64(c);
    }
    frame(Kind::CountMin, params.buf, payload.buf)
}

pub fn decode_cms(data: &[u8]) -> Result<CountMinSketch> {
    let (kind, params, payload) = unframe(data)?;
    if kind != Kind::CountMin {
        return Err(SketchError::Codec("not a count-min sketch".into()));
    }
    decode_cms_parts(params, payload)
}

fn decode_cms_parts(params: &[u8], payload: &[u8]) -> Result<CountMinSketch> {
    let mut p = Reader { buf: params };
    let width = p.u64()? as usize;
    let depth = p.u64()? as usize;
    let total = p.u64()?;
    let seeds = (0..depth).map(|_| p.u64()).collect::<Result<Vec<_>>>()?;
    let mut body = Reader { buf: payload };
    let grid = (0..width * depth).map(|_| body.u64()).collect::<Result<Vec<_>>>()?;
    if !p.done() || !body.done() {
        return Err(SketchError::Codec("trailing bytes".into()));
    }
    Ok(CountMinSketch::from_parts(width, depth, seeds, grid, total))
}

pub fn encode_dyadic(array: &DyadicCmsArray) -> Vec<u8> {
    let mut params = Writer::new();
    params.u32(array.universe_bits());
    params.u32(array.levels().len() as u32);
    let mut payload = Writer::new();
    for level in array.levels() {
        let encoded = encode_cms(level);
        payload.u32(encoded.len() as u32);
        payload.bytes(&encoded);
    }
    frame(Kind::DyadicCms, params.buf, payload.buf)
}

pub fn decode_dyadic(data: &[u8]) -> Result<DyadicCmsArray> {
    let (kind, params, payload) = unframe(data)?;
    if kind != Kind::DyadicCms {
        return Err(SketchError::Codec("not a dyadic cms array".into()));
    }
    let mut p = Reader { buf: params };
    let universe_bits = p.u32()?;
    let n_levels = p.u32()?;
    let mut body = Reader { buf: payload };
    let mut levels = Vec::with_capacity(n_levels as usize);
    for _ in 0..n_levels {
        let len = body.u32()? as usize;
        levels.push(decode_cms(body.bytes(len)?)?);
    }
    if !p.done() || !body.done() {
        return Err(SketchError::Codec("trailing bytes".into()));
    }
    Ok(DyadicCmsArray::from_parts(universe_bits, levels))
}

pub fn encode_hll(sketch: &HyperLogLog) -> Vec<u8> {
    let mut params = Writer::new();
    params.u8(sketch.precision());
    params.u64(sketch.hash_seed());
    let mut payload = Writer::new();
    payload.bytes(sketch.registers());
    frame(Kind::HyperLogLog, params.buf, payload.buf)
}

pub fn decode_hll(data: &[u8]) -> Result<HyperLogLog> {
    let (kind, params, payload) = unframe(data)?;
    if kind != Kind::HyperLogLog {
        return Err(SketchError::Codec("not a hyperloglog".into()));
    }
    let mut p = Reader { buf: params };
    let precision = p.u8()?;
    let hash_seed = p.u64()?;
    if payload.len() != 1usize << precision {
        return Err(SketchError::Codec("register block size mismatch".into()));
    }
    if !p.done() {
        return Err(SketchError::Codec("trailing bytes".into()));
    }
    Ok(HyperLogLog::from_parts(precision, hash_seed, payload.to_vec()))
}

pub fn encode_space_saving(summary: &SpaceSavingSummary) -> Vec<u8> {
    let mut params = Writer::new();
    params.u64(summary.capacity() as u64);
    params.u64(summary.total());
    params.u32(summary.len() as u32);
    let mut payload = Writer::new();
    for (item, c) in summary.counters_sorted() {
        payload.u32(item.len() as u32);
        payload.bytes(&item);
        payload.u64(c.count);
        payload.u64(c.error);
    }
    frame(Kind::SpaceSaving, params.buf, payload.buf)
}

pub fn decode_space_saving(data: &[u8]) -> Result<SpaceSavingSummary> {
    let (kind, params, payload) = unframe(data)?;
    if kind != Kind::SpaceSaving {
        return Err(SketchError::Codec("not a space-saving summary".into()));
    }
    let mut p = Reader { buf: params };
    let capacity = p.u64()? as usize;
    let total = p.u64()?;
    let n = p.u32()?;
    let mut body = Reader { buf: payload };
    let mut entries = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let len = body.u32()? as usize;
        let item = body.bytes(len)?.to_vec();
        let count = body.u64()?;
        let error = body.u64()?;
        entries.push((item, Counter { count, error }));
    }
    if !p.done() || !body.done() {
        return Err(SketchError::Codec("trailing bytes".into()));
    }
    Ok(SpaceSavingSummary::from_parts(capacity, entries, total))
}

/// Buffered values are folded in first so the encoding is canonical.
pub fn encode_tdigest(digest: &mut TDigest<f64>) -> Vec<u8> {
    digest.compress();
    let mut params = Writer::new();
    params.f64(digest.compression());
    params.f64(digest.total_weight());
    params.f64(digest.min());
    params.f64(digest.max());
    let centroids = digest.centroids().to_vec();
    params.u32(centroids.len() as u32);
    let mut payload = Writer::new();
    for c in &centroids {
        payload.f64(c.mean);
        payload.f64(c.weight);
    }
    frame(Kind::TDigest, params.buf, payload.buf)
}

pub fn decode_tdigest(data: &[u8]) -> Result<TDigest<f64>> {
    let (kind, params, payload) = unframe(data)?;
    if kind != Kind::TDigest {
        return Err(SketchError::Codec("not a t-digest".into()));
    }
    let mut p = Reader { buf: params };
    let compression = p.f64()?;
    let total_weight = p.f64()?;
    let min = p.f64()?;
    let max = p.f64()?;
    let n = p.u32()?;
    let mut body = Reader { buf: payload };
    let mut centroids = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let mean = body.f64()?;
        let weight = body.f64()?;
        centroids.push(Centroid { mean, weight });
    }
    if !p.done() || !body.done() {
        return Err(SketchError::Codec("trailing bytes".into()));
    }
    Ok(TDigest::from_parts(compression, centroids, total_weight, min, max))
}

pub fn encode_projection(spec: &RandomProjection<f64>) -> Vec<u8> {
    let mut params = Writer::new();
    params.u64(spec.input_dim() as u64);
    params.u64(spec.output_dim() as u64);
    params.u64(spec.seed());
    frame(Kind::Projection, params.buf, Vec::new())
}

pub fn decode_projection(data: &[u8]) -> Result<RandomProjection<f64>> {
    let (kind, params, _) = unframe(data)?;
    if kind != Kind::Projection {
        return Err(SketchError::Codec("not a projection spec".into()));
    }
    let mut p = Reader { buf: params };
    let input_dim = p.u64()? as usize;
    let output_dim = p.u64()? as usize;
    let seed = p.u64()?;
    RandomProjection::new(input_dim, output_dim, seed)
}

//! Append-only JSONL segment log with per-record and per-segment checksums.
//!
//! Records are framed as `{"seq":n,"crc":c,"data":...}` lines. The active
//! segment accepts appends until it reaches the byte cap, then it is sealed:
//! its whole-file CRC goes into `index.json` and a new segment starts.
//! Sealed segments are immutable; a torn tail on the active segment is
//! discarded silently on open, anything else that fails validation is an
//! error.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::hash::crc32;

use super::{Result, StoreError};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct SegmentMeta {
    pub first_seq: u64,
    pub last_seq: u64,
    pub bytes: u64,
    pub crc: u32,
    /// Global seal-order stamp used for cross-store age comparison.
    pub sealed_at: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
struct Index {
    segments: Vec<SegmentMeta>,
}

#[derive(Debug, Clone)]
pub struct StoreOptions {
    pub segment_cap_bytes: u64,
    pub fsync_on_seal: bool,
}

impl Default for StoreOptions {
    fn default() -> Self {
        Self { segment_cap_bytes: 1 << 20, fsync_on_seal: true }
    }
}

#[derive(Serialize)]
struct EnvelopeOut<'a, T: Serialize> {
    seq: u64,
    crc: u32,
    data: &'a T,
}

#[derive(Deserialize)]
struct EnvelopeIn<'a> {
    seq: u64,
    crc: u32,
    #[serde(borrow)]
    data: &'a serde_json::value::RawValue,
}

#[derive(Debug)]
pub struct AppendStore {
    dir: PathBuf,
    opts: StoreOptions,
    index: Index,
    active_first_seq: u64,
    active_bytes: u64,
    next_seq: u64,
    writer: Option<BufWriter<File>>,
    pinned: Vec<u64>,
}

impl AppendStore {
    pub fn open(dir: impl AsRef<Path>, opts: StoreOptions) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let index: Index = match fs::read(dir.join("index.json")) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map_err(|e| StoreError::Corrupt(format!("index.json: {e}")))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Index::default(),
            Err(e) => return Err(e.into()),
        };

        // Validate sealed segments against the index.
        for meta in &index.segments {
            let path = dir.join(segment_name(meta.first_seq));
            let bytes = fs::read(&path)
                .map_err(|e| StoreError::Corrupt(format!("{}: {e}", path.display())))?;
            if bytes.len() as u64 != meta.bytes || crc32(&bytes) != meta.crc {
                return Err(StoreError::Corrupt(format!(
                    "sealed segment {} failed checksum",
                    path.display()
                )));
            }
        }

        let sealed_next = index.segments.last().map_or(0, |m| m.last_seq + 1);
        let mut store = Self {
            dir,
            opts,
            index,
            active_first_seq: sealed_next,
            active_bytes: 0,
            next_seq: sealed_next,
            writer: None,
            pinned: Vec::new(),
        };
        store.recover_active()?;
        Ok(store)
    }

    /// Scan the active (unsealed) segment if one exists, dropping a torn
    /// tail record.
    fn recover_active(&mut self) -> Result<()> {
        let path = self.active_path();
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
            Err(e) => return Err(e.into()),
        };
        let mut valid_len = 0usize;
        let mut expected = self.active_first_seq;
        let mut cursor = 0usize;
        while cursor < bytes.len() {
            let end = match bytes[cursor..].iter().position(|&b| b == b'\n') {
                Some(off) => cursor + off,
                None => break, // partial line: torn tail
            };
            let line = &bytes[cursor..end];
            match validate_line(line, expected) {
                Ok(()) => {
                    expected += 1;
                    valid_len = end + 1;
                    cursor = end + 1;
                }
                Err(_) if end + 1 >= bytes.len() => break, // torn final record
                Err(e) => return Err(e),                   // corruption mid-file
            }
        }
        if valid_len < bytes.len() {
            // Discard the unacknowledgeable tail.
            let file = OpenOptions::new().write(true).open(&path)?;
            file.set_len(valid_len as u64)?;
            file.sync_all()?;
        }
        self.active_bytes = valid_len as u64;
        self.next_seq = expected;
        Ok(())
    }

    /// Append one record; returns its sequence number. The record is
    /// flushed to the file before the call returns.
    pub fn append<T: Serialize>(&mut self, record: &T) -> Result<u64> {
        let seq = self.next_seq;
        let payload = serde_json::to_vec(record)?;
        let envelope = EnvelopeOut { seq, crc: crc32(&payload), data: record };
        let mut line = serde_json::to_vec(&envelope)?;
        line.push(b'\n');

        if self.writer.is_none() {
            let file = OpenOptions::new().create(true).append(true).open(self.active_path())?;
            self.writer = Some(BufWriter::new(file));
        }
        let writer = self.writer.as_mut().unwrap();
        writer.write_all(&line)?;
        writer.flush()?;
        self.active_bytes += line.len() as u64;
        self.next_seq += 1;
        Ok(seq)
    }

    /// True when the active segment has outgrown the cap and should be
    /// sealed by the owning store set.
    pub fn wants_seal(&self) -> bool {
        self.active_bytes >= self.opts.segment_cap_bytes && self.next_seq > self.active_first_seq
    }

    /// Seal the active segment: checksum it into the index and roll over.
    pub fn seal(&mut self, sealed_at: u64) -> Result<Option<SegmentMeta>> {
        if self.next_seq == self.active_first_seq {
            return Ok(None); // nothing buffered
        }
        if let Some(mut w) = self.writer.take() {
            w.flush()?;
            if self.opts.fsync_on_seal {
                w.get_ref().sync_all()?;
            }
        }
        let path = self.active_path();
        let bytes = fs::read(&path)?;
        let meta = SegmentMeta {
            first_seq: self.active_first_seq,
            last_seq: self.next_seq - 1,
            bytes: bytes.len() as u64,
            crc: crc32(&bytes),
            sealed_at,
        };
        self.index.segments.push(meta.clone());
        self.write_index()?;
        self.active_first_seq = self.next_seq;
        self.active_bytes = 0;
        Ok(Some(meta))
    }

    /// Read one record by sequence number.
    pub fn read(&self, seq: u64) -> Result<serde_json::Value> {
        let mut out = self.replay(seq, seq + 1)?;
        out.pop()
            .map(|(_, v)| v)
            .ok_or(StoreError::NotFound(format!("seq {seq}")))
    }

    pub fn read_as<T: DeserializeOwned>(&self, seq: u64) -> Result<T> {
        Ok(serde_json::from_value(self.read(seq)?)?)
    }

    /// Records with `from <= seq < to`, in order. Identical output on
    /// repeated calls. Ranges reaching into evicted history fail with the
    /// earliest sequence still available.
    pub fn replay(&self, from: u64, to: u64) -> Result<Vec<(u64, serde_json::Value)>> {
        if from > to {
            return Err(StoreError::Domain(format!("replay range {from} > {to}")));
        }
        if from == to {
            return Ok(Vec::new());
        }
        let to_inclusive = to - 1;
        if to_inclusive >= self.next_seq {
            return Err(StoreError::NotFound(format!(
                "seq {to_inclusive} beyond last written {}",
                self.next_seq.saturating_sub(1)
            )));
        }
        let earliest = self.earliest_seq();
        if from < earliest {
            return Err(StoreError::PartialReplay { earliest_available: earliest });
        }

        let mut out = Vec::new();
        for meta in &self.index.segments {
            if meta.last_seq < from || meta.first_seq > to_inclusive {
                continue;
            }
            self.scan_file(&self.dir.join(segment_name(meta.first_seq)), from, to_inclusive, &mut out)?;
        }
        if to_inclusive >= self.active_first_seq {
            let path = self.active_path();
            if path.exists() {
                self.scan_file(&path, from, to_inclusive, &mut out)?;
            }
        }
        Ok(out)
    }

    fn scan_file(
        &self,
        path: &Path,
        from: u64,
        to_inclusive: u64,
        out: &mut Vec<(u64, serde_json::Value)>,
    ) -> Result<()> {
        let bytes = fs::read(path)?;
        for line in bytes.split(|&b| b == b'\n') {
            if line.is_empty() {
                continue;
            }
            let env: EnvelopeIn = serde_json::from_slice(line)
                .map_err(|e| StoreError::Corrupt(format!("{}: {e}", path.display())))?;
            if env.seq >= from && env.seq <= to_inclusive {
                let value = serde_json::from_str(env.data.get())
                    .map_err(|e| StoreError::Corrupt(format!("{}: {e}", path.display())))?;
                out.push((env.seq, value));
            }
        }
        Ok(())
    }

    /// Earliest sequence still on disk.
    pub fn earliest_seq(&self) -> u64 {
        self.index
            .segments
            .first()
            .map_or(self.active_first_seq, |m| m.first_seq)
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn sealed_segments(&self) -> &[SegmentMeta] {
        &self.index.segments
    }

    /// Bytes on disk: sealed segments plus the active one.
    pub fn total_bytes(&self) -> u64 {
        self.index.segments.iter().map(|m| m.bytes).sum::<u64>() + self.active_bytes
    }

    /// Mark a sequence as pinned: its segment survives eviction.
    pub fn pin(&mut self, seq: u64) {
        if !self.pinned.contains(&seq) {
            self.pinned.push(seq);
        }
    }

    pub fn clear_pins(&mut self) {
        self.pinned.clear();
    }

    pub fn is_pinned(&self, meta: &SegmentMeta) -> bool {
        self.pinned
            .iter()
            .any(|&s| s >= meta.first_seq && s <= meta.last_seq)
    }

    /// Drop a sealed segment from disk and the index (eviction path).
    pub fn remove_segment(&mut self, first_seq: u64) -> Result<u64> {
        let pos = self
            .index
            .segments
            .iter()
            .position(|m| m.first_seq == first_seq)
            .ok_or(StoreError::NotFound(format!("segment {first_seq}")))?;
        let meta = self.index.segments.remove(pos);
        fs::remove_file(self.dir.join(segment_name(meta.first_seq)))?;
        self.write_index()?;
        Ok(meta.bytes)
    }

    fn write_index(&self) -> Result<()> {
        let tmp = self.dir.join("index.json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(&self.index)?)?;
        fs::rename(&tmp, self.dir.join("index.json"))?;
        Ok(())
    }

    fn active_path(&self) -> PathBuf {
        self.dir.join(segment_name(self.active_first_seq))
    }

    /// Flush and fsync everything (called on clean shutdown).
    pub fn sync(&mut self) -> Result<()> {
        if let Some(w) = self.writer.as_mut() {
            w.flush()?;
            w.get_ref().sync_all()?;
        }
        Ok(())
    }
}

fn segment_name(first_seq: u64) -> String {
    format!("seg-{first_seq}.jsonl")
}

fn validate_line(line: &[u8], expected_seq: u64) -> Result<()> {
    let env: EnvelopeIn = serde_json::from_slice(line)
        .map_err(|e| StoreError::Corrupt(format!("bad record: {e}")))?;
    if env.seq != expected_seq {
        return Err(StoreError::Corrupt(format!(
            "sequence gap: expected {expected_seq}, found {}",
            env.seq
        )));
    }
    // The checksum covers the payload exactly as it sits on disk.
    if crc32(env.data.get().as_bytes()) != env.crc {
        return Err(StoreError::Corrupt(format!("crc mismatch at seq {}", env.seq)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(dir: &Path) -> AppendStore {
        AppendStore::open(dir, StoreOptions::default()).unwrap()
    }

    #[test]
    fn sequences_increase_by_one() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = store(dir.path());
        let a = s.append(&serde_json::json!({"v": 1})).unwrap();
        let b = s.append(&serde_json::json!({"v": 2})).unwrap();
        assert_eq!((a, b), (0, 1));
    }

    #[test]
    fn reopen_recovers_acknowledged_records() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut s = store(dir.path());
            for i in 0..100 {
                s.append(&serde_json::json!({"i": i})).unwrap();
            }
            // Dropped without seal or sync: simulates a crash after the
            // appends were acknowledged (each append flushes).
        }
        let s = store(dir.path());
        assert_eq!(s.next_seq(), 100);
        let rows = s.replay(0, 100).unwrap();
        assert_eq!(rows.len(), 100);
        assert_eq!(rows[99].1["i"], 99);
    }

    #[test]
    fn torn_tail_is_discarded_silently() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut s = store(dir.path());
            s.append(&serde_json::json!({"ok": true})).unwrap();
            s.append(&serde_json::json!({"ok": true})).unwrap();
        }
        // Simulate a torn write of record 2.
        let seg = dir.path().join("seg-0.jsonl");
        let mut f = OpenOptions::new().append(true).open(&seg).unwrap();
        f.write_all(b"{\"seq\":2,\"crc\":123,\"data\":{\"ok\"").unwrap();
        drop(f);
        let s = store(dir.path());
        assert_eq!(s.next_seq(), 2, "torn record dropped");
        assert_eq!(s.replay(0, 2).unwrap().len(), 2);
    }

    #[test]
    fn corrupt_middle_record_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut s = store(dir.path());
            for i in 0..3 {
                s.append(&serde_json::json!({"i": i})).unwrap();
            }
        }
        let seg = dir.path().join("seg-0.jsonl");
        let text = fs::read_to_string(&seg).unwrap();
        // Flip a digit inside the first record's payload.
        let corrupted = text.replacen("{\"i\":0}", "{\"i\":7}", 1);
        fs::write(&seg, corrupted).unwrap();
        assert!(matches!(
            AppendStore::open(dir.path(), StoreOptions::default()),
            Err(StoreError::Corrupt(_))
        ));
    }

    #[test]
    fn sealed_segments_roll_over_and_validate() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = AppendStore::open(
            dir.path(),
            StoreOptions { segment_cap_bytes: 200, fsync_on_seal: false },
        )
        .unwrap();
        let mut seals = 0;
        for i in 0..50 {
            s.append(&serde_json::json!({"i": i})).unwrap();
            if s.wants_seal() {
                s.seal(seals).unwrap();
                seals += 1;
            }
        }
        assert!(seals >= 2);
        drop(s);
        let s = store(dir.path());
        assert_eq!(s.replay(0, 50).unwrap().len(), 50);
        assert!(s.sealed_segments().len() >= 2);
    }

    #[test]
    fn replay_semantics() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = store(dir.path());
        for i in 0..10 {
            s.append(&serde_json::json!({"i": i})).unwrap();
        }
        assert!(s.replay(3, 3).unwrap().is_empty(), "empty range");
        assert!(matches!(s.replay(5, 3), Err(StoreError::Domain(_))));
        let rows = s.replay(2, 5).unwrap();
        assert_eq!(rows.iter().map(|(s, _)| *s).collect::<Vec<_>>(), vec![2, 3, 4]);
        // Byte-identical repeated replays.
        let a = serde_json::to_vec(&s.replay(0, 10).unwrap()).unwrap();
        let b = serde_json::to_vec(&s.replay(0, 10).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn evicted_ranges_report_partial_replay() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = AppendStore::open(
            dir.path(),
            StoreOptions { segment_cap_bytes: 120, fsync_on_seal: false },
        )
        .unwrap();
        let mut seals = 0;
        for i in 0..40 {
            s.append(&serde_json::json!({"i": i})).unwrap();
            if s.wants_seal() {
                s.seal(seals).unwrap();
                seals += 1;
            }
        }
        let first = s.sealed_segments()[0].clone();
        s.remove_segment(first.first_seq).unwrap();
        match s.replay(0, 10) {
            Err(StoreError::PartialReplay { earliest_available }) => {
                assert_eq!(earliest_available, first.last_seq + 1);
            }
            other => panic!("expected partial replay, got {other:?}"),
        }
        // Later ranges still work.
        assert!(!s.replay(first.last_seq + 1, 40).unwrap().is_empty());
    }
}

//! Shared infrastructure: model DB, training DB, system-state DB, health
//! stream, and diagnostic logs, all bounded and replayable.
//!
//! Every store is an append-only checksummed JSONL log (see [`segment`]);
//! models are individual framed files. Space is managed like a cache:
//! `evict` removes the oldest sealed segments first and never touches
//! pinned data (the active and previous model, the current reference
//! window).

pub mod segment;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::crc32;
use crate::modelkit::ModelArtifact;

pub use segment::{AppendStore, SegmentMeta, StoreOptions};

pub const MODEL_MAGIC: &[u8; 4] = b"DLMD";
pub const MODEL_FORMAT_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("corrupt store: {0}")]
    Corrupt(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("version conflict: {0}")]
    Conflict(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("range partially evicted; earliest available sequence is {earliest_available}")]
    PartialReplay { earliest_available: u64 },
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, StoreError>;

/// Why a lifecycle decision happened: the snapshot it read, the rule that
/// fired, and the reports that fed the rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceRecord {
    pub decision_id: u64,
    pub snapshot_id: u64,
    /// None when no rule fired (keep-existing default).
    pub rule_id: Option<String>,
    pub report_ids: Vec<u64>,
    pub action: String,
    pub timestamp: i64,
}

/// The append-store kinds of the shared infrastructure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoreKind {
    Training,
    State,
    Health,
    Diagnostic,
}

impl StoreKind {
    pub fn dir_name(self) -> &'static str {
        match self {
            StoreKind::Training => "training",
            StoreKind::State => "state",
            StoreKind::Health => "health",
            StoreKind::Diagnostic => "diag",
        }
    }

    pub const ALL: [StoreKind; 4] = [
        StoreKind::Training,
        StoreKind::State,
        StoreKind::Health,
        StoreKind::Diagnostic,
    ];
}

/// Versioned model storage: one `models/v<N>.bin` file per artifact, framed
/// with the `DLMD` header and byte-exact on round trip.
#[derive(Debug)]
pub struct ModelStore {
    dir: PathBuf,
    versions: Vec<u64>,
}

impl ModelStore {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut versions = Vec::new();
        for entry in fs::read_dir(&dir)? {
            let name = entry?.file_name();
            let name = name.to_string_lossy();
            if let Some(v) = name.strip_prefix('v').and_then(|s| s.strip_suffix(".bin")) {
                if let Ok(v) = v.parse::<u64>() {
                    versions.push(v);
                }
            }
        }
        versions.sort_unstable();
        Ok(Self { dir, versions })
    }

    pub fn put(&mut self, artifact: &ModelArtifact) -> Result<()> {
        if self.versions.contains(&artifact.version) {
            return Err(StoreError::Conflict(format!("version {} exists", artifact.version)));
        }
        let bytes = encode_model(artifact)?;
        let path = self.path(artifact.version);
        fs::write(&path, bytes)?;
        self.versions.push(artifact.version);
        self.versions.sort_unstable();
        Ok(())
    }

    pub fn get(&self, version: u64) -> Result<ModelArtifact> {
        if !self.versions.contains(&version) {
            return Err(StoreError::NotFound(format!("model version {version}")));
        }
        decode_model(&fs::read(self.path(version))?)
    }

    pub fn versions(&self) -> &[u64] {
        &self.versions
    }

    pub fn latest_version(&self) -> Option<u64> {
        self.versions.last().copied()
    }

    pub fn total_bytes(&self) -> u64 {
        self.versions
            .iter()
            .filter_map(|&v| fs::metadata(self.path(v)).ok())
            .map(|m| m.len())
            .sum()
    }

    fn remove(&mut self, version: u64) -> Result<u64> {
        let pos = self
            .versions
            .iter()
            .position(|&v| v == version)
            .ok_or(StoreError::NotFound(format!("model version {version}")))?;
        let bytes = fs::metadata(self.path(version)).map(|m| m.len()).unwrap_or(0);
        fs::remove_file(self.path(version))?;
        self.versions.remove(pos);
        Ok(bytes)
    }

    fn path(&self, version: u64) -> PathBuf {
        self.dir.join(format!("v{version}.bin"))
    }
}

/// Frame an artifact: 16-byte `DLMD` header, version parameter block, JSON
/// payload. Canonical JSON makes the round trip byte-exact.
pub fn encode_model(artifact: &ModelArtifact) -> Result<Vec<u8>> {
    let payload = serde_json::to_vec(artifact)?;
    let params = artifact.version.to_le_bytes();
    let mut out = Vec::with_capacity(16 + params.len() + payload.len());
    out.extend_from_slice(MODEL_MAGIC);
    out.push(0); // kind tag (single model kind)
    out.push(MODEL_FORMAT_VERSION);
    out.extend_from_slice(&(crc32(&payload) as u16).to_le_bytes()); // short checksum in flags
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&params);
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn decode_model(bytes: &[u8]) -> Result<ModelArtifact> {
    if bytes.len() < 16 || &bytes[..4] != MODEL_MAGIC {
        return Err(StoreError::Corrupt("bad model header".into()));
    }
    if bytes[5] != MODEL_FORMAT_VERSION {
        return Err(StoreError::Corrupt(format!("unsupported model format {}", bytes[5])));
    }
    let param_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload_len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if bytes.len() != 16 + param_len + payload_len {
        return Err(StoreError::Corrupt("model length mismatch".into()));
    }
    let payload = &bytes[16 + param_len..];
    let short_crc = u16::from_le_bytes(bytes[6..8].try_into().unwrap());
    if (crc32(payload) as u16) != short_crc {
        return Err(StoreError::Corrupt("model payload checksum mismatch".into()));
    }
    Ok(serde_json::from_slice(payload)?)
}

/// What `evict` did.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvictionReport {
    pub removed_segments: Vec<(String, u64)>,
    pub removed_model_versions: Vec<u64>,
    pub bytes_freed: u64,
    pub bytes_after: u64,
}

/// The full on-disk layout: `models/`, `training/`, `state/`, `health/`,
/// `diag/` under one root.
#[derive(Debug)]
pub struct StoreSet {
    root: PathBuf,
    pub models: ModelStore,
    pub training: AppendStore,
    pub state: AppendStore,
    pub health: AppendStore,
    pub diag: AppendStore,
    seal_counter: u64,
    /// Versions that must survive eviction (active and previous model).
    pub pinned_models: Vec<u64>,
}

impl StoreSet {
    pub fn open(root: impl AsRef<Path>, opts: StoreOptions) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root)?;
        Ok(Self {
            models: ModelStore::open(root.join("models"))?,
            training: AppendStore::open(root.join(StoreKind::Training.dir_name()), opts.clone())?,
            state: AppendStore::open(root.join(StoreKind::State.dir_name()), opts.clone())?,
            health: AppendStore::open(root.join(StoreKind::Health.dir_name()), opts.clone())?,
            diag: AppendStore::open(root.join(StoreKind::Diagnostic.dir_name()), opts)?,
            root,
            seal_counter: 0,
            pinned_models: Vec::new(),
        })
    }

    pub fn store(&self, kind: StoreKind) -> &AppendStore {
        match kind {
            StoreKind::Training => &self.training,
            StoreKind::State => &self.state,
            StoreKind::Health => &self.health,
            StoreKind::Diagnostic => &self.diag,
        }
    }

    pub fn store_mut(&mut self, kind: StoreKind) -> &mut AppendStore {
        match kind {
            StoreKind::Training => &mut self.training,
            StoreKind::State => &mut self.state,
            StoreKind::Health => &mut self.health,
            StoreKind::Diagnostic => &mut self.diag,
        }
    }

    /// Durable append to one of the four log stores; returns the sequence
    /// number and rolls segments as they fill.
    pub fn append<T: Serialize>(&mut self, kind: StoreKind, record: &T) -> Result<u64> {
        let counter = self.seal_counter;
        let store = self.store_mut(kind);
        let seq = store.append(record)?;
        if store.wants_seal() {
            store.seal(counter)?;
            self.seal_counter += 1;
        }
        Ok(seq)
    }

    /// Ordered record stream from one store; see `AppendStore::replay`.
    pub fn replay(&self, kind: StoreKind, from: u64, to: u64) -> Result<Vec<(u64, serde_json::Value)>> {
        self.store(kind).replay(from, to)
    }

    pub fn total_bytes(&self) -> u64 {
        self.models.total_bytes()
            + StoreKind::ALL
                .iter()
                .map(|&k| self.store(k).total_bytes())
                .sum::<u64>()
    }

    /// Shrink to `budget` bytes: oldest sealed segments go first (by global
    /// seal order), then oldest unpinned model versions. Pinned segments and
    /// the pinned models always survive.
    pub fn evict(&mut self, budget: u64) -> Result<EvictionReport> {
        let mut report = EvictionReport::default();
        let mut total = self.total_bytes();
        if total <= budget {
            report.bytes_after = total;
            return Ok(report);
        }

        loop {
            if total <= budget {
                break;
            }
            // Oldest unpinned sealed segment across the four log stores.
            let mut candidate: Option<(StoreKind, u64, u64)> = None; // kind, first_seq, sealed_at
            for &kind in &StoreKind::ALL {
                let store = self.store(kind);
                for meta in store.sealed_segments() {
                    if store.is_pinned(meta) {
                        continue;
                    }
                    if candidate.is_none_or(|(_, _, at)| meta.sealed_at < at) {
                        candidate = Some((kind, meta.first_seq, meta.sealed_at));
                    }
                    break; // segments are ordered; only the oldest matters
                }
            }
            if let Some((kind, first_seq, _)) = candidate {
                let freed = self.store_mut(kind).remove_segment(first_seq)?;
                report.removed_segments.push((kind.dir_name().to_string(), first_seq));
                report.bytes_freed += freed;
                total -= freed.min(total);
                continue;
            }
            // No evictable segments left: drop oldest unpinned models.
            let victim = self
                .models
                .versions()
                .iter()
                .copied()
                .find(|v| !self.pinned_models.contains(v));
            if let Some(version) = victim {
                let freed = self.models.remove(version)?;
                report.removed_model_versions.push(version);
                report.bytes_freed += freed;
                total -= freed.min(total);
                continue;
            }
            return Err(StoreError::Config(format!(
                "budget {budget} smaller than the pinned set ({total} bytes)"
            )));
        }
        report.bytes_after = total;
        Ok(report)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn sync_all(&mut self) -> Result<()> {
        for &kind in &StoreKind::ALL {
            self.store_mut(kind).sync()?;
        }
        Ok(())
    }
}

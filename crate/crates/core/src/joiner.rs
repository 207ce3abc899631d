//! Key-based join of primary events with delayed labels under a watermark.
//!
//! Labels and other feedback rarely ride along with the primary stream;
//! they arrive late, out of order, or never. Either side is buffered until
//! its partner shows up (first-come FIFO 1:1 per key), and an event-time
//! watermark expires entries whose partner is overdue. Expirations are
//! counted and reported, never silently dropped, so the label-coverage
//! accounting downstream stays exact.

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JoinError {
    /// Buffer is at capacity; the caller must advance the watermark (drain
    /// or expire) before offering more.
    #[error("join buffer full ({0} records)")]
    Backpressure(usize),
    #[error("invalid config: {0}")]
    Config(String),
}

/// Class or real-valued feedback.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Class(u32),
    Real(f64),
}

impl Label {
    pub fn as_class(&self) -> Option<u32> {
        match self {
            Label::Class(c) => Some(*c),
            Label::Real(_) => None,
        }
    }
}

/// Feature payloads may arrive as an array or as named fields; named fields
/// are flattened in key order so the vector layout is deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Features {
    Vector(Vec<f64>),
    Named(BTreeMap<String, f64>),
}

impl Features {
    pub fn into_vector(self) -> Vec<f64> {
        match self {
            Features::Vector(v) => v,
            Features::Named(map) => map.into_values().collect(),
        }
    }
}

/// Wire format of one stream record: `key`, `ts`, and either `features`
/// (primary side) or `label` (feedback side).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub key: String,
    pub ts: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Features>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub weak: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimaryEvent {
    pub key: String,
    pub timestamp: i64,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackEvent {
    pub key: String,
    pub timestamp: i64,
    pub label: Label,
    pub weak: bool,
}

/// A complete training example released by the joiner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinedExample {
    pub key: String,
    pub features: Vec<f64>,
    pub label: Label,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub weak: bool,
    pub primary_ts: i64,
    pub feedback_ts: i64,
    /// `feedback_ts - primary_ts`; negative when feedback arrived early.
    pub join_latency: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Primary,
    Feedback,
}

/// One expired buffer entry, reported by `advance_watermark`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expiration {
    pub key: String,
    pub side: Side,
    pub timestamp: i64,
    /// Watermark minus the entry timestamp at expiry.
    pub age: i64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JoinerConfig {
    /// How far the watermark trails the max observed event time (ms).
    pub watermark_lag: i64,
    /// Age beyond the watermark after which unmatched entries expire (ms).
    pub timeout: i64,
    /// Cap on total buffered records across both sides.
    pub max_buffer: usize,
}

impl Default for JoinerConfig {
    fn default() -> Self {
        Self { watermark_lag: 0, timeout: 60_000, max_buffer: 100_000 }
    }
}

/// Running conservation accounting. At any instant:
/// `offered_primary = joined + expired_primary + buffered_primary`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinerCounters {
    pub offered_primary: u64,
    pub offered_feedback: u64,
    pub joined: u64,
    pub expired_primary: u64,
    pub expired_feedback: u64,
    pub rejected: u64,
}

#[derive(Debug)]
pub struct Joiner {
    config: JoinerConfig,
    primaries: HashMap<String, VecDeque<PrimaryEvent>>,
    feedbacks: HashMap<String, VecDeque<FeedbackEvent>>,
    buffered: usize,
    watermark: i64,
    counters: JoinerCounters,
}

impl Joiner {
    pub fn new(config: JoinerConfig) -> Result<Self, JoinError> {
        if config.watermark_lag < 0 {
            return Err(JoinError::Config("watermark_lag must be >= 0".into()));
        }
        if config.timeout < config.watermark_lag {
            return Err(JoinError::Config("timeout must be >= watermark_lag".into()));
        }
        Ok(Self {
            config,
            primaries: HashMap::new(),
            feedbacks: HashMap::new(),
            buffered: 0,
            watermark: i64::MIN,
            counters: JoinerCounters::default(),
        })
    }

    /// Offer a primary event: joins immediately against the oldest buffered
    /// feedback for the key, otherwise buffers the event.
    pub fn offer_primary(&mut self, event: PrimaryEvent) -> Result<Vec<JoinedExample>, JoinError> {
        if let Some(queue) = self.feedbacks.get_mut(&event.key) {
            let feedback = queue.pop_front().expect("non-empty feedback queue");
            if queue.is_empty() {
                self.feedbacks.remove(&event.key);
            }
            self.buffered -= 1;
            self.counters.offered_primary += 1;
            self.counters.joined += 1;
            return Ok(vec![join(event, feedback)]);
        }
        if self.buffered >= self.config.max_buffer {
            self.counters.rejected += 1;
            return Err(JoinError::Backpressure(self.buffered));
        }
        self.counters.offered_primary += 1;
        self.buffered += 1;
        self.primaries.entry(event.key.clone()).or_default().push_back(event);
        Ok(Vec::new())
    }

    /// Symmetric to `offer_primary`; feedback arriving before its primary is
    /// buffered, supporting out-of-order delivery.
    pub fn offer_feedback(&mut self, event: FeedbackEvent) -> Result<Vec<JoinedExample>, JoinError> {
        if let Some(queue) = self.primaries.get_mut(&event.key) {
            let primary = queue.pop_front().expect("non-empty primary queue");
            if queue.is_empty() {
                self.primaries.remove(&event.key);
            }
            self.buffered -= 1;
            self.counters.offered_feedback += 1;
            self.counters.joined += 1;
            return Ok(vec![join(primary, event)]);
        }
        if self.buffered >= self.config.max_buffer {
            self.counters.rejected += 1;
            return Err(JoinError::Backpressure(self.buffered));
        }
        self.counters.offered_feedback += 1;
        self.buffered += 1;
        self.feedbacks.entry(event.key.clone()).or_default().push_back(event);
        Ok(Vec::new())
    }

    /// Raise the watermark to `observed_ts - watermark_lag` (never lowered)
    /// and expire buffered entries older than `watermark - timeout`.
    /// Expirations are reported in deterministic (timestamp, key, side)
    /// order.
    pub fn advance_watermark(&mut self, observed_ts: i64) -> Vec<Expiration> {
        let candidate = observed_ts.saturating_sub(self.config.watermark_lag);
        if candidate > self.watermark {
            self.watermark = candidate;
        }
        let cutoff = match self.watermark.checked_sub(self.config.timeout) {
            Some(c) => c,
            None => return Vec::new(),
        };

        let mut expired = Vec::new();
        let watermark = self.watermark;
        for (key, queue) in self.primaries.iter_mut() {
            while queue.front().is_some_and(|e| e.timestamp < cutoff) {
                let e = queue.pop_front().unwrap();
                expired.push(Expiration {
                    key: key.clone(),
                    side: Side::Primary,
                    timestamp: e.timestamp,
                    age: watermark - e.timestamp,
                });
            }
        }
        self.primaries.retain(|_, q| !q.is_empty());
        for (key, queue) in self.feedbacks.iter_mut() {
            while queue.front().is_some_and(|e| e.timestamp < cutoff) {
                let e = queue.pop_front().unwrap();
                expired.push(Expiration {
                    key: key.clone(),
                    side: Side::Feedback,
                    timestamp: e.timestamp,
                    age: watermark - e.timestamp,
                });
            }
        }
        self.feedbacks.retain(|_, q| !q.is_empty());

        expired.sort_by(|a, b| {
            a.timestamp
                .cmp(&b.timestamp)
                .then_with(|| a.key.cmp(&b.key))
                .then_with(|| side_rank(a.side).cmp(&side_rank(b.side)))
        });
        self.buffered -= expired.len();
        for e in &expired {
            match e.side {
                Side::Primary => self.counters.expired_primary += 1,
                Side::Feedback => self.counters.expired_feedback += 1,
            }
        }
        expired
    }

    pub fn watermark(&self) -> Option<i64> {
        (self.watermark != i64::MIN).then_some(self.watermark)
    }

    pub fn counters(&self) -> JoinerCounters {
        self.counters
    }

    pub fn buffered(&self) -> usize {
        self.buffered
    }

    pub fn buffered_primary(&self) -> usize {
        self.primaries.values().map(VecDeque::len).sum()
    }

    pub fn buffered_feedback(&self) -> usize {
        self.feedbacks.values().map(VecDeque::len).sum()
    }
}

fn side_rank(side: Side) -> u8 {
    match side {
        Side::Primary => 0,
        Side::Feedback => 1,
    }
}

fn join(primary: PrimaryEvent, feedback: FeedbackEvent) -> JoinedExample {
    debug_assert_eq!(primary.key, feedback.key);
    JoinedExample {
        key: primary.key,
        features: primary.features,
        label: feedback.label,
        weak: feedback.weak,
        primary_ts: primary.timestamp,
        feedback_ts: feedback.timestamp,
        join_latency: feedback.timestamp - primary.timestamp,
    }
}

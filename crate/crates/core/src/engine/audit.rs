//! Hash-chained, append-only audit log.
//!
//! Each event commits to its predecessor:
//! `hash = sha256(prev_hash || canonical_json(seq, timestamp, run_id, task_id, actor_id, type, payload))`,
//! hex-lowercase. The first event links to the all-zero digest and
//! sequence numbers start at 1 without gaps.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const GENESIS_HASH: &str = "0000000000000000000000000000000000000000000000000000000000000000";

pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventType {
    RunStarted,
    TaskReady,
    ConsultRequested,
    ConsultRecorded,
    ExecutionStarted,
    ArtifactProduced,
    ValidationRequested,
    VerdictRecorded,
    Notified,
    TaskCompleted,
    TaskFailed,
}

/// The part of an event produced by a state transition, before it is
/// sequenced, timestamped and chained.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventBody {
    pub kind: EventType,
    pub task_id: Option<String>,
    pub actor_id: Option<String>,
    pub payload: Value,
}

impl EventBody {
    pub fn new(kind: EventType, payload: Value) -> Self {
        EventBody {
            kind,
            task_id: None,
            actor_id: None,
            payload,
        }
    }

    pub fn task(mut self, task: &str) -> Self {
        self.task_id = Some(task.to_string());
        self
    }

    pub fn actor(mut self, actor: &str) -> Self {
        self.actor_id = Some(actor.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditEvent {
    pub seq: u64,
    pub timestamp: String,
    pub run_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actor_id: Option<String>,
    #[serde(rename = "type")]
    pub kind: EventType,
    pub payload: Value,
    pub prev_hash: String,
    pub hash: String,
}

#[derive(Serialize)]
struct HashedFields<'a> {
    seq: u64,
    timestamp: &'a str,
    run_id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    task_id: &'a Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    actor_id: &'a Option<String>,
    #[serde(rename = "type")]
    kind: EventType,
    payload: &'a Value,
}

impl AuditEvent {
    pub fn compute_hash(&self) -> String {
        let fields = HashedFields {
            seq: self.seq,
            timestamp: &self.timestamp,
            run_id: &self.run_id,
            task_id: &self.task_id,
            actor_id: &self.actor_id,
            kind: self.kind,
            payload: &self.payload,
        };
        let mut hasher = Sha256::new();
        hasher.update(self.prev_hash.as_bytes());
        hasher.update(serde_json::to_vec(&fields).expect("event fields serialize"));
        hex::encode(hasher.finalize())
    }

    pub fn body(&self) -> EventBody {
        EventBody {
            kind: self.kind,
            task_id: self.task_id.clone(),
            actor_id: self.actor_id.clone(),
            payload: self.payload.clone(),
        }
    }

    /// Canonical JSON Lines form (no trailing newline).
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("audit event serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AuditLog {
    run_id: String,
    events: Vec<AuditEvent>,
}

impl AuditLog {
    pub fn new(run_id: impl Into<String>) -> Self {
        AuditLog {
            run_id: run_id.into(),
            events: Vec::new(),
        }
    }

    pub fn events(&self) -> &[AuditEvent] {
        &self.events
    }

    pub fn last_seq(&self) -> u64 {
        self.events.last().map_or(0, |e| e.seq)
    }

    pub fn append(&mut self, body: EventBody, timestamp: String) -> &AuditEvent {
        let prev_hash = self
            .events
            .last()
            .map_or_else(|| GENESIS_HASH.to_string(), |e| e.hash.clone());
        let mut event = AuditEvent {
            seq: self.last_seq() + 1,
            timestamp,
            run_id: self.run_id.clone(),
            task_id: body.task_id,
            actor_id: body.actor_id,
            kind: body.kind,
            payload: body.payload,
            prev_hash,
            hash: String::new(),
        };
        event.hash = event.compute_hash();
        self.events.push(event);
        self.events.last().expect("just pushed")
    }

    pub fn since(&self, since_seq: u64) -> &[AuditEvent] {
        let start = self.events.partition_point(|e| e.seq <= since_seq);
        &self.events[start..]
    }

    pub fn to_jsonl(&self) -> String {
        to_jsonl(&self.events)
    }
}

pub fn to_jsonl(events: &[AuditEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&e.to_line());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "first_corrupt_seq")]
pub enum ChainStatus {
    Intact,
    CorruptAt(u64),
}

impl ChainStatus {
    pub fn is_intact(self) -> bool {
        self == ChainStatus::Intact
    }
}

/// Recomputes the chain and reports the first event (by position, as the
/// sequence number it should carry) whose linkage or digest fails.
pub fn verify_audit_chain(events: &[AuditEvent]) -> ChainStatus {
    let mut expected_prev = GENESIS_HASH;
    for (i, event) in events.iter().enumerate() {
        let expected_seq = i as u64 + 1;
        if event.seq != expected_seq
            || event.prev_hash != expected_prev
            || event.hash != event.compute_hash()
        {
            return ChainStatus::CorruptAt(expected_seq);
        }
        expected_prev = &event.hash;
    }
    ChainStatus::Intact
}

/// Verifies a JSON Lines log byte for byte: a line that does not parse or
/// is not in canonical form counts as corrupt at its position.
pub fn verify_audit_text(text: &[u8]) -> ChainStatus {
    let mut events = Vec::new();
    let body = text.strip_suffix(b"\n").unwrap_or(text);
    if body.is_empty() {
        return if text.is_empty() {
            ChainStatus::Intact
        } else {
            ChainStatus::CorruptAt(1)
        };
    }
    let missing_newline = body.len() == text.len();
    let lines: Vec<&[u8]> = body.split(|b| *b == b'\n').collect();
    for (i, line) in lines.iter().enumerate() {
        let seq = i as u64 + 1;
        let parsed = std::str::from_utf8(line)
            .ok()
            .and_then(|s| serde_json::from_str::<AuditEvent>(s).ok().map(|e| (s, e)));
        match parsed {
            Some((raw, event)) if event.to_line() == raw => events.push(event),
            _ => {
                return match verify_audit_chain(&events) {
                    ChainStatus::Intact => ChainStatus::CorruptAt(seq),
                    corrupt => corrupt,
                }
            }
        }
    }
    match verify_audit_chain(&events) {
        ChainStatus::Intact if missing_newline => ChainStatus::CorruptAt(lines.len() as u64),
        status => status,
    }
}

/// Parses a JSON Lines audit log.
pub fn parse_jsonl(text: &str) -> Result<Vec<AuditEvent>, (usize, serde_json::Error)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| (i + 1, e)))
        .collect()
}

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::file::encode_event_line;
use super::{Divergence, Event, EventBody, FoldMode, Replayer, SessionState, StoreError};

/// Where a fold stops.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoldTarget {
    Seq(u64),
    /// Last event of the given round's commit, conflict events included.
    RoundBoundary(u32),
    Latest,
}

/// Outcome of an auditing replay.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub events: usize,
    pub rounds: usize,
    pub divergences: Vec<Divergence>,
}

/// Ordered, gap-free sequence of events for one session.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    session_id: String,
    events: Vec<Event>,
}

impl EventLog {
    pub fn new(session_id: impl Into<String>) -> Self {
        EventLog {
            session_id: session_id.into(),
            events: Vec::new(),
        }
    }

    /// Wraps already-sequenced events without checking legality.
    pub fn from_events(session_id: impl Into<String>, events: Vec<Event>) -> Self {
        EventLog {
            session_id: session_id.into(),
            events,
        }
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn last_seq(&self) -> u64 {
        self.events.last().map_or(0, |e| e.seq)
    }

    /// Mutable access for tooling that forges or repairs logs.
    pub fn events_mut(&mut self) -> &mut Vec<Event> {
        &mut self.events
    }

    pub(crate) fn extend(&mut self, events: impl IntoIterator<Item = Event>) {
        self.events.extend(events);
    }

    /// Checks `body` against the folded state and appends it as the next seq.
    pub fn append(&mut self, body: EventBody, ts: i64) -> Result<u64, StoreError> {
        let mut replayer = Replayer::new(FoldMode::Strict);
        for e in &self.events {
            replayer.apply(e)?;
        }
        let event = Event {
            seq: self.last_seq() + 1,
            ts,
            body,
        };
        replayer.apply(&event)?;
        let seq = event.seq;
        self.events.push(event);
        Ok(seq)
    }

    /// Seq of the last event belonging to round `round_index`'s commit.
    pub fn round_boundary(&self, round_index: u32) -> Option<u64> {
        let start = self.events.iter().position(|e| {
            matches!(e.body, EventBody::RoundCommitted { round_index: r, .. } if r == round_index)
        })?;
        let end = self.events[start + 1..]
            .iter()
            .take_while(|e| e.body.is_conflict_event())
            .count();
        Some(self.events[start + end].seq)
    }

    /// Pure left fold of the prefix ending at `upto`.
    pub fn fold_state(&self, upto: FoldTarget) -> Result<SessionState, StoreError> {
        let last = self.last_seq();
        let seq = match upto {
            FoldTarget::Seq(s) => s,
            FoldTarget::Latest => last,
            FoldTarget::RoundBoundary(r) => self
                .round_boundary(r)
                .ok_or_else(|| StoreError::OutOfRange(format!("round {r} is not committed")))?,
        };
        if seq == 0 || seq > last {
            return Err(StoreError::OutOfRange(format!(
                "seq {seq} outside 1..={last}"
            )));
        }
        let mut replayer = Replayer::new(FoldMode::Strict);
        for e in self.events.iter().take_while(|e| e.seq <= seq) {
            replayer.apply(e)?;
        }
        let (state, _) = replayer.into_parts();
        state.ok_or_else(|| StoreError::OutOfRange("empty log".into()))
    }

    /// Replays every event, recomputing derived analytics and collecting
    /// each disagreement with what was recorded.
    pub fn audit(&self) -> Result<ReplayReport, StoreError> {
        let mut replayer = Replayer::new(FoldMode::Audit);
        for e in &self.events {
            replayer.apply(e)?;
        }
        let rounds = replayer.state().map_or(0, |s| s.rounds.len());
        let (_, divergences) = replayer.into_parts();
        Ok(ReplayReport {
            events: self.events.len(),
            rounds,
            divergences,
        })
    }

    /// SHA-256 over the encoded log with timestamps zeroed.
    pub fn content_digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.session_id.as_bytes());
        for e in &self.events {
            let stripped = Event { ts: 0, ..e.clone() };
            let line = encode_event_line(&stripped).expect("events always encode");
            hasher.update(line.as_bytes());
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

//! `.mdtlog` persistence: a header line followed by one CRC-protected JSON
//! event per line.
//!
//! ```text
//! {"magic":"MDTROOM1","v":1,"session_id":"..."}
//! {"seq":1,"ts":0,"kind":"SessionCreated","v":1,"payload":{...},"crc":3735928559}
//! ```
//!
//! The CRC32 covers `seq|ts|kind|v|payload` with the payload bytes exactly as
//! written. A final line without its newline is a torn write and is dropped;
//! any other damage is reported as corruption.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use super::{Event, EventBody, EventLog, StoreError, EVENT_SCHEMA_VERSION};

pub const LOG_MAGIC: &str = "MDTROOM1";
pub const LOG_EXTENSION: &str = "mdtlog";

#[derive(Serialize, Deserialize)]
struct Header {
    magic: String,
    v: u32,
    session_id: String,
}

#[derive(Deserialize)]
struct Line<'a> {
    seq: u64,
    ts: i64,
    kind: String,
    v: u32,
    #[serde(borrow)]
    payload: &'a RawValue,
    crc: u32,
}

#[derive(Serialize)]
struct Tagged<'a> {
    kind: &'a str,
    payload: &'a RawValue,
}

fn line_crc(seq: u64, ts: i64, kind: &str, v: u32, payload: &str) -> u32 {
    crc32fast::hash(format!("{seq}|{ts}|{kind}|{v}|{payload}").as_bytes())
}

fn encode_header(session_id: &str) -> String {
    let header = Header {
        magic: LOG_MAGIC.to_owned(),
        v: EVENT_SCHEMA_VERSION,
        session_id: session_id.to_owned(),
    };
    serde_json::to_string(&header).expect("header encodes")
}

/// One event line, without the trailing newline.
pub fn encode_event_line(event: &Event) -> Result<String, StoreError> {
    let mut tagged = serde_json::to_value(&event.body).map_err(|e| StoreError::StorageFailure(e.to_string()))?;
    let payload = tagged
        .get_mut("payload")
        .map(serde_json::Value::take)
        .unwrap_or_else(|| serde_json::json!({}));
    let payload = serde_json::to_string(&payload).map_err(|e| StoreError::StorageFailure(e.to_string()))?;
    let kind = event.body.kind_name();
    let v = EVENT_SCHEMA_VERSION;
    let crc = line_crc(event.seq, event.ts, kind, v, &payload);
    Ok(format!(
        r#"{{"seq":{},"ts":{},"kind":"{kind}","v":{v},"payload":{payload},"crc":{crc}}}"#,
        event.seq, event.ts
    ))
}

fn corrupt(msg: impl Into<String>) -> StoreError {
    StoreError::CorruptFile(msg.into())
}

fn decode_event_line(line: &str, lineno: usize) -> Result<Event, StoreError> {
    let parsed: Line<'_> = serde_json::from_str(line)
        .map_err(|e| corrupt(format!("line {lineno}: {e}")))?;
    if parsed.v > EVENT_SCHEMA_VERSION {
        return Err(corrupt(format!(
            "line {lineno}: event schema version {} is newer than supported version {EVENT_SCHEMA_VERSION}",
            parsed.v
        )));
    }
    let expected = line_crc(parsed.seq, parsed.ts, &parsed.kind, parsed.v, parsed.payload.get());
    if expected != parsed.crc {
        return Err(corrupt(format!("line {lineno}: checksum mismatch")));
    }
    let tagged = serde_json::to_string(&Tagged {
        kind: &parsed.kind,
        payload: parsed.payload,
    })
    .map_err(|e| corrupt(e.to_string()))?;
    let body: EventBody = serde_json::from_str(&tagged)
        .map_err(|e| corrupt(format!("line {lineno}: {e}")))?;
    Ok(Event {
        seq: parsed.seq,
        ts: parsed.ts,
        body,
    })
}

/// Full file contents for `log`.
pub fn encode_log(log: &EventLog) -> Result<String, StoreError> {
    let mut out = encode_header(log.session_id());
    out.push('\n');
    for e in log.events() {
        out.push_str(&encode_event_line(e)?);
        out.push('\n');
    }
    Ok(out)
}

/// Parses file contents, recovering the longest complete prefix when the
/// final line is torn.
pub fn decode_log(bytes: &[u8]) -> Result<EventLog, StoreError> {
    let text = std::str::from_utf8(bytes).map_err(|_| corrupt("not valid UTF-8"))?;
    let mut lines: Vec<&str> = text.split('\n').collect();
    // Whatever follows the last newline is either empty or a torn write.
    lines.pop();
    let mut lines = lines.into_iter();
    let header_line = lines.next().ok_or_else(|| corrupt("missing header"))?;
    let header: Header =
        serde_json::from_str(header_line).map_err(|e| corrupt(format!("header: {e}")))?;
    if header.magic != LOG_MAGIC {
        return Err(corrupt(format!("bad magic {:?}", header.magic)));
    }
    if header.v > EVENT_SCHEMA_VERSION {
        return Err(corrupt(format!(
            "log schema version {} is newer than supported version {EVENT_SCHEMA_VERSION}",
            header.v
        )));
    }
    let mut events = Vec::new();
    for (i, line) in lines.enumerate() {
        let event = decode_event_line(line, i + 2)?;
        if event.seq != events.len() as u64 + 1 {
            return Err(corrupt(format!("line {}: seq {} out of order", i + 2, event.seq)));
        }
        events.push(event);
    }
    if events.is_empty() {
        return Err(corrupt("log contains no events"));
    }
    Ok(EventLog::from_events(header.session_id, events))
}

/// Writes `log` atomically (temp file + rename).
pub fn save_session(log: &EventLog, path: &Path) -> Result<(), StoreError> {
    if log.is_empty() {
        return Err(StoreError::StorageFailure("refusing to save an empty log".into()));
    }
    let contents = encode_log(log)?;
    let tmp = path.with_extension(format!("{LOG_EXTENSION}.tmp"));
    let io = |e: std::io::Error| StoreError::StorageFailure(format!("{}: {e}", path.display()));
    let mut f = File::create(&tmp).map_err(io)?;
    f.write_all(contents.as_bytes()).map_err(io)?;
    f.sync_all().map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)?;
    Ok(())
}

pub fn load_session(path: &Path) -> Result<EventLog, StoreError> {
    let bytes = std::fs::read(path)
        .map_err(|e| StoreError::StorageFailure(format!("{}: {e}", path.display())))?;
    decode_log(&bytes)
}

/// Receives each committed batch before the engine acknowledges it.
pub trait EventSink: Send {
    fn persist(&mut self, events: &[Event]) -> Result<(), StoreError>;
}

/// Appends batches to a `.mdtlog` file, syncing after each batch.
pub struct LogWriter {
    file: File,
    path: PathBuf,
}

impl LogWriter {
    pub fn create(path: impl Into<PathBuf>, session_id: &str) -> Result<Self, StoreError> {
        let path = path.into();
        let io = |e: std::io::Error| StoreError::StorageFailure(format!("{}: {e}", path.display()));
        let mut file = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(&path)
            .map_err(io)?;
        writeln!(file, "{}", encode_header(session_id)).map_err(io)?;
        file.sync_data().map_err(io)?;
        Ok(LogWriter { file, path })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl EventSink for LogWriter {
    fn persist(&mut self, events: &[Event]) -> Result<(), StoreError> {
        let mut buf = String::new();
        for e in events {
            buf.push_str(&encode_event_line(e)?);
            buf.push('\n');
        }
        let io = |e: std::io::Error| StoreError::StorageFailure(format!("{}: {e}", self.path.display()));
        self.file.write_all(buf.as_bytes()).map_err(io)?;
        self.file.sync_data().map_err(io)
    }
}

//! Append-only mission log.
//!
//! One record per line: `t=<ms> seq=<n> ev=<IDENT> k=v ...`. Values never
//! contain whitespace, `=` or `%`; such bytes are written as `%XX`.

use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::conf::is_identifier;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub t_ms: u64,
    pub seq: u64,
    pub event: String,
    pub fields: Vec<(String, String)>,
}

impl LogRecord {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={} seq={} ev={}", self.t_ms, self.seq, self.event)?;
        for (k, v) in &self.fields {
            write!(f, " {k}={}", escape(v))?;
        }
        Ok(())
    }
}

fn needs_escape(c: char) -> bool {
    c.is_whitespace() || c.is_control() || c == '=' || c == '%'
}

pub fn escape(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for c in value.chars() {
        if needs_escape(c) {
            let mut buf = [0u8; 4];
            for b in c.encode_utf8(&mut buf).bytes() {
                let _ = write!(out, "%{b:02X}");
            }
        } else {
            out.push(c);
        }
    }
    out
}

pub fn unescape(value: &str) -> Option<String> {
    let bytes = value.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = value.get(i + 1..i + 3)?;
            out.push(u8::from_str_radix(hex, 16).ok()?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).ok()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LogError {
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: expected seq {expected}, found {found}")]
    Sequence {
        line: usize,
        expected: u64,
        found: u64,
    },
    #[error("line {line}: time {t_ms} ms is earlier than the previous record")]
    TimeOrder { line: usize, t_ms: u64 },
    #[error("log truncated after line {line}")]
    Truncated { line: usize },
    #[error("line {line}: {message}")]
    Inconsistent { line: usize, message: String },
}

fn malformed(line: usize, message: impl Into<String>) -> LogError {
    LogError::Malformed {
        line,
        message: message.into(),
    }
}

/// Parse one line; `line` is only used in errors.
pub fn parse_record(text: &str, line: usize) -> Result<LogRecord, LogError> {
    let mut tokens = text.split(' ');
    let mut head = |key: &str| -> Result<String, LogError> {
        let tok = tokens
            .next()
            .ok_or_else(|| malformed(line, format!("missing `{key}`")))?;
        tok.strip_prefix(key)
            .and_then(|r| r.strip_prefix('='))
            .map(str::to_string)
            .ok_or_else(|| malformed(line, format!("expected `{key}=`, found `{tok}`")))
    };
    let t_ms = head("t")?.parse().map_err(|_| malformed(line, "bad t"))?;
    let seq = head("seq")?
        .parse()
        .map_err(|_| malformed(line, "bad seq"))?;
    let event = head("ev")?;
    if !is_identifier(&event) {
        return Err(malformed(line, format!("bad event name `{event}`")));
    }
    let mut fields = Vec::new();
    for tok in tokens {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| malformed(line, format!("expected k=v, found `{tok}`")))?;
        if !is_identifier(k) {
            return Err(malformed(line, format!("bad key `{k}`")));
        }
        let v = unescape(v).ok_or_else(|| malformed(line, format!("bad escape in `{tok}`")))?;
        fields.push((k.to_string(), v));
    }
    Ok(LogRecord {
        t_ms,
        seq,
        event,
        fields,
    })
}

/// Parse a whole log, checking sequence numbering and time order. A final
/// line without its newline counts as truncation.
pub fn parse_log(text: &str) -> Result<Vec<LogRecord>, LogError> {
    let mut records: Vec<LogRecord> = Vec::new();
    for (i, raw) in text.split_inclusive('\n').enumerate() {
        let line = i + 1;
        let Some(body) = raw.strip_suffix('\n') else {
            return Err(LogError::Truncated { line: line - 1 });
        };
        let rec = parse_record(body, line)?;
        let expected = records.len() as u64;
        if rec.seq != expected {
            return Err(LogError::Sequence {
                line,
                expected,
                found: rec.seq,
            });
        }
        if records.last().is_some_and(|prev| rec.t_ms < prev.t_ms) {
            return Err(LogError::TimeOrder {
                line,
                t_ms: rec.t_ms,
            });
        }
        records.push(rec);
    }
    Ok(records)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MissionLog {
    records: Vec<LogRecord>,
}

impl MissionLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a record at `t_ms`, which must not precede the last record.
    pub fn push(&mut self, t_ms: u64, event: &str, fields: Vec<(String, String)>) -> &LogRecord {
        debug_assert!(is_identifier(event));
        let t_ms = self.records.last().map_or(t_ms, |r| r.t_ms.max(t_ms));
        let seq = self.records.len() as u64;
        self.records.push(LogRecord {
            t_ms,
            seq,
            event: event.to_string(),
            fields,
        });
        self.records.last().expect("just pushed")
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let _ = writeln!(out, "{r}");
        }
        out
    }
}

/// Build a field list: `fields![("k", v), ...]` with any `Display` values.
#[macro_export]
macro_rules! fields {
    ($(($k:expr, $v:expr)),* $(,)?) => {
        vec![$(($k.to_string(), $v.to_string())),*]
    };
}

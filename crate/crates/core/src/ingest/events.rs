//! User event logs: the raw input for cohort and retention analytics.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::table::{fmt_timestamp, read_csv, TableWriter};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    Signup,
    Active,
    Action(String),
}

impl EventKind {
    pub fn parse(s: &str) -> Option<EventKind> {
        match s {
            "signup" => Some(EventKind::Signup),
            "active" => Some(EventKind::Active),
            _ => s.strip_prefix("action:").map(|name| {
                EventKind::Action(name.to_string())
            }),
        }
    }

    pub fn as_string(&self) -> String {
        match self {
            EventKind::Signup => "signup".into(),
            EventKind::Active => "active".into(),
            EventKind::Action(name) => format!("action:{name}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub user: String,
    /// Seconds since the Unix epoch.
    pub timestamp: i64,
    pub kind: EventKind,
}

/// Validated event log: every user has exactly one signup and no activity
/// before it. Record order is preserved from the source.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    records: Vec<EventRecord>,
    signups: HashMap<String, i64>,
}

impl EventLog {
    pub fn new(records: Vec<EventRecord>) -> Result<Self> {
        let mut signups: HashMap<String, i64> = HashMap::new();
        for r in &records {
            if r.kind == EventKind::Signup
                && signups.insert(r.user.clone(), r.timestamp).is_some()
            {
                return Err(Error::Invariant(format!(
                    "user {:?} has two signup events",
                    r.user
                )));
            }
        }
        for r in &records {
            match signups.get(&r.user) {
                None => {
                    return Err(Error::Invariant(format!(
                        "user {:?} has events but no signup",
                        r.user
                    )))
                }
                Some(&t0) if r.timestamp < t0 && r.kind != EventKind::Signup => {
                    return Err(Error::Invariant(format!(
                        "user {:?} has a {} event before signup",
                        r.user,
                        r.kind.as_string()
                    )))
                }
                _ => {}
            }
        }
        Ok(EventLog { records, signups })
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    pub fn user_count(&self) -> usize {
        self.signups.len()
    }

    pub fn signup_of(&self, user: &str) -> Option<i64> {
        self.signups.get(user).copied()
    }

    /// (user, signup) pairs sorted by user id; deterministic iteration order.
    pub fn signups(&self) -> Vec<(&str, i64)> {
        let mut v: Vec<(&str, i64)> = self
            .signups
            .iter()
            .map(|(u, &t)| (u.as_str(), t))
            .collect();
        v.sort();
        v
    }

    pub fn latest_timestamp(&self) -> Option<i64> {
        self.records.iter().map(|r| r.timestamp).max()
    }
}

/// Load `events.csv` (user_id, timestamp, event). Timestamps are RFC 3339;
/// events are `signup`, `active` or `action:<name>`.
pub fn load_events(path: &Path) -> Result<EventLog> {
    let file = read_csv(path)?;
    file.expect_header(&["user_id", "timestamp", "event"])?;
    let mut records = Vec::with_capacity(file.len());
    for i in 0..file.len() {
        let user = file.identifier(i, 0)?;
        let timestamp = file.timestamp(i, 1)?;
        let raw = file.text(i, 2);
        let kind = EventKind::parse(&raw).ok_or_else(|| Error::Cell {
            path: path.to_path_buf(),
            row: i + 1,
            column: "event".into(),
            message: format!("unknown event kind {raw:?}"),
        })?;
        records.push(EventRecord {
            user,
            timestamp,
            kind,
        });
    }
    EventLog::new(records)
}

pub fn write_events(log: &EventLog, path: &Path) -> Result<()> {
    let mut w = TableWriter::create(path, &["user_id", "timestamp", "event"])?;
    for r in log.records() {
        w.write_row([
            r.user.clone(),
            fmt_timestamp(r.timestamp),
            r.kind.as_string(),
        ])?;
    }
    w.finish()
}

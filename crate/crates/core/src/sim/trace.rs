//! Trace records and their line format:
//!
//! ```text
//! t=<sec> seq=<n> <COMPONENT> <EVENT> k1=v1 k2=v2 ...
//! ```
//!
//! Values containing whitespace, quotes, `=`, or backslashes are written
//! in double quotes with `\"` and `\\` escapes. Empty values are `""`.

use std::fmt;

use crate::ids::Seconds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    Sim,
    Call,
    Policy,
    Priority,
    Scheduler,
    Incapacity,
    Generator,
}

impl Component {
    pub fn as_str(self) -> &'static str {
        match self {
            Component::Sim => "SIM",
            Component::Call => "CALL",
            Component::Policy => "POLICY",
            Component::Priority => "PRIORITY",
            Component::Scheduler => "SCHEDULER",
            Component::Incapacity => "INCAPACITY",
            Component::Generator => "GENERATOR",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub at: Seconds,
    pub seq: u64,
    pub component: Component,
    pub event: &'static str,
    pub details: Vec<(&'static str, String)>,
}

impl TraceRecord {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.details
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn is(&self, component: Component, event: &str) -> bool {
        self.component == component && self.event == event
    }
}

fn needs_quotes(v: &str) -> bool {
    v.is_empty()
        || v
            .chars()
            .any(|c| c.is_whitespace() || matches!(c, '"' | '=' | '\\'))
}

fn write_value(f: &mut fmt::Formatter<'_>, v: &str) -> fmt::Result {
    if !needs_quotes(v) {
        return f.write_str(v);
    }
    f.write_str("\"")?;
    for c in v.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("\"")
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "t={} seq={} {} {}",
            self.at,
            self.seq,
            self.component.as_str(),
            self.event
        )?;
        for (k, v) in &self.details {
            write!(f, " {k}=")?;
            write_value(f, v)?;
        }
        Ok(())
    }
}

/// Renders records one per line, each terminated by `\n`.
pub fn render_trace(records: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_string());
        out.push('\n');
    }
    out
}

/// Appends records with strictly increasing sequence numbers.
#[derive(Debug, Default)]
pub struct TraceLog {
    records: Vec<TraceRecord>,
}

impl TraceLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(
        &mut self,
        at: Seconds,
        component: Component,
        event: &'static str,
        details: Vec<(&'static str, String)>,
    ) {
        let seq = self.records.len() as u64 + 1;
        self.records.push(TraceRecord {
            at,
            seq,
            component,
            event,
            details,
        });
    }

    pub fn last_at(&self) -> Option<Seconds> {
        self.records.last().map(|r| r.at)
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<TraceRecord> {
        self.records
    }
}

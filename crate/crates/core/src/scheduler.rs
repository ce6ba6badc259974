//! Per-episode burst accounting.
//!
//! A [`BurstLedger`] belongs to one waiting call. It hands out permits for
//! bursts of at most `t` seconds, keeps `G` seconds between the end of one
//! burst and the start of the next, and stops after `N` bursts.

use std::fmt;

use thiserror::Error;

use crate::generator::GeneratedMessage;
use crate::ids::Seconds;
use crate::policy::BurstPolicy;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchedulerError {
    #[error("no outstanding permit for session {0}")]
    NoPermit(u64),
    #[error("burst of {duration}s exceeds the {limit}s limit")]
    DurationExceeded { duration: Seconds, limit: Seconds },
    #[error("burst [{start}, {end}) falls outside the permitted window [{issued_at}, {window_end})")]
    OutsideWindow {
        start: Seconds,
        end: Seconds,
        issued_at: Seconds,
        window_end: Seconds,
    },
    #[error("burst record is for session {got}, ledger is for {expected}")]
    WrongSession { expected: u64, got: u64 },
    #[error("burst sequence {got} does not follow {expected_prev}")]
    SequenceMismatch { expected_prev: u32, got: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Permit {
    pub session_id: u64,
    /// 1-based number of the burst this permit is for.
    pub sequence: u32,
    pub issued_at: Seconds,
    pub window_end: Seconds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenyReason {
    BudgetExhausted,
    GapNotElapsed { eligible_at: Seconds },
}

impl fmt::Display for DenyReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DenyReason::BudgetExhausted => f.write_str("BudgetExhausted"),
            DenyReason::GapNotElapsed { .. } => f.write_str("GapNotElapsed"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BurstDecision {
    Permit(Permit),
    Deny(DenyReason),
}

#[derive(Debug, Clone, PartialEq)]
pub enum BurstPayload {
    CallerVoice(String),
    Generated(GeneratedMessage),
    TextWithBeep(String),
}

impl BurstPayload {
    pub fn kind(&self) -> &'static str {
        match self {
            BurstPayload::CallerVoice(_) => "voice",
            BurstPayload::Generated(_) => "generated",
            BurstPayload::TextWithBeep(_) => "text_beep",
        }
    }

    pub fn text(&self) -> &str {
        match self {
            BurstPayload::CallerVoice(t) | BurstPayload::TextWithBeep(t) => t,
            BurstPayload::Generated(m) => &m.text,
        }
    }
}

/// A burst that was actually sent. `payload` is `None` for a permitted
/// window in which nothing could be delivered.
#[derive(Debug, Clone, PartialEq)]
pub struct BurstRecord {
    pub session_id: u64,
    pub sequence: u32,
    pub start: Seconds,
    pub duration: Seconds,
    pub payload: Option<BurstPayload>,
}

impl BurstRecord {
    pub fn end(&self) -> Seconds {
        self.start + self.duration
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BurstLedger {
    session_id: u64,
    policy: BurstPolicy,
    bursts_sent: u32,
    last_burst_end: Option<Seconds>,
    /// Bursts still allowed in total; lowered by [`BurstLedger::dismiss`].
    budget: u32,
    pending: Option<Permit>,
}

impl BurstLedger {
    pub fn new(session_id: u64, policy: BurstPolicy) -> Self {
        Self {
            session_id,
            budget: policy.max_bursts,
            policy,
            bursts_sent: 0,
            last_burst_end: None,
            pending: None,
        }
    }

    pub fn session_id(&self) -> u64 {
        self.session_id
    }

    pub fn policy(&self) -> &BurstPolicy {
        &self.policy
    }

    pub fn bursts_sent(&self) -> u32 {
        self.bursts_sent
    }

    pub fn last_burst_end(&self) -> Option<Seconds> {
        self.last_burst_end
    }

    pub fn remaining(&self) -> u32 {
        self.budget - self.bursts_sent
    }

    pub fn is_exhausted(&self) -> bool {
        self.bursts_sent >= self.budget
    }

    /// Callee refuses further bursts for this episode.
    pub fn dismiss(&mut self) {
        self.budget = self.bursts_sent;
        self.pending = None;
    }

    pub fn request_burst(&mut self, now: Seconds) -> BurstDecision {
        if self.is_exhausted() {
            return BurstDecision::Deny(DenyReason::BudgetExhausted);
        }
        if let Some(p) = self.pending {
            if now < p.window_end {
                // an unused window still holds the channel
                return BurstDecision::Deny(DenyReason::GapNotElapsed {
                    eligible_at: p.window_end + self.policy.gap_seconds,
                });
            }
        }
        if let Some(end) = self.last_burst_end {
            let eligible_at = end + self.policy.gap_seconds;
            if now < eligible_at {
                return BurstDecision::Deny(DenyReason::GapNotElapsed { eligible_at });
            }
        }
        let permit = Permit {
            session_id: self.session_id,
            sequence: self.bursts_sent + 1,
            issued_at: now,
            window_end: now + self.policy.burst_seconds,
        };
        self.pending = Some(permit);
        BurstDecision::Permit(permit)
    }

    pub fn record_burst(&mut self, record: &BurstRecord) -> Result<(), SchedulerError> {
        if record.session_id != self.session_id {
            return Err(SchedulerError::WrongSession {
                expected: self.session_id,
                got: record.session_id,
            });
        }
        let permit = self
            .pending
            .ok_or(SchedulerError::NoPermit(self.session_id))?;
        if record.duration > self.policy.burst_seconds {
            return Err(SchedulerError::DurationExceeded {
                duration: record.duration,
                limit: self.policy.burst_seconds,
            });
        }
        if record.sequence != permit.sequence {
            return Err(SchedulerError::SequenceMismatch {
                expected_prev: self.bursts_sent,
                got: record.sequence,
            });
        }
        if record.start < permit.issued_at || record.end() > permit.window_end {
            return Err(SchedulerError::OutsideWindow {
                start: record.start,
                end: record.end(),
                issued_at: permit.issued_at,
                window_end: permit.window_end,
            });
        }
        self.pending = None;
        self.bursts_sent += 1;
        self.last_burst_end = Some(record.end());
        Ok(())
    }

    pub fn next_eligible_time(&self) -> Option<Seconds> {
        if self.is_exhausted() {
            return None;
        }
        match self.last_burst_end {
            None => Some(0),
            Some(end) => Some(end + self.policy.gap_seconds),
        }
    }
}

//! Subscriber and call-session state.
//!
//! Session states move along a fixed graph:
//!
//! ```text
//! Dialing        -> Active | Waiting | Ended
//! Waiting        -> BurstPermitted | ConnectedByOverride | Active | Ended
//! BurstPermitted -> Waiting | Active | Ended
//! Active         -> Ended
//! ConnectedByOverride -> Ended
//! ```
//!
//! A connected session can additionally be *held* while its subscriber
//! takes another call; holding does not change its state.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::ids::{Seconds, SubscriberId};
use crate::policy::BurstPolicy;
use crate::priority::{EmergencyAssessment, PriorityTier};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CallError {
    #[error("unknown subscriber {0}")]
    UnknownSubscriber(SubscriberId),
    #[error("subscriber {0} is already registered")]
    DuplicateSubscriber(SubscriberId),
    #[error("{0} cannot call itself")]
    SelfCall(SubscriberId),
    #[error("unknown session {0}")]
    UnknownSession(u64),
    #[error("session {0} is not waiting")]
    NotWaiting(u64),
    #[error("illegal transition {event} from {from} in session {session}")]
    IllegalTransition {
        session: u64,
        from: SessionState,
        event: CallEvent,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SessionState {
    Dialing,
    Active,
    Waiting,
    BurstPermitted,
    Ended,
    ConnectedByOverride,
}

impl SessionState {
    pub fn is_connected(self) -> bool {
        matches!(self, SessionState::Active | SessionState::ConnectedByOverride)
    }

    pub fn is_waiting(self) -> bool {
        matches!(self, SessionState::Waiting | SessionState::BurstPermitted)
    }
}

impl fmt::Display for SessionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SessionState::Dialing => "Dialing",
            SessionState::Active => "Active",
            SessionState::Waiting => "Waiting",
            SessionState::BurstPermitted => "BurstPermitted",
            SessionState::Ended => "Ended",
            SessionState::ConnectedByOverride => "ConnectedByOverride",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CallEvent {
    Answer,
    /// Dialing call finds the callee busy.
    Queue,
    HangUp,
    PermitBurst,
    Override,
    Timeout,
}

impl fmt::Display for CallEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CallEvent::Answer => "Answer",
            CallEvent::Queue => "Queue",
            CallEvent::HangUp => "HangUp",
            CallEvent::PermitBurst => "PermitBurst",
            CallEvent::Override => "Override",
            CallEvent::Timeout => "Timeout",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallSession {
    pub session_id: u64,
    pub caller: SubscriberId,
    pub callee: SubscriberId,
    pub state: SessionState,
    pub started_at: Seconds,
    pub ended_at: Option<Seconds>,
}

impl CallSession {
    pub fn involves(&self, who: &SubscriberId) -> bool {
        &self.caller == who || &self.callee == who
    }

    /// The party on the other end from `who`.
    pub fn peer_of(&self, who: &SubscriberId) -> Option<&SubscriberId> {
        if &self.caller == who {
            Some(&self.callee)
        } else if &self.callee == who {
            Some(&self.caller)
        } else {
            None
        }
    }

    pub fn next_state(state: SessionState, event: CallEvent) -> Option<SessionState> {
        use CallEvent as E;
        use SessionState as S;
        match (state, event) {
            (S::Dialing, E::Answer) => Some(S::Active),
            (S::Dialing, E::Queue) => Some(S::Waiting),
            (S::Dialing, E::HangUp | E::Timeout) => Some(S::Ended),
            (S::Waiting, E::PermitBurst) => Some(S::BurstPermitted),
            (S::Waiting, E::Override) => Some(S::ConnectedByOverride),
            (S::Waiting, E::Answer) => Some(S::Active),
            (S::Waiting, E::HangUp | E::Timeout) => Some(S::Ended),
            (S::BurstPermitted, E::Timeout) => Some(S::Waiting),
            (S::BurstPermitted, E::Answer) => Some(S::Active),
            (S::BurstPermitted, E::HangUp) => Some(S::Ended),
            (S::Active | S::ConnectedByOverride, E::HangUp) => Some(S::Ended),
            _ => None,
        }
    }

    pub fn transition(&self, event: CallEvent, now: Seconds) -> Result<CallSession, CallError> {
        let next = Self::next_state(self.state, event).ok_or(CallError::IllegalTransition {
            session: self.session_id,
            from: self.state,
            event,
        })?;
        let mut out = self.clone();
        out.state = next;
        if next == SessionState::Ended {
            out.ended_at = Some(now);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DecisionKind {
    StandardWaiting,
    PermitTextBurstWithBeep,
    PermitVoiceBurst,
    ConnectOverride,
}

impl DecisionKind {
    pub fn for_tier(tier: PriorityTier) -> Self {
        match tier {
            PriorityTier::Highest => DecisionKind::ConnectOverride,
            PriorityTier::Medium => DecisionKind::PermitVoiceBurst,
            PriorityTier::Low => DecisionKind::PermitTextBurstWithBeep,
            PriorityTier::None => DecisionKind::StandardWaiting,
        }
    }

    pub fn admits_bursts(self) -> bool {
        matches!(
            self,
            DecisionKind::PermitVoiceBurst | DecisionKind::PermitTextBurstWithBeep
        )
    }
}

impl fmt::Display for DecisionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecisionKind::StandardWaiting => "StandardWaiting",
            DecisionKind::PermitTextBurstWithBeep => "PermitTextBurstWithBeep",
            DecisionKind::PermitVoiceBurst => "PermitVoiceBurst",
            DecisionKind::ConnectOverride => "ConnectOverride",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionReason {
    PreApproved,
    ScoreThreshold,
    Default,
}

impl fmt::Display for DecisionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecisionReason::PreApproved => "PreApproved",
            DecisionReason::ScoreThreshold => "ScoreThreshold",
            DecisionReason::Default => "Default",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoutingDecision {
    pub kind: DecisionKind,
    /// Effective tier after the pre-approval floor.
    pub tier: PriorityTier,
    pub reason: DecisionReason,
}

/// Maps a waiting call to a routing decision. Pre-approved callers are
/// lifted to at least [`PriorityTier::Medium`]; the reason is `PreApproved`
/// only when that lift changed the outcome.
pub fn route_waiting_call(
    waiting: &CallSession,
    assessment: &EmergencyAssessment,
    policy: &BurstPolicy,
) -> Result<RoutingDecision, CallError> {
    if waiting.state != SessionState::Waiting {
        return Err(CallError::NotWaiting(waiting.session_id));
    }
    Ok(decide(assessment.tier, policy.is_approved(&waiting.caller)))
}

fn decide(score_tier: PriorityTier, approved: bool) -> RoutingDecision {
    let (tier, reason) = if approved && score_tier < PriorityTier::Medium {
        (PriorityTier::Medium, DecisionReason::PreApproved)
    } else if score_tier > PriorityTier::None {
        (score_tier, DecisionReason::ScoreThreshold)
    } else {
        (PriorityTier::None, DecisionReason::Default)
    };
    RoutingDecision {
        kind: DecisionKind::for_tier(tier),
        tier,
        reason,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct QueueEntry {
    session_id: u64,
    tier: PriorityTier,
    order: u64,
}

/// Session table plus per-callee waiting queues.
#[derive(Debug, Clone, Default)]
pub struct CallEngine {
    subscribers: BTreeSet<SubscriberId>,
    sessions: BTreeMap<u64, CallSession>,
    held: BTreeSet<u64>,
    queues: BTreeMap<SubscriberId, Vec<QueueEntry>>,
    next_session: u64,
    next_order: u64,
}

impl CallEngine {
    pub fn new() -> Self {
        Self {
            next_session: 1,
            ..Default::default()
        }
    }

    pub fn register(&mut self, id: SubscriberId) -> Result<(), CallError> {
        if !self.subscribers.insert(id.clone()) {
            return Err(CallError::DuplicateSubscriber(id));
        }
        Ok(())
    }

    pub fn is_registered(&self, id: &SubscriberId) -> bool {
        self.subscribers.contains(id)
    }

    pub fn session(&self, session_id: u64) -> Option<&CallSession> {
        self.sessions.get(&session_id)
    }

    pub fn sessions(&self) -> impl Iterator<Item = &CallSession> {
        self.sessions.values()
    }

    pub fn is_held(&self, session_id: u64) -> bool {
        self.held.contains(&session_id)
    }

    /// Connected to anyone, held or not.
    pub fn is_busy(&self, who: &SubscriberId) -> bool {
        self.sessions
            .values()
            .any(|s| s.state.is_connected() && s.involves(who))
    }

    /// The connected, un-held session `who` is currently talking on.
    pub fn current_call(&self, who: &SubscriberId) -> Option<&CallSession> {
        self.sessions
            .values()
            .find(|s| s.state.is_connected() && s.involves(who) && !self.held.contains(&s.session_id))
    }

    /// Most recently held connected session of `who`.
    pub fn held_call(&self, who: &SubscriberId) -> Option<&CallSession> {
        self.sessions
            .values()
            .rev()
            .find(|s| s.state.is_connected() && s.involves(who) && self.held.contains(&s.session_id))
    }

    /// Newest waiting session placed by `caller`.
    pub fn waiting_call_from(&self, caller: &SubscriberId) -> Option<&CallSession> {
        self.sessions
            .values()
            .rev()
            .find(|s| s.state.is_waiting() && &s.caller == caller)
    }

    pub fn waiting_calls_to(&self, callee: &SubscriberId) -> Vec<&CallSession> {
        self.queue_order(callee)
            .into_iter()
            .filter_map(|id| self.sessions.get(&id))
            .collect()
    }

    /// Waiting session ids toward `callee`: higher tier first, FIFO within
    /// a tier.
    pub fn queue_order(&self, callee: &SubscriberId) -> Vec<u64> {
        let mut entries = self.queues.get(callee).cloned().unwrap_or_default();
        entries.sort_by(|a, b| b.tier.cmp(&a.tier).then(a.order.cmp(&b.order)));
        entries.into_iter().map(|e| e.session_id).collect()
    }

    pub fn place_call(
        &mut self,
        caller: &SubscriberId,
        callee: &SubscriberId,
        now: Seconds,
    ) -> Result<CallSession, CallError> {
        for id in [caller, callee] {
            if !self.is_registered(id) {
                return Err(CallError::UnknownSubscriber(id.clone()));
            }
        }
        if caller == callee {
            return Err(CallError::SelfCall(caller.clone()));
        }
        let session = CallSession {
            session_id: self.next_session,
            caller: caller.clone(),
            callee: callee.clone(),
            state: SessionState::Dialing,
            started_at: now,
            ended_at: None,
        };
        let event = if self.is_busy(callee) {
            CallEvent::Queue
        } else {
            CallEvent::Answer
        };
        let session = session.transition(event, now)?;
        self.next_session += 1;
        self.sessions.insert(session.session_id, session.clone());
        if session.state == SessionState::Waiting {
            self.enqueue(session.session_id, callee.clone(), PriorityTier::None);
        }
        Ok(session)
    }

    fn enqueue(&mut self, session_id: u64, callee: SubscriberId, tier: PriorityTier) {
        let order = self.next_order;
        self.next_order += 1;
        self.queues.entry(callee).or_default().push(QueueEntry {
            session_id,
            tier,
            order,
        });
    }

    /// Records the routing tier of a waiting session for queue ordering.
    pub fn set_queue_tier(&mut self, session_id: u64, tier: PriorityTier) {
        for entries in self.queues.values_mut() {
            if let Some(e) = entries.iter_mut().find(|e| e.session_id == session_id) {
                e.tier = tier;
            }
        }
    }

    pub fn apply(
        &mut self,
        session_id: u64,
        event: CallEvent,
        now: Seconds,
    ) -> Result<CallSession, CallError> {
        let current = self
            .sessions
            .get(&session_id)
            .ok_or(CallError::UnknownSession(session_id))?;
        let updated = current.transition(event, now)?;
        if !updated.state.is_waiting() {
            if let Some(entries) = self.queues.get_mut(&updated.callee) {
                entries.retain(|e| e.session_id != session_id);
            }
        }
        if !updated.state.is_connected() {
            self.held.remove(&session_id);
        }
        self.sessions.insert(session_id, updated.clone());
        Ok(updated)
    }

    pub fn hold(&mut self, session_id: u64) -> bool {
        match self.sessions.get(&session_id) {
            Some(s) if s.state.is_connected() => self.held.insert(session_id),
            _ => false,
        }
    }

    pub fn resume(&mut self, session_id: u64) -> bool {
        self.held.remove(&session_id)
    }
}

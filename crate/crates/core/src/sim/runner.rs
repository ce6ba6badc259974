use std::collections::BTreeMap;
use std::time::Duration;

use thiserror::Error;

use super::scenario::{BurstContent, CallSpec, EventKind, SimEvent};
use super::trace::{Component, TraceLog, TraceRecord};
use crate::call_engine::{
    route_waiting_call, CallEngine, CallError, CallEvent, DecisionKind, RoutingDecision,
    SessionState,
};
use crate::generator::{
    compose_seed, fit_to_duration, ExternalClient, ExternalTarget, GeneratedMessage,
    GenerationParams, GeneratorError, MessageGenerator, SeedBundle, DEFAULT_EXTERNAL_TIMEOUT,
    DEFAULT_SPEAKING_RATE,
};
use crate::ids::{Seconds, SubscriberId};
use crate::incapacity::{
    assess_incapacity, detect_keywords, detect_silence, flag_media, BurstWindow,
    IncapacityError, Lexicon, MediaKind, ModalitySignal,
};
use crate::policy::{PolicyError, PolicyRegistry};
use crate::priority::{
    BaselineProfile, CallerContext, EmergencyAssessment, FactorConstants, LocationType,
    PriorityError, TierThresholds, Weights,
};
use crate::scheduler::{BurstDecision, BurstLedger, BurstPayload, BurstRecord, DenyReason, SchedulerError};

pub const DEFAULT_ABANDON_AFTER: Seconds = 120;

#[derive(Debug, Clone, PartialEq)]
pub enum BackendConfig {
    Template,
    External {
        target: ExternalTarget,
        timeout: Duration,
    },
}

impl BackendConfig {
    pub fn external(target: ExternalTarget) -> Self {
        BackendConfig::External {
            target,
            timeout: DEFAULT_EXTERNAL_TIMEOUT,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub weights: Weights,
    pub thresholds: TierThresholds,
    pub factors: FactorConstants,
    pub backend: BackendConfig,
    pub rng_seed: u64,
    /// Words per second used to convert message length to burst time.
    pub speaking_rate: f64,
    /// A waiting call with no activity for this long is abandoned.
    pub abandon_after: Seconds,
    pub max_words: u32,
    pub temperature: f64,
    pub sampling: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        let gen = GenerationParams::default();
        Self {
            weights: Weights::default(),
            thresholds: TierThresholds::default(),
            factors: FactorConstants::default(),
            backend: BackendConfig::Template,
            rng_seed: 0,
            speaking_rate: DEFAULT_SPEAKING_RATE,
            abandon_after: DEFAULT_ABANDON_AFTER,
            max_words: gen.max_words,
            temperature: gen.temperature,
            sampling: gen.sampling,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimErrorKind {
    #[error(transparent)]
    Call(#[from] CallError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Priority(#[from] PriorityError),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error(transparent)]
    Incapacity(#[from] IncapacityError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {kind}")]
pub struct SimError {
    pub line: usize,
    #[source]
    pub kind: SimErrorKind,
}

enum Timer {
    BurstDone { record: BurstRecord, line: usize },
    AbandonCheck { session: u64, line: usize },
}

/// Per-session state for a call that is waiting on a busy callee.
struct Waiter {
    decision: RoutingDecision,
    ledger: Option<BurstLedger>,
    /// Location type stated on the call line, if any.
    location_type: Option<LocationType>,
    media: Vec<(MediaKind, String, Option<ModalitySignal>)>,
    last_activity: Seconds,
    in_flight: u32,
}

fn f6(x: f64) -> String {
    format!("{x:.6}")
}

fn hours_label(profile: &BaselineProfile) -> String {
    let hours: Vec<u32> = profile.usual_hours().collect();
    let mut parts = Vec::new();
    let mut i = 0;
    while i < hours.len() {
        let start = hours[i];
        let mut end = start;
        while i + 1 < hours.len() && hours[i + 1] == end + 1 {
            i += 1;
            end = hours[i];
        }
        parts.push(if start == end {
            start.to_string()
        } else {
            format!("{start}-{end}")
        });
        i += 1;
    }
    parts.join(",")
}

fn signals_label(signals: &[ModalitySignal]) -> String {
    signals
        .iter()
        .map(|s| format!("{}:{:.2}", s.modality, s.strength))
        .collect::<Vec<_>>()
        .join(",")
}

fn join_ids<'a>(ids: impl IntoIterator<Item = &'a SubscriberId>) -> String {
    ids.into_iter()
        .map(SubscriberId::as_str)
        .collect::<Vec<_>>()
        .join(",")
}

/// Event loop state. Use [`run`] for a one-shot simulation.
pub struct Simulator {
    config: SimConfig,
    weights: Weights,
    thresholds: TierThresholds,
    keywords: Lexicon,
    lexicon: Lexicon,
    engine: CallEngine,
    policies: PolicyRegistry,
    profiles: BTreeMap<SubscriberId, BaselineProfile>,
    generator: MessageGenerator,
    waiters: BTreeMap<u64, Waiter>,
    timers: BTreeMap<(Seconds, u64), Timer>,
    timer_seq: u64,
    log: TraceLog,
    now: Seconds,
    line: usize,
}

type Step = Result<(), SimErrorKind>;

impl Simulator {
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        let config_err = |m: String| SimError {
            line: 0,
            kind: SimErrorKind::Config(m),
        };
        if !(config.speaking_rate > 0.0 && config.speaking_rate.is_finite()) {
            return Err(config_err(format!(
                "speaking rate must be positive, got {}",
                config.speaking_rate
            )));
        }
        if config.abandon_after == 0 {
            return Err(config_err("abandonment timeout must be positive".into()));
        }
        if config.max_words == 0 || !(config.temperature > 0.0) {
            return Err(config_err("max_words must be >= 1 and temperature > 0".into()));
        }
        let generator = match &config.backend {
            BackendConfig::Template => MessageGenerator::template(config.speaking_rate),
            BackendConfig::External { target, timeout } => MessageGenerator::external(
                ExternalClient::new(target.clone(), *timeout),
                config.speaking_rate,
            ),
        };
        Ok(Self {
            weights: config.weights,
            thresholds: config.thresholds,
            keywords: Lexicon::default_keywords(),
            lexicon: Lexicon::default_distress(),
            engine: CallEngine::new(),
            policies: PolicyRegistry::new(),
            profiles: BTreeMap::new(),
            generator,
            waiters: BTreeMap::new(),
            timers: BTreeMap::new(),
            timer_seq: 0,
            log: TraceLog::new(),
            now: 0,
            line: 0,
            config,
        })
    }

    /// Processes all events in `(at, line)` order, then drains timers.
    pub fn run(mut self, events: &[SimEvent]) -> Result<Vec<TraceRecord>, SimError> {
        let mut events: Vec<&SimEvent> = events.iter().collect();
        events.sort_by_key(|e| (e.at, e.line));

        let backend = match &self.config.backend {
            BackendConfig::Template => "template",
            BackendConfig::External { .. } => "external",
        };
        let w = self.weights.as_array();
        self.trace(
            Component::Sim,
            "START",
            vec![
                ("backend", backend.into()),
                ("rng_seed", self.config.rng_seed.to_string()),
                ("weights", format!("{},{},{},{}", w[0], w[1], w[2], w[3])),
                (
                    "thresholds",
                    format!(
                        "{},{},{}",
                        self.thresholds.connect(),
                        self.thresholds.voice(),
                        self.thresholds.text()
                    ),
                ),
                ("speaking_rate", self.config.speaking_rate.to_string()),
            ],
        );

        let mut next = 0;
        let mut last_input = 0;
        loop {
            let input_at = events.get(next).map(|e| e.at);
            let timer_at = self.timers.first_key_value().map(|((t, _), _)| *t);
            let take_timer = match (input_at, timer_at) {
                (None, None) => break,
                (Some(a), Some(t)) => t <= a,
                (None, Some(_)) => true,
                (Some(_), None) => false,
            };
            if take_timer {
                let ((at, _), timer) = self.timers.pop_first().expect("timer present");
                self.now = at;
                let line = match &timer {
                    Timer::BurstDone { line, .. } | Timer::AbandonCheck { line, .. } => *line,
                };
                self.line = line;
                self.fire(timer).map_err(|kind| SimError { line, kind })?;
            } else {
                let ev = events[next];
                next += 1;
                self.now = ev.at;
                last_input = ev.at;
                self.line = ev.line;
                self.handle(&ev.kind).map_err(|kind| SimError {
                    line: ev.line,
                    kind,
                })?;
            }
        }
        // timers that found nothing to do do not extend the run
        self.now = self.log.last_at().unwrap_or(0).max(last_input);
        self.trace(Component::Sim, "END", vec![]);
        Ok(self.log.into_records())
    }

    fn trace(&mut self, component: Component, event: &'static str, details: Vec<(&'static str, String)>) {
        self.log.push(self.now, component, event, details);
    }

    fn schedule(&mut self, at: Seconds, timer: Timer) {
        self.timer_seq += 1;
        self.timers.insert((at, self.timer_seq), timer);
    }

    fn transition(&mut self, session: u64, event: CallEvent) -> Step {
        let from = self
            .engine
            .session(session)
            .map(|s| s.state)
            .ok_or(CallError::UnknownSession(session))?;
        let updated = self.engine.apply(session, event, self.now)?;
        self.trace(
            Component::Call,
            "STATE",
            vec![
                ("session", session.to_string()),
                ("from", from.to_string()),
                ("to", updated.state.to_string()),
                ("event", event.to_string()),
            ],
        );
        if !updated.state.is_waiting() {
            self.waiters.remove(&session);
        }
        Ok(())
    }

    fn touch(&mut self, session: u64) {
        let now = self.now;
        if let Some(w) = self.waiters.get_mut(&session) {
            w.last_activity = now;
            let deadline = now + self.config.abandon_after;
            let line = self.line;
            self.schedule(deadline, Timer::AbandonCheck { session, line });
        }
    }

    fn handle(&mut self, kind: &EventKind) -> Step {
        match kind {
            EventKind::RegisterSubscriber { id, profile } => {
                self.engine.register(id.clone())?;
                self.profiles.insert(id.clone(), profile.clone());
                let home = profile
                    .usual_locations
                    .first()
                    .map(ToString::to_string)
                    .unwrap_or_default();
                self.trace(
                    Component::Sim,
                    "SUBSCRIBER",
                    vec![
                        ("id", id.to_string()),
                        ("home", home),
                        ("usual_hours", hours_label(profile)),
                        ("resting_hr", profile.resting_heart_rate.to_string()),
                        ("usual_moving", u8::from(profile.usual_moving).to_string()),
                    ],
                );
            }
            EventKind::SetPolicy(policy) => {
                self.policies.insert(policy.clone());
                self.trace(
                    Component::Policy,
                    "SET",
                    vec![
                        ("callee", policy.callee.to_string()),
                        ("t", policy.burst_seconds.to_string()),
                        ("G", policy.gap_seconds.to_string()),
                        ("N", policy.max_bursts.to_string()),
                        ("approved", join_ids(&policy.approved_callers)),
                    ],
                );
            }
            EventKind::SetWeights(w) => {
                self.weights = *w;
                let a = w.as_array();
                self.trace(
                    Component::Priority,
                    "WEIGHTS",
                    vec![("weights", format!("{},{},{},{}", a[0], a[1], a[2], a[3]))],
                );
            }
            EventKind::SetThresholds(th) => {
                self.thresholds = *th;
                self.trace(
                    Component::Priority,
                    "THRESHOLDS",
                    vec![
                        ("connect", th.connect().to_string()),
                        ("voice", th.voice().to_string()),
                        ("text", th.text().to_string()),
                    ],
                );
            }
            EventKind::SetKeywords(lex) => {
                self.keywords = lex.clone();
                self.trace(Component::Incapacity, "KEYWORDS", vec![]);
            }
            EventKind::SetLexicon(lex) => {
                self.lexicon = lex.clone();
                self.trace(Component::Incapacity, "LEXICON", vec![]);
            }
            EventKind::PlaceCall {
                caller,
                callee,
                spec,
            } => self.place_call(caller, callee, spec)?,
            EventKind::HangUp(who) => self.hang_up(who)?,
            EventKind::Answer(who) => self.answer(who)?,
            EventKind::BurstAttempt {
                caller,
                content,
                keywords,
                image,
            } => self.burst(caller, content, keywords.as_deref(), image.as_deref())?,
            EventKind::MediaDescription {
                caller,
                kind,
                description,
            } => self.media(caller, *kind, description),
            EventKind::Dismiss(callee) => self.dismiss(callee)?,
        }
        Ok(())
    }

    fn context_for(&self, caller: &SubscriberId, spec: &CallSpec) -> Result<CallerContext, SimErrorKind> {
        let profile = self
            .profiles
            .get(caller)
            .ok_or_else(|| CallError::UnknownSubscriber(caller.clone()))?;
        let location = spec
            .location
            .or_else(|| profile.usual_locations.first().copied())
            .unwrap_or(crate::priority::Point { x: 0.0, y: 0.0 });
        let hour = spec
            .hour
            .or_else(|| profile.usual_hours().next())
            .unwrap_or(0);
        Ok(CallerContext::new(
            location,
            spec.location_type.unwrap_or(LocationType::Home),
            hour,
            spec.heart_rate,
            spec.speed,
        )?)
    }

    fn place_call(&mut self, caller: &SubscriberId, callee: &SubscriberId, spec: &CallSpec) -> Step {
        let session = self.engine.place_call(caller, callee, self.now)?;
        let sid = session.session_id;
        self.trace(
            Component::Call,
            "PLACED",
            vec![
                ("session", sid.to_string()),
                ("caller", caller.to_string()),
                ("callee", callee.to_string()),
                ("state", session.state.to_string()),
            ],
        );
        if session.state != SessionState::Waiting {
            return Ok(());
        }

        let ctx = self.context_for(caller, spec)?;
        let profile = &self.profiles[caller];
        let assessment = EmergencyAssessment::assess(
            &ctx,
            profile,
            &self.config.factors,
            &self.weights,
            &self.thresholds,
        );
        let f = assessment.factor_scores;
        self.trace(
            Component::Priority,
            "ASSESSED",
            vec![
                ("session", sid.to_string()),
                ("location", f6(f.location)),
                ("timing", f6(f.timing)),
                ("health", f6(f.health)),
                ("activity", f6(f.activity)),
                ("score", f6(assessment.emergency_score)),
                ("tier", assessment.tier.to_string()),
            ],
        );

        let policy = self.policies.get_policy(callee);
        let decision = route_waiting_call(&session, &assessment, &policy)?;
        self.trace(
            Component::Call,
            "ROUTED",
            vec![
                ("session", sid.to_string()),
                ("decision", decision.kind.to_string()),
                ("tier", decision.tier.to_string()),
                ("reason", decision.reason.to_string()),
            ],
        );
        self.engine.set_queue_tier(sid, decision.tier);
        self.waiters.insert(
            sid,
            Waiter {
                decision,
                ledger: None,
                location_type: spec.location_type,
                media: Vec::new(),
                last_activity: self.now,
                in_flight: 0,
            },
        );

        match decision.kind {
            DecisionKind::ConnectOverride => {
                if let Some(current) = self.engine.current_call(callee).map(|s| s.session_id) {
                    self.engine.hold(current);
                    self.trace(
                        Component::Call,
                        "HELD",
                        vec![("session", current.to_string()), ("by", sid.to_string())],
                    );
                }
                self.transition(sid, CallEvent::Override)?;
            }
            DecisionKind::PermitVoiceBurst | DecisionKind::PermitTextBurstWithBeep => {
                self.transition(sid, CallEvent::PermitBurst)?;
                if let Some(w) = self.waiters.get_mut(&sid) {
                    w.ledger = Some(BurstLedger::new(sid, policy.clone()));
                }
                self.trace(
                    Component::Scheduler,
                    "LEDGER_OPEN",
                    vec![
                        ("session", sid.to_string()),
                        ("t", policy.burst_seconds.to_string()),
                        ("G", policy.gap_seconds.to_string()),
                        ("N", policy.max_bursts.to_string()),
                    ],
                );
                self.touch(sid);
            }
            DecisionKind::StandardWaiting => self.touch(sid),
        }
        Ok(())
    }

    fn resume_if_idle(&mut self, who: &SubscriberId) {
        if self.engine.current_call(who).is_some() {
            return;
        }
        if let Some(held) = self.engine.held_call(who).map(|s| s.session_id) {
            self.engine.resume(held);
            self.trace(Component::Call, "RESUMED", vec![("session", held.to_string())]);
        }
    }

    fn hang_up(&mut self, who: &SubscriberId) -> Step {
        if !self.engine.is_registered(who) {
            return Err(CallError::UnknownSubscriber(who.clone()).into());
        }
        let target = self
            .engine
            .current_call(who)
            .or_else(|| self.engine.held_call(who))
            .or_else(|| self.engine.waiting_call_from(who))
            .cloned();
        let Some(session) = target else {
            self.trace(
                Component::Call,
                "IGNORED",
                vec![("action", "hangup".into()), ("who", who.to_string())],
            );
            return Ok(());
        };
        self.transition(session.session_id, CallEvent::HangUp)?;
        if session.state.is_connected() {
            self.resume_if_idle(&session.caller);
            self.resume_if_idle(&session.callee);
        }
        Ok(())
    }

    fn answer(&mut self, who: &SubscriberId) -> Step {
        if !self.engine.is_registered(who) {
            return Err(CallError::UnknownSubscriber(who.clone()).into());
        }
        let Some(next) = self.engine.queue_order(who).first().copied() else {
            self.trace(
                Component::Call,
                "IGNORED",
                vec![("action", "answer".into()), ("who", who.to_string())],
            );
            return Ok(());
        };
        if let Some(current) = self.engine.current_call(who).map(|s| s.session_id) {
            self.engine.hold(current);
            self.trace(
                Component::Call,
                "HELD",
                vec![("session", current.to_string()), ("by", next.to_string())],
            );
        }
        self.transition(next, CallEvent::Answer)
    }

    fn dismiss(&mut self, callee: &SubscriberId) -> Step {
        let mut dismissed = Vec::new();
        let mut to_wait = Vec::new();
        for sid in self.engine.queue_order(callee) {
            let Some(w) = self.waiters.get_mut(&sid) else { continue };
            let Some(ledger) = w.ledger.as_mut() else { continue };
            if ledger.is_exhausted() {
                continue;
            }
            ledger.dismiss();
            dismissed.push(sid.to_string());
            if w.in_flight == 0 {
                to_wait.push(sid);
            }
        }
        self.trace(
            Component::Scheduler,
            "DISMISSED",
            vec![("callee", callee.to_string()), ("sessions", dismissed.join(","))],
        );
        for sid in to_wait {
            if self.engine.session(sid).map(|s| s.state) == Some(SessionState::BurstPermitted) {
                self.transition(sid, CallEvent::Timeout)?;
                self.touch(sid);
            }
        }
        Ok(())
    }

    fn media(&mut self, caller: &SubscriberId, kind: MediaKind, description: &str) {
        let Some(sid) = self.engine.waiting_call_from(caller).map(|s| s.session_id) else {
            self.trace(
                Component::Incapacity,
                "IGNORED",
                vec![("action", "media".into()), ("who", caller.to_string())],
            );
            return;
        };
        let signal = flag_media(description, kind, &self.lexicon);
        let (modality, strength, evidence) = match &signal {
            Some(s) => (s.modality.to_string(), s.strength, s.evidence.clone()),
            None => (crate::incapacity::Modality::from(kind).to_string(), 0.0, String::new()),
        };
        if let Some(w) = self.waiters.get_mut(&sid) {
            w.media.push((kind, description.to_string(), signal));
        }
        self.trace(
            Component::Incapacity,
            "MEDIA",
            vec![
                ("session", sid.to_string()),
                ("modality", modality),
                ("strength", format!("{strength:.2}")),
                ("evidence", evidence),
            ],
        );
        self.touch(sid);
    }

    fn burst(
        &mut self,
        caller: &SubscriberId,
        content: &BurstContent,
        keywords: Option<&str>,
        image: Option<&str>,
    ) -> Step {
        if !self.engine.is_registered(caller) {
            return Err(CallError::UnknownSubscriber(caller.clone()).into());
        }
        let Some(sid) = self.engine.waiting_call_from(caller).map(|s| s.session_id) else {
            self.trace(
                Component::Scheduler,
                "DENY",
                vec![("caller", caller.to_string()), ("reason", "NotWaiting".into())],
            );
            return Ok(());
        };
        self.touch(sid);
        let now = self.now;
        let waiter = self.waiters.get_mut(&sid).expect("waiting session has a waiter");
        let Some(ledger) = waiter.ledger.as_mut() else {
            self.trace(
                Component::Scheduler,
                "DENY",
                vec![("session", sid.to_string()), ("reason", "NotAdmitted".into())],
            );
            return Ok(());
        };
        let permit = match ledger.request_burst(now) {
            BurstDecision::Deny(reason) => {
                let mut details = vec![("session", sid.to_string()), ("reason", reason.to_string())];
                if let DenyReason::GapNotElapsed { eligible_at } = reason {
                    details.push(("eligible_at", eligible_at.to_string()));
                }
                self.trace(Component::Scheduler, "DENY", details);
                return Ok(());
            }
            BurstDecision::Permit(p) => p,
        };
        let t = ledger.policy().burst_seconds;
        let tier_kind = waiter.decision.kind;
        let location_type = waiter.location_type;
        let media = std::mem::take(&mut waiter.media);
        self.trace(
            Component::Scheduler,
            "PERMIT",
            vec![
                ("session", sid.to_string()),
                ("burst", permit.sequence.to_string()),
                ("window_end", permit.window_end.to_string()),
            ],
        );

        let transcript = match content {
            BurstContent::Transcript(text) if !text.trim().is_empty() => Some(text.as_str()),
            _ => None,
        };
        let mut signals = Vec::new();
        signals.extend(detect_silence(BurstWindow {
            duration: t,
            speech_present: transcript.is_some(),
        })?);
        if let Some(text) = transcript {
            signals.extend(detect_keywords(text, &self.keywords));
        }
        if let Some(kw) = keywords {
            signals.extend(detect_keywords(kw, &self.keywords));
        }
        if let Some(img) = image {
            signals.extend(flag_media(img, MediaKind::Image, &self.lexicon));
        }
        signals.extend(media.iter().filter_map(|(_, _, s)| s.clone()));
        let verdict = assess_incapacity(&signals);
        self.trace(
            Component::Incapacity,
            "VERDICT",
            vec![
                ("session", sid.to_string()),
                ("incapacitated", u8::from(verdict.incapacitated).to_string()),
                ("confidence", format!("{:.2}", verdict.confidence)),
                ("signals", signals_label(&verdict.contributing)),
            ],
        );

        let payload = if verdict.incapacitated {
            let describe = |kind: MediaKind| {
                let parts: Vec<&str> = media
                    .iter()
                    .filter(|(k, _, _)| *k == kind)
                    .map(|(_, d, _)| d.as_str())
                    .chain(image.filter(|_| kind == MediaKind::Image))
                    .collect();
                (!parts.is_empty()).then(|| parts.join(". "))
            };
            let bundle = SeedBundle {
                keywords: keywords.map(str::to_string),
                gesture_desc: describe(MediaKind::Gesture),
                image_desc: describe(MediaKind::Image),
                video_desc: describe(MediaKind::Video),
                background_speech: transcript.map(str::to_string),
                location_type: location_type.map(|l| l.to_string()),
                ..Default::default()
            };
            match compose_seed(&bundle) {
                Ok(seed) => Some(BurstPayload::Generated(self.generate(sid, &seed, t)?)),
                Err(GeneratorError::EmptyBundle) => {
                    self.trace(
                        Component::Generator,
                        "GEN_SKIPPED",
                        vec![("session", sid.to_string()), ("reason", "empty_bundle".into())],
                    );
                    None
                }
                Err(e) => return Err(e.into()),
            }
        } else {
            transcript.map(|text| {
                let msg = GeneratedMessage::new(text, self.config.speaking_rate, crate::generator::Backend::Template);
                BurstPayload::CallerVoice(fit_to_duration(&msg, t, self.config.speaking_rate).text)
            })
        };
        let payload = match (tier_kind, payload) {
            (DecisionKind::PermitTextBurstWithBeep, Some(p)) => {
                Some(BurstPayload::TextWithBeep(p.text().to_string()))
            }
            (_, p) => p,
        };
        let duration = match &payload {
            Some(p) => GeneratedMessage::new(p.text(), self.config.speaking_rate, crate::generator::Backend::Template)
                .burst_seconds()
                .min(t),
            None => t,
        };
        let record = BurstRecord {
            session_id: sid,
            sequence: permit.sequence,
            start: now,
            duration,
            payload,
        };
        let waiter = self.waiters.get_mut(&sid).expect("waiter still present");
        let ledger = waiter.ledger.as_mut().expect("ledger still present");
        ledger.record_burst(&record)?;
        waiter.in_flight += 1;
        let line = self.line;
        self.schedule(record.end(), Timer::BurstDone { record, line });
        Ok(())
    }

    fn generate(&mut self, sid: u64, seed: &str, t: Seconds) -> Result<GeneratedMessage, SimErrorKind> {
        let params = GenerationParams {
            max_words: self.config.max_words,
            temperature: self.config.temperature,
            sampling: self.config.sampling,
            rng_seed: self.config.rng_seed,
        };
        let out = self.generator.generate(seed, &params)?;
        if let Some(err) = &out.fallback {
            self.trace(
                Component::Generator,
                "GEN_FALLBACK",
                vec![
                    ("session", sid.to_string()),
                    ("reason", err.kind().into()),
                    ("detail", err.to_string()),
                ],
            );
        }
        let msg = out.message;
        self.trace(
            Component::Generator,
            "GEN_MESSAGE",
            vec![
                ("session", sid.to_string()),
                ("backend", msg.backend.to_string()),
                ("words", msg.word_count.to_string()),
                ("seconds", format!("{:.2}", msg.estimated_speech_seconds)),
                ("seed", seed.to_string()),
                ("text", msg.text.clone()),
            ],
        );
        Ok(fit_to_duration(&msg, t, self.generator.speaking_rate()))
    }

    fn fire(&mut self, timer: Timer) -> Step {
        match timer {
            Timer::BurstDone { record, .. } => {
                let sid = record.session_id;
                let mut details = vec![
                    ("session", sid.to_string()),
                    ("burst", record.sequence.to_string()),
                    ("start", record.start.to_string()),
                    ("duration", record.duration.to_string()),
                ];
                match &record.payload {
                    Some(p) => {
                        details.push(("payload", p.kind().into()));
                        if let BurstPayload::Generated(m) = p {
                            details.push(("backend", m.backend.to_string()));
                        }
                        details.push(("text", p.text().to_string()));
                        self.trace(Component::Scheduler, "BURST_SENT", details);
                    }
                    None => self.trace(Component::Scheduler, "BURST_WINDOW_SILENT", details),
                }
                let Some(w) = self.waiters.get_mut(&sid) else {
                    return Ok(());
                };
                w.in_flight -= 1;
                let done = w.in_flight == 0 && w.ledger.as_ref().is_some_and(BurstLedger::is_exhausted);
                if done && self.engine.session(sid).map(|s| s.state) == Some(SessionState::BurstPermitted) {
                    self.transition(sid, CallEvent::Timeout)?;
                }
                self.touch(sid);
            }
            Timer::AbandonCheck { session, .. } => {
                let Some(w) = self.waiters.get(&session) else {
                    return Ok(());
                };
                if w.in_flight > 0 || w.last_activity + self.config.abandon_after != self.now {
                    return Ok(());
                }
                self.trace(
                    Component::Call,
                    "ABANDONED",
                    vec![
                        ("session", session.to_string()),
                        ("idle", self.config.abandon_after.to_string()),
                    ],
                );
                if self.engine.session(session).map(|s| s.state) == Some(SessionState::BurstPermitted) {
                    self.transition(session, CallEvent::Timeout)?;
                }
                self.transition(session, CallEvent::Timeout)?;
            }
        }
        Ok(())
    }
}

/// Runs `events` under `config` and returns the trace.
pub fn run(events: &[SimEvent], config: &SimConfig) -> Result<Vec<TraceRecord>, SimError> {
    Simulator::new(config.clone())?.run(events)
}

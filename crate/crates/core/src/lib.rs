//! Call-waiting voice bursts.
//!
//! A deterministic engine for routing a waiting call toward a busy callee:
//! the waiting caller may be connected directly, allowed to send short voice
//! bursts, allowed to send a text burst with a beep, or left in ordinary call
//! waiting. The decision comes from a callee-side pre-approval list and a
//! contextual emergency score. When the caller cannot speak, a generated
//! emergency message replaces the caller's voice.
//!
//! Everything runs on a virtual clock inside [`sim`], which reads line-based
//! scenario files and emits a byte-stable trace.

pub mod call_engine;
pub mod generator;
pub mod ids;
pub mod incapacity;
pub mod policy;
pub mod priority;
pub mod scheduler;
pub mod sim;
mod text;

pub use call_engine::{
    route_waiting_call, CallEngine, CallError, CallEvent, CallSession, DecisionKind,
    DecisionReason, RoutingDecision, SessionState,
};
pub use generator::{
    compose_seed, fit_to_duration, Backend, GeneratedMessage, GenerationParams, GeneratorError,
    MessageGenerator, SeedBundle,
};
pub use ids::{Seconds, SubscriberId};
pub use incapacity::{
    assess_incapacity, detect_keywords, detect_silence, flag_media, BurstWindow,
    IncapacityError, IncapacityVerdict, Lexicon, MediaKind, Modality, ModalitySignal,
};
pub use policy::{BurstPolicy, PolicyError, PolicyRegistry};
pub use priority::{
    classify_tier, emergency_score, BaselineProfile, CallerContext, EmergencyAssessment,
    FactorConstants, FactorScores, LocationType, Point, PriorityError, PriorityTier,
    TierThresholds, Weights,
};
pub use scheduler::{
    BurstDecision, BurstLedger, BurstPayload, BurstRecord, DenyReason, Permit, SchedulerError,
};

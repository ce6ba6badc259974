//! Discrete-event simulation of waiting calls and bursts.

mod runner;
pub mod scenario;
pub mod trace;

pub use runner::{run, BackendConfig, SimConfig, SimError, SimErrorKind, Simulator};
pub use scenario::{parse_profile, parse_scenario, BurstContent, CallSpec, EventKind, ScenarioError, SimEvent};
pub use trace::{render_trace, Component, TraceRecord};

//! Emergency message generation.
//!
//! Contextual inputs are flattened into a labelled seed string by
//! [`compose_seed`], turned into a message by a backend, and trimmed by
//! [`fit_to_duration`] so that it can be spoken inside one burst.

pub mod external;
mod template;

use std::fmt;
use std::time::Duration;

use thiserror::Error;

use crate::ids::Seconds;
use crate::text::{truncate_to_words, word_count};

pub use external::{ExternalClient, ExternalTarget};
pub use template::template_text;

pub const DEFAULT_SPEAKING_RATE: f64 = 2.5;
pub const DEFAULT_EXTERNAL_TIMEOUT: Duration = Duration::from_secs(2);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeneratorError {
    #[error("seed bundle has no fields")]
    EmptyBundle,
    #[error("seed text is empty")]
    EmptySeed,
    #[error("external generator timed out")]
    ExternalTimeout,
    #[error("external generator unavailable: {0}")]
    ExternalUnavailable(String),
    #[error("external generator refused: {0}")]
    ExternalRejected(String),
    #[error("external generator protocol violation: {0}")]
    Protocol(String),
}

impl GeneratorError {
    /// Short token used in trace records.
    pub fn kind(&self) -> &'static str {
        match self {
            GeneratorError::EmptyBundle => "empty_bundle",
            GeneratorError::EmptySeed => "empty_seed",
            GeneratorError::ExternalTimeout => "timeout",
            GeneratorError::ExternalUnavailable(_) => "unavailable",
            GeneratorError::ExternalRejected(_) => "rejected",
            GeneratorError::Protocol(_) => "protocol",
        }
    }
}

/// Contextual inputs for a generated message. Fields are emitted in
/// declaration order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SeedBundle {
    pub keywords: Option<String>,
    pub gesture_desc: Option<String>,
    pub image_desc: Option<String>,
    pub video_desc: Option<String>,
    pub background_speech: Option<String>,
    pub background_noise_desc: Option<String>,
    pub context_summary: Option<String>,
    pub location_type: Option<String>,
}

impl SeedBundle {
    fn labelled(&self) -> [(&'static str, Option<&String>); 8] {
        [
            ("keywords", self.keywords.as_ref()),
            ("gesture", self.gesture_desc.as_ref()),
            ("image", self.image_desc.as_ref()),
            ("video", self.video_desc.as_ref()),
            ("speech", self.background_speech.as_ref()),
            ("noise", self.background_noise_desc.as_ref()),
            ("context", self.context_summary.as_ref()),
            ("location", self.location_type.as_ref()),
        ]
    }
}

/// `label: value` pairs for every present field, joined by `"; "`. Blank
/// fields count as absent.
pub fn compose_seed(bundle: &SeedBundle) -> Result<String, GeneratorError> {
    let parts: Vec<String> = bundle
        .labelled()
        .into_iter()
        .filter_map(|(label, v)| {
            let v = v?.trim();
            (!v.is_empty()).then(|| format!("{label}: {v}"))
        })
        .collect();
    if parts.is_empty() {
        return Err(GeneratorError::EmptyBundle);
    }
    Ok(parts.join("; "))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationParams {
    /// Upper bound on generated words.
    pub max_words: u32,
    pub temperature: f64,
    pub sampling: bool,
    pub rng_seed: u64,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            max_words: 50,
            temperature: 0.9,
            sampling: true,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Template,
    External,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Template => "template",
            Backend::External => "external",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedMessage {
    pub text: String,
    pub word_count: usize,
    pub estimated_speech_seconds: f64,
    pub backend: Backend,
}

impl GeneratedMessage {
    pub fn new(text: impl Into<String>, speaking_rate: f64, backend: Backend) -> Self {
        let text = text.into();
        let word_count = word_count(&text);
        Self {
            estimated_speech_seconds: word_count as f64 / speaking_rate,
            text,
            word_count,
            backend,
        }
    }

    /// Whole seconds of burst time this message occupies, at least one.
    pub fn burst_seconds(&self) -> Seconds {
        (self.estimated_speech_seconds.ceil() as Seconds).max(1)
    }
}

/// Number of words that fit in `t` seconds at `speaking_rate`.
pub fn word_budget(t: Seconds, speaking_rate: f64) -> usize {
    (t as f64 * speaking_rate).floor() as usize
}

/// Shortens `msg` so it can be spoken within `t` seconds. Whole sentences
/// are kept when possible.
pub fn fit_to_duration(msg: &GeneratedMessage, t: Seconds, speaking_rate: f64) -> GeneratedMessage {
    let budget = word_budget(t, speaking_rate);
    if msg.word_count <= budget {
        return GeneratedMessage::new(msg.text.clone(), speaking_rate, msg.backend);
    }
    GeneratedMessage::new(
        truncate_to_words(&msg.text, budget),
        speaking_rate,
        msg.backend,
    )
}

/// Outcome of one generation request.
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub message: GeneratedMessage,
    /// Set when the external backend failed and the template was used.
    pub fallback: Option<GeneratorError>,
}

enum Engine {
    Template,
    External(ExternalClient),
}

/// Produces messages from seeds with one configured backend.
pub struct MessageGenerator {
    engine: Engine,
    speaking_rate: f64,
}

impl MessageGenerator {
    pub fn template(speaking_rate: f64) -> Self {
        Self {
            engine: Engine::Template,
            speaking_rate,
        }
    }

    pub fn external(client: ExternalClient, speaking_rate: f64) -> Self {
        Self {
            engine: Engine::External(client),
            speaking_rate,
        }
    }

    pub fn speaking_rate(&self) -> f64 {
        self.speaking_rate
    }

    pub fn generate(
        &mut self,
        seed: &str,
        params: &GenerationParams,
    ) -> Result<Generation, GeneratorError> {
        if seed.trim().is_empty() {
            return Err(GeneratorError::EmptySeed);
        }
        let budget = params.max_words.max(1) as usize;
        let template = |rate| {
            GeneratedMessage::new(
                truncate_to_words(&template_text(seed), budget),
                rate,
                Backend::Template,
            )
        };
        match &mut self.engine {
            Engine::Template => Ok(Generation {
                message: template(self.speaking_rate),
                fallback: None,
            }),
            Engine::External(client) => match client.generate(seed, params) {
                Ok(text) => Ok(Generation {
                    message: GeneratedMessage::new(
                        truncate_to_words(&text, budget),
                        self.speaking_rate,
                        Backend::External,
                    ),
                    fallback: None,
                }),
                Err(err) => Ok(Generation {
                    message: template(self.speaking_rate),
                    fallback: Some(err),
                }),
            },
        }
    }
}

//! Deciding whether a waiting caller is unable to speak.
//!
//! Each detector turns one modality into an optional [`ModalitySignal`].
//! [`assess_incapacity`] fuses them by taking the strongest signal; a
//! strength of 0.5 or more means the caller is treated as incapacitated.

use std::fmt;

use thiserror::Error;

use crate::ids::Seconds;
use crate::text::{contains_phrase, normalize};

pub const INCAPACITY_THRESHOLD: f64 = 0.5;

pub const DEFAULT_KEYWORDS: [&str; 3] = ["help", "can't speak", "cant speak"];

pub const DEFAULT_DISTRESS_LEXICON: [&str; 7] = [
    "fire",
    "accident",
    "blood",
    "collapsed",
    "smoke",
    "intruder",
    "faint",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IncapacityError {
    #[error("burst window must last at least one second")]
    InvalidWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modality {
    Keyword,
    Silence,
    ImageDescription,
    VideoDescription,
    Gesture,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Keyword => "Keyword",
            Modality::Silence => "Silence",
            Modality::ImageDescription => "Image",
            Modality::VideoDescription => "Video",
            Modality::Gesture => "Gesture",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The media modalities that arrive as textual descriptions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MediaKind {
    Image,
    Video,
    Gesture,
}

impl From<MediaKind> for Modality {
    fn from(kind: MediaKind) -> Self {
        match kind {
            MediaKind::Image => Modality::ImageDescription,
            MediaKind::Video => Modality::VideoDescription,
            MediaKind::Gesture => Modality::Gesture,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModalitySignal {
    pub modality: Modality,
    pub strength: f64,
    pub evidence: String,
}

/// A permitted burst window as heard by the callee side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BurstWindow {
    pub duration: Seconds,
    pub speech_present: bool,
}

/// Phrase set used by [`detect_keywords`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    phrases: Vec<String>,
}

impl Lexicon {
    /// Builds a lexicon from phrases, normalizing case and whitespace.
    /// Empty phrases are dropped; duplicates keep their first position.
    pub fn new<I, S>(phrases: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut out: Vec<String> = Vec::new();
        for p in phrases {
            let p = normalize(p.as_ref());
            if !p.is_empty() && !out.contains(&p) {
                out.push(p);
            }
        }
        Self { phrases: out }
    }

    pub fn default_keywords() -> Self {
        Self::new(DEFAULT_KEYWORDS)
    }

    pub fn default_distress() -> Self {
        Self::new(DEFAULT_DISTRESS_LEXICON)
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    /// Phrases found in `text` on word boundaries, in lexicon order.
    pub fn matches(&self, text: &str) -> Vec<&str> {
        let text = normalize(text);
        self.phrases
            .iter()
            .filter(|p| contains_phrase(&text, p))
            .map(String::as_str)
            .collect()
    }
}

pub fn detect_keywords(transcript: &str, keywords: &Lexicon) -> Option<ModalitySignal> {
    let found = keywords.matches(transcript);
    if found.is_empty() {
        return None;
    }
    Some(ModalitySignal {
        modality: Modality::Keyword,
        strength: 1.0,
        evidence: found.join(","),
    })
}

pub fn detect_silence(window: BurstWindow) -> Result<Option<ModalitySignal>, IncapacityError> {
    if window.duration == 0 {
        return Err(IncapacityError::InvalidWindow);
    }
    if window.speech_present {
        return Ok(None);
    }
    Ok(Some(ModalitySignal {
        modality: Modality::Silence,
        strength: 1.0,
        evidence: format!("no speech in {}s window", window.duration),
    }))
}

/// Each matched distress term adds 0.5, capped at 1.0.
pub fn flag_media(description: &str, kind: MediaKind, lexicon: &Lexicon) -> Option<ModalitySignal> {
    let found = lexicon.matches(description);
    if found.is_empty() {
        return None;
    }
    Some(ModalitySignal {
        modality: kind.into(),
        strength: (found.len() as f64 / 2.0).min(1.0),
        evidence: found.join(","),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncapacityVerdict {
    pub incapacitated: bool,
    pub confidence: f64,
    pub contributing: Vec<ModalitySignal>,
}

pub fn assess_incapacity(signals: &[ModalitySignal]) -> IncapacityVerdict {
    let contributing: Vec<ModalitySignal> =
        signals.iter().filter(|s| s.strength > 0.0).cloned().collect();
    let confidence = contributing
        .iter()
        .map(|s| s.strength)
        .fold(0.0, f64::max);
    IncapacityVerdict {
        incapacitated: confidence >= INCAPACITY_THRESHOLD,
        confidence,
        contributing,
    }
}

//! Contextual emergency scoring.
//!
//! Four anomaly factors compare the caller's current context against a
//! baseline profile. Each factor lands in `[0, 1]`; a normalized weighted
//! average gives the emergency score, and three thresholds split the score
//! into a [`PriorityTier`].

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PriorityError {
    #[error("hour of day must be in 0..=23, got {0}")]
    HourOutOfRange(u32),
    #[error("heart rate must be in [20, 250] bpm, got {0}")]
    HeartRateOutOfRange(f64),
    #[error("moving speed must be non-negative, got {0}")]
    NegativeSpeed(f64),
    #[error("resting heart rate must be in [30, 120] bpm, got {0}")]
    RestingHeartRateOutOfRange(f64),
    #[error("baseline profile needs at least one usual hour")]
    NoUsualHours,
    #[error("all weights are zero")]
    ZeroWeights,
    #[error("weights must be finite and non-negative, got {0:?}")]
    InvalidWeights([f64; 4]),
    #[error("thresholds must satisfy 0 < text < voice < connect <= 1, got connect={connect} voice={voice} text={text}")]
    InvalidThresholds { connect: f64, voice: f64, text: f64 },
    #[error("coordinate must be finite")]
    NonFiniteCoordinate,
    #[error("unknown location type {0:?}")]
    UnknownLocationType(String),
}

/// A position in the flat scenario plane, kilometres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Result<Self, PriorityError> {
        if x.is_finite() && y.is_finite() {
            Ok(Self { x, y })
        } else {
            Err(PriorityError::NonFiniteCoordinate)
        }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LocationType {
    Home,
    Office,
    Highway,
    Hospital,
    Bank,
    Isolated,
    Other,
}

impl LocationType {
    pub const ALL: [LocationType; 7] = [
        LocationType::Home,
        LocationType::Office,
        LocationType::Highway,
        LocationType::Hospital,
        LocationType::Bank,
        LocationType::Isolated,
        LocationType::Other,
    ];

    pub fn is_high_risk(self) -> bool {
        matches!(
            self,
            LocationType::Highway | LocationType::Hospital | LocationType::Isolated
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LocationType::Home => "Home",
            LocationType::Office => "Office",
            LocationType::Highway => "Highway",
            LocationType::Hospital => "Hospital",
            LocationType::Bank => "Bank",
            LocationType::Isolated => "Isolated",
            LocationType::Other => "Other",
        }
    }
}

impl FromStr for LocationType {
    type Err = PriorityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| PriorityError::UnknownLocationType(s.to_string()))
    }
}

impl fmt::Display for LocationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What is known about the caller at the moment the call is placed.
#[derive(Debug, Clone, PartialEq)]
pub struct CallerContext {
    pub location: Point,
    pub location_type: LocationType,
    pub hour_of_day: u32,
    /// Beats per minute, when a wearable reports one.
    pub heart_rate: Option<f64>,
    /// Metres per second, when motion data is available.
    pub moving_speed: Option<f64>,
}

impl CallerContext {
    pub fn new(
        location: Point,
        location_type: LocationType,
        hour_of_day: u32,
        heart_rate: Option<f64>,
        moving_speed: Option<f64>,
    ) -> Result<Self, PriorityError> {
        if hour_of_day > 23 {
            return Err(PriorityError::HourOutOfRange(hour_of_day));
        }
        if let Some(hr) = heart_rate {
            if !(20.0..=250.0).contains(&hr) {
                return Err(PriorityError::HeartRateOutOfRange(hr));
            }
        }
        if let Some(speed) = moving_speed {
            if !(speed >= 0.0 && speed.is_finite()) {
                return Err(PriorityError::NegativeSpeed(speed));
            }
        }
        Ok(Self {
            location,
            location_type,
            hour_of_day,
            heart_rate,
            moving_speed,
        })
    }
}

/// The caller's historical normal.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineProfile {
    pub usual_locations: Vec<Point>,
    /// Bit `h` set when hour `h` is a usual calling hour.
    usual_hours: u32,
    pub resting_heart_rate: f64,
    pub usual_moving: bool,
}

impl BaselineProfile {
    pub fn new(
        usual_locations: Vec<Point>,
        usual_hours: impl IntoIterator<Item = u32>,
        resting_heart_rate: f64,
        usual_moving: bool,
    ) -> Result<Self, PriorityError> {
        let mut mask = 0u32;
        for h in usual_hours {
            if h > 23 {
                return Err(PriorityError::HourOutOfRange(h));
            }
            mask |= 1 << h;
        }
        if mask == 0 {
            return Err(PriorityError::NoUsualHours);
        }
        if !(30.0..=120.0).contains(&resting_heart_rate) {
            return Err(PriorityError::RestingHeartRateOutOfRange(
                resting_heart_rate,
            ));
        }
        Ok(Self {
            usual_locations,
            usual_hours: mask,
            resting_heart_rate,
            usual_moving,
        })
    }

    /// Inclusive hour range; wraps past midnight when `from > to`.
    pub fn hour_range(from: u32, to: u32) -> Vec<u32> {
        if from <= to {
            (from..=to).collect()
        } else {
            (from..24).chain(0..=to).collect()
        }
    }

    pub fn usual_hours(&self) -> impl Iterator<Item = u32> + '_ {
        (0..24).filter(move |h| self.is_usual_hour(*h))
    }

    pub fn is_usual_hour(&self, hour: u32) -> bool {
        hour < 24 && self.usual_hours & (1 << hour) != 0
    }
}

/// Normalization constants for the four factor formulas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorConstants {
    /// Distance from the nearest usual location that scores 1.0.
    pub location_km: f64,
    /// Circular hour distance that scores 1.0.
    pub timing_hours: f64,
    /// Heart-rate excess over resting that scores 1.0.
    pub heart_rate_span: f64,
    /// Speed that scores 1.0 for a caller who is normally stationary.
    pub speed_mps: f64,
}

impl Default for FactorConstants {
    fn default() -> Self {
        Self {
            location_km: 5.0,
            timing_hours: 6.0,
            heart_rate_span: 60.0,
            speed_mps: 10.0,
        }
    }
}

pub fn location_anomaly(
    ctx: &CallerContext,
    profile: &BaselineProfile,
    k: &FactorConstants,
) -> f64 {
    if ctx.location_type.is_high_risk() {
        return 1.0;
    }
    let nearest = profile
        .usual_locations
        .iter()
        .map(|p| p.distance(&ctx.location))
        .fold(f64::INFINITY, f64::min);
    if nearest.is_infinite() {
        // no usual locations on record
        return 0.0;
    }
    (nearest / k.location_km).min(1.0)
}

pub fn timing_anomaly(ctx: &CallerContext, profile: &BaselineProfile, k: &FactorConstants) -> f64 {
    let hour = ctx.hour_of_day;
    if profile.is_usual_hour(hour) {
        return 0.0;
    }
    let gap = profile
        .usual_hours()
        .map(|u| {
            let d = hour.abs_diff(u);
            d.min(24 - d)
        })
        .min()
        .unwrap_or(0);
    (f64::from(gap) / k.timing_hours).min(1.0)
}

pub fn health_anomaly(ctx: &CallerContext, profile: &BaselineProfile, k: &FactorConstants) -> f64 {
    match ctx.heart_rate {
        None => 0.0,
        Some(hr) => ((hr - profile.resting_heart_rate) / k.heart_rate_span).clamp(0.0, 1.0),
    }
}

pub fn activity_anomaly(
    ctx: &CallerContext,
    profile: &BaselineProfile,
    k: &FactorConstants,
) -> f64 {
    match ctx.moving_speed {
        Some(speed) if !profile.usual_moving => (speed / k.speed_mps).min(1.0),
        _ => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorScores {
    pub location: f64,
    pub timing: f64,
    pub health: f64,
    pub activity: f64,
}

impl FactorScores {
    pub fn compute(ctx: &CallerContext, profile: &BaselineProfile, k: &FactorConstants) -> Self {
        Self {
            location: location_anomaly(ctx, profile, k),
            timing: timing_anomaly(ctx, profile, k),
            health: health_anomaly(ctx, profile, k),
            activity: activity_anomaly(ctx, profile, k),
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.location, self.timing, self.health, self.activity]
    }
}

/// Non-negative factor weights, in location/timing/health/activity order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights([f64; 4]);

impl Weights {
    pub fn new(w: [f64; 4]) -> Result<Self, PriorityError> {
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(PriorityError::InvalidWeights(w));
        }
        if w.iter().sum::<f64>() <= 0.0 {
            return Err(PriorityError::ZeroWeights);
        }
        Ok(Self(w))
    }

    pub fn as_array(&self) -> [f64; 4] {
        self.0
    }
}

impl Default for Weights {
    fn default() -> Self {
        Self([1.0; 4])
    }
}

/// `Σ wᵢ·sᵢ / Σ wᵢ`, clamped into `[0, 1]` against rounding.
pub fn emergency_score(factors: &FactorScores, weights: &Weights) -> f64 {
    let w = weights.as_array();
    let s = factors.as_array();
    let num: f64 = w.iter().zip(s.iter()).map(|(w, s)| w * s).sum();
    let den: f64 = w.iter().sum();
    (num / den).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PriorityTier {
    None,
    Low,
    Medium,
    Highest,
}

impl PriorityTier {
    pub fn as_str(self) -> &'static str {
        match self {
            PriorityTier::None => "None",
            PriorityTier::Low => "Low",
            PriorityTier::Medium => "Medium",
            PriorityTier::Highest => "Highest",
        }
    }
}

impl fmt::Display for PriorityTier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TierThresholds {
    connect: f64,
    voice: f64,
    text: f64,
}

impl TierThresholds {
    pub fn new(connect: f64, voice: f64, text: f64) -> Result<Self, PriorityError> {
        if 0.0 < text && text < voice && voice < connect && connect <= 1.0 {
            Ok(Self {
                connect,
                voice,
                text,
            })
        } else {
            Err(PriorityError::InvalidThresholds {
                connect,
                voice,
                text,
            })
        }
    }

    pub fn connect(&self) -> f64 {
        self.connect
    }

    pub fn voice(&self) -> f64 {
        self.voice
    }

    pub fn text(&self) -> f64 {
        self.text
    }
}

impl Default for TierThresholds {
    fn default() -> Self {
        Self {
            connect: 0.9,
            voice: 0.6,
            text: 0.3,
        }
    }
}

/// Lower edges are inclusive.
pub fn classify_tier(score: f64, th: &TierThresholds) -> PriorityTier {
    if score >= th.connect {
        PriorityTier::Highest
    } else if score >= th.voice {
        PriorityTier::Medium
    } else if score >= th.text {
        PriorityTier::Low
    } else {
        PriorityTier::None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmergencyAssessment {
    pub factor_scores: FactorScores,
    pub weights: Weights,
    pub emergency_score: f64,
    pub tier: PriorityTier,
}

impl EmergencyAssessment {
    pub fn assess(
        ctx: &CallerContext,
        profile: &BaselineProfile,
        constants: &FactorConstants,
        weights: &Weights,
        thresholds: &TierThresholds,
    ) -> Self {
        let factor_scores = FactorScores::compute(ctx, profile, constants);
        let emergency_score = emergency_score(&factor_scores, weights);
        Self {
            factor_scores,
            weights: *weights,
            emergency_score,
            tier: classify_tier(emergency_score, thresholds),
        }
    }

    /// Assessment for a caller whose combined score is already known. Every
    /// factor is set to `score`, which the weighted average reproduces.
    pub fn from_score(score: f64, thresholds: &TierThresholds) -> Self {
        let score = score.clamp(0.0, 1.0);
        Self {
            factor_scores: FactorScores {
                location: score,
                timing: score,
                health: score,
                activity: score,
            },
            weights: Weights::default(),
            emergency_score: score,
            tier: classify_tier(score, thresholds),
        }
    }
}

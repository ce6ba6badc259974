//! Scenario file parser.
//!
//! One directive per line, optionally prefixed with `at <seconds>`.
//! Directives without a prefix happen at time 0. `#` starts a comment and
//! double quotes group a value containing spaces.
//!
//! ```text
//! subscriber C home=(0,0) usual_hours=8-22 resting_hr=70 usual_moving=0
//! policy A t=5 G=30 N=3 approve=C
//! weights 1,1,1,1
//! thresholds 0.9,0.6,0.3
//! keywords "help,can't speak"
//! lexicon "fire,smoke,accident"
//! at 10 call C A loctype=Highway hour=3 hr=130 speed=14
//! at 10 burst C transcript="the house is on fire" keywords="House Fire"
//! at 20 burst C silence image="smoke in kitchen"
//! at 25 media C video="person collapsed"
//! at 30 hangup A
//! at 30 answer A
//! at 40 dismiss A
//! ```

use std::collections::BTreeSet;

use thiserror::Error;

use crate::ids::{Seconds, SubscriberId};
use crate::incapacity::{Lexicon, MediaKind};
use crate::policy::{
    BurstPolicy, DEFAULT_BURST_SECONDS, DEFAULT_GAP_SECONDS, DEFAULT_MAX_BURSTS,
};
use crate::priority::{BaselineProfile, LocationType, Point, TierThresholds, Weights};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown directive {directive:?}")]
    UnknownDirective { line: usize, directive: String },
    #[error("line {line}: bad argument: {message}")]
    BadArgument { line: usize, message: String },
}

impl ScenarioError {
    pub fn line(&self) -> usize {
        match self {
            ScenarioError::Parse { line, .. }
            | ScenarioError::UnknownDirective { line, .. }
            | ScenarioError::BadArgument { line, .. } => *line,
        }
    }
}

/// Context fields given on a `call` line. Absent fields fall back to the
/// caller's baseline when the call is placed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CallSpec {
    pub location: Option<Point>,
    pub location_type: Option<LocationType>,
    pub hour: Option<u32>,
    pub heart_rate: Option<f64>,
    pub speed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BurstContent {
    Transcript(String),
    Silence,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    RegisterSubscriber {
        id: SubscriberId,
        profile: BaselineProfile,
    },
    SetPolicy(BurstPolicy),
    SetWeights(Weights),
    SetThresholds(TierThresholds),
    SetKeywords(Lexicon),
    SetLexicon(Lexicon),
    PlaceCall {
        caller: SubscriberId,
        callee: SubscriberId,
        spec: CallSpec,
    },
    HangUp(SubscriberId),
    Answer(SubscriberId),
    BurstAttempt {
        caller: SubscriberId,
        content: BurstContent,
        keywords: Option<String>,
        image: Option<String>,
    },
    MediaDescription {
        caller: SubscriberId,
        kind: MediaKind,
        description: String,
    },
    Dismiss(SubscriberId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimEvent {
    pub at: Seconds,
    /// 1-based line in the scenario file.
    pub line: usize,
    pub kind: EventKind,
}

/// Splits a line into tokens. Quotes group characters and are removed;
/// inside quotes `\"` and `\\` escape. Returns `Err` on an open quote.
fn tokenize(line: &str) -> Result<Vec<String>, String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    let mut in_token = false;
    let mut quoted = false;
    let mut chars = line.chars();
    while let Some(c) = chars.next() {
        if quoted {
            match c {
                '"' => quoted = false,
                '\\' => match chars.next() {
                    Some(e) => cur.push(e),
                    None => return Err("dangling escape".into()),
                },
                c => cur.push(c),
            }
            continue;
        }
        match c {
            '#' => break,
            '"' => {
                quoted = true;
                in_token = true;
            }
            c if c.is_whitespace() => {
                if in_token {
                    tokens.push(std::mem::take(&mut cur));
                    in_token = false;
                }
            }
            c => {
                cur.push(c);
                in_token = true;
            }
        }
    }
    if quoted {
        return Err("unterminated quote".into());
    }
    if in_token {
        tokens.push(cur);
    }
    Ok(tokens)
}

struct LineParser {
    line: usize,
}

impl LineParser {
    fn bad(&self, message: impl Into<String>) -> ScenarioError {
        ScenarioError::BadArgument {
            line: self.line,
            message: message.into(),
        }
    }

    fn syntax(&self, message: impl Into<String>) -> ScenarioError {
        ScenarioError::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    fn id(&self, token: Option<&String>, what: &str) -> Result<SubscriberId, ScenarioError> {
        let token = token.ok_or_else(|| self.syntax(format!("missing {what}")))?;
        SubscriberId::new(token.as_str()).map_err(|e| self.bad(e.to_string()))
    }

    fn int(&self, key: &str, v: &str) -> Result<i64, ScenarioError> {
        v.parse::<i64>()
            .map_err(|_| self.bad(format!("{key} expects an integer, got {v:?}")))
    }

    fn num(&self, key: &str, v: &str) -> Result<f64, ScenarioError> {
        v.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| self.bad(format!("{key} expects a number, got {v:?}")))
    }

    fn flag(&self, key: &str, v: &str) -> Result<bool, ScenarioError> {
        match v {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(self.bad(format!("{key} expects 0 or 1, got {v:?}"))),
        }
    }

    fn hour(&self, key: &str, v: &str) -> Result<u32, ScenarioError> {
        v.parse::<u32>()
            .ok()
            .filter(|h| *h <= 23)
            .ok_or_else(|| self.bad(format!("{key} expects an hour 0-23, got {v:?}")))
    }

    fn point(&self, key: &str, v: &str) -> Result<Point, ScenarioError> {
        let inner = v
            .strip_prefix('(')
            .and_then(|s| s.strip_suffix(')'))
            .ok_or_else(|| self.bad(format!("{key} expects (x,y), got {v:?}")))?;
        let (x, y) = inner
            .split_once(',')
            .ok_or_else(|| self.bad(format!("{key} expects (x,y), got {v:?}")))?;
        let p = Point::new(self.num(key, x.trim())?, self.num(key, y.trim())?);
        p.map_err(|e| self.bad(e.to_string()))
    }

    fn list<const K: usize>(&self, what: &str, v: Option<&String>) -> Result<[f64; K], ScenarioError> {
        let v = v.ok_or_else(|| self.syntax(format!("missing {what}")))?;
        let parts: Vec<&str> = v.split(',').map(str::trim).collect();
        if parts.len() != K {
            return Err(self.bad(format!("{what} expects {K} comma-separated values, got {v:?}")));
        }
        let mut out = [0.0; K];
        for (slot, p) in out.iter_mut().zip(parts) {
            *slot = self.num(what, p)?;
        }
        Ok(out)
    }

    /// `key=value` options after the positional arguments.
    fn options<'a>(
        &self,
        tokens: &'a [String],
        allowed: &[&str],
    ) -> Result<Vec<(&'a str, &'a str)>, ScenarioError> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for t in tokens {
            let (k, v) = t
                .split_once('=')
                .ok_or_else(|| self.syntax(format!("expected key=value, got {t:?}")))?;
            if !allowed.contains(&k) {
                return Err(self.bad(format!("unknown option {k:?}")));
            }
            if !seen.insert(k) {
                return Err(self.bad(format!("option {k:?} given twice")));
            }
            out.push((k, v));
        }
        Ok(out)
    }

    fn no_extra(&self, tokens: &[String]) -> Result<(), ScenarioError> {
        match tokens.first() {
            Some(t) => Err(self.syntax(format!("unexpected token {t:?}"))),
            None => Ok(()),
        }
    }

    fn subscriber(&self, args: &[String]) -> Result<EventKind, ScenarioError> {
        let id = self.id(args.first(), "subscriber id")?;
        let mut home = Point { x: 0.0, y: 0.0 };
        let mut hours = BaselineProfile::hour_range(8, 22);
        let mut resting = 70.0;
        let mut moving = false;
        let opts = self.options(
            args.get(1..).unwrap_or(&[]),
            &["home", "usual_hours", "resting_hr", "usual_moving"],
        )?;
        for (k, v) in opts {
            match k {
                "home" => home = self.point(k, v)?,
                "usual_hours" => {
                    hours = match v.split_once('-') {
                        Some((a, b)) => {
                            BaselineProfile::hour_range(self.hour(k, a)?, self.hour(k, b)?)
                        }
                        None => vec![self.hour(k, v)?],
                    }
                }
                "resting_hr" => resting = self.num(k, v)?,
                _ => moving = self.flag(k, v)?,
            }
        }
        let profile = BaselineProfile::new(vec![home], hours, resting, moving)
            .map_err(|e| self.bad(e.to_string()))?;
        Ok(EventKind::RegisterSubscriber { id, profile })
    }

    fn policy(&self, args: &[String]) -> Result<EventKind, ScenarioError> {
        let callee = self.id(args.first(), "callee")?;
        let mut t = DEFAULT_BURST_SECONDS as i64;
        let mut g = DEFAULT_GAP_SECONDS as i64;
        let mut n = i64::from(DEFAULT_MAX_BURSTS);
        let mut approved = BTreeSet::new();
        for (k, v) in self.options(args.get(1..).unwrap_or(&[]), &["t", "G", "N", "approve"])? {
            match k {
                "t" => t = self.int(k, v)?,
                "G" => g = self.int(k, v)?,
                "N" => n = self.int(k, v)?,
                _ => {
                    for part in v.split(',').filter(|p| !p.is_empty()) {
                        approved.insert(
                            SubscriberId::new(part).map_err(|e| self.bad(e.to_string()))?,
                        );
                    }
                }
            }
        }
        BurstPolicy::new(callee, t, g, n, approved)
            .map(EventKind::SetPolicy)
            .map_err(|e| self.bad(e.to_string()))
    }

    fn call(&self, args: &[String]) -> Result<EventKind, ScenarioError> {
        let caller = self.id(args.first(), "caller")?;
        let callee = self.id(args.get(1), "callee")?;
        let mut spec = CallSpec::default();
        let opts = self.options(
            args.get(2..).unwrap_or(&[]),
            &["loc", "loctype", "hour", "hr", "speed"],
        )?;
        for (k, v) in opts {
            match k {
                "loc" => spec.location = Some(self.point(k, v)?),
                "loctype" => {
                    spec.location_type =
                        Some(v.parse().map_err(|e: crate::priority::PriorityError| self.bad(e.to_string()))?)
                }
                "hour" => spec.hour = Some(self.hour(k, v)?),
                "hr" => {
                    let hr = self.num(k, v)?;
                    if !(20.0..=250.0).contains(&hr) {
                        return Err(self.bad(format!("hr must be in [20, 250], got {v}")));
                    }
                    spec.heart_rate = Some(hr);
                }
                _ => {
                    let speed = self.num(k, v)?;
                    if speed < 0.0 {
                        return Err(self.bad(format!("speed must be non-negative, got {v}")));
                    }
                    spec.speed = Some(speed);
                }
            }
        }
        Ok(EventKind::PlaceCall {
            caller,
            callee,
            spec,
        })
    }

    fn burst(&self, args: &[String]) -> Result<EventKind, ScenarioError> {
        let caller = self.id(args.first(), "caller")?;
        let rest = args.get(1..).unwrap_or(&[]);
        let (silence, rest) = match rest.first() {
            Some(t) if t == "silence" => (true, &rest[1..]),
            _ => (false, rest),
        };
        let mut transcript = None;
        let mut keywords = None;
        let mut image = None;
        for (k, v) in self.options(rest, &["transcript", "keywords", "image"])? {
            let v = Some(v.to_string());
            match k {
                "transcript" => transcript = v,
                "keywords" => keywords = v,
                _ => image = v,
            }
        }
        let content = match (silence, transcript) {
            (true, None) => BurstContent::Silence,
            (false, Some(t)) => BurstContent::Transcript(t),
            (true, Some(_)) => {
                return Err(self.bad("burst takes either silence or transcript, not both"))
            }
            (false, None) => return Err(self.syntax("burst needs transcript=\"...\" or silence")),
        };
        Ok(EventKind::BurstAttempt {
            caller,
            content,
            keywords,
            image,
        })
    }

    fn media(&self, args: &[String]) -> Result<EventKind, ScenarioError> {
        let caller = self.id(args.first(), "caller")?;
        let opts = self.options(args.get(1..).unwrap_or(&[]), &["image", "video", "gesture"])?;
        let [(k, v)] = opts.as_slice() else {
            return Err(self.syntax("media takes exactly one of image=, video=, gesture="));
        };
        let kind = match *k {
            "image" => MediaKind::Image,
            "video" => MediaKind::Video,
            _ => MediaKind::Gesture,
        };
        Ok(EventKind::MediaDescription {
            caller,
            kind,
            description: v.to_string(),
        })
    }

    fn phrases(&self, what: &str, args: &[String]) -> Result<Lexicon, ScenarioError> {
        let joined = args.join(",");
        let lex = Lexicon::new(joined.split(','));
        if lex.is_empty() {
            return Err(self.bad(format!("{what} needs at least one phrase")));
        }
        Ok(lex)
    }

    fn directive(&self, name: &str, args: &[String]) -> Result<EventKind, ScenarioError> {
        let one = |what: &str| -> Result<SubscriberId, ScenarioError> {
            let id = self.id(args.first(), what)?;
            self.no_extra(&args[1..])?;
            Ok(id)
        };
        match name {
            "subscriber" => self.subscriber(args),
            "policy" => self.policy(args),
            "weights" => {
                self.no_extra(args.get(1..).unwrap_or(&[]))?;
                let w = self.list::<4>("weights", args.first())?;
                Weights::new(w)
                    .map(EventKind::SetWeights)
                    .map_err(|e| self.bad(e.to_string()))
            }
            "thresholds" => {
                self.no_extra(args.get(1..).unwrap_or(&[]))?;
                let [c, v, t] = self.list::<3>("thresholds", args.first())?;
                TierThresholds::new(c, v, t)
                    .map(EventKind::SetThresholds)
                    .map_err(|e| self.bad(e.to_string()))
            }
            "keywords" => self.phrases("keywords", args).map(EventKind::SetKeywords),
            "lexicon" => self.phrases("lexicon", args).map(EventKind::SetLexicon),
            "call" => self.call(args),
            "burst" => self.burst(args),
            "media" => self.media(args),
            "hangup" => one("subscriber").map(EventKind::HangUp),
            "answer" => one("subscriber").map(EventKind::Answer),
            "dismiss" => one("callee").map(EventKind::Dismiss),
            other => Err(ScenarioError::UnknownDirective {
                line: self.line,
                directive: other.to_string(),
            }),
        }
    }
}

pub fn parse_scenario(input: &str) -> Result<Vec<SimEvent>, ScenarioError> {
    let mut events = Vec::new();
    for (idx, raw) in input.lines().enumerate() {
        let p = LineParser { line: idx + 1 };
        let tokens = tokenize(raw).map_err(|m| p.syntax(m))?;
        let Some(first) = tokens.first() else {
            continue;
        };
        let (at, rest) = if first == "at" {
            let t = tokens.get(1).ok_or_else(|| p.syntax("missing time after `at`"))?;
            let at = p.int("at", t)?;
            if at < 0 {
                return Err(p.bad(format!("time must be non-negative, got {at}")));
            }
            (at as Seconds, &tokens[2..])
        } else {
            (0, &tokens[..])
        };
        let name = rest
            .first()
            .ok_or_else(|| p.syntax("missing directive after time"))?;
        let kind = p.directive(name, &rest[1..])?;
        events.push(SimEvent {
            at,
            line: p.line,
            kind,
        });
    }
    Ok(events)
}

/// Parses a baseline profile file: the `subscriber` options
/// (`home=`, `usual_hours=`, `resting_hr=`, `usual_moving=`) spread over any
/// number of lines. Missing options take the same defaults as `subscriber`.
pub fn parse_profile(input: &str) -> Result<BaselineProfile, ScenarioError> {
    let mut args = vec!["profile".to_string()];
    let mut last_line = 1;
    for (idx, raw) in input.lines().enumerate() {
        let p = LineParser { line: idx + 1 };
        args.extend(tokenize(raw).map_err(|m| p.syntax(m))?);
        last_line = idx + 1;
    }
    match (LineParser { line: last_line }).subscriber(&args)? {
        EventKind::RegisterSubscriber { profile, .. } => Ok(profile),
        _ => unreachable!("subscriber always yields a registration"),
    }
}

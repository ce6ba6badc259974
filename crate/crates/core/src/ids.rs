use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Virtual time, in whole seconds since the start of a simulation.
pub type Seconds = u64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid subscriber id {0:?}: must be a non-empty ASCII token without whitespace")]
pub struct InvalidSubscriberId(pub String);

/// Short ASCII token naming a phone user, e.g. `A` or `C`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SubscriberId(String);

impl SubscriberId {
    pub fn new(id: impl Into<String>) -> Result<Self, InvalidSubscriberId> {
        let id = id.into();
        let valid = !id.is_empty()
            && id
                .chars()
                .all(|c| c.is_ascii() && !c.is_ascii_whitespace() && !c.is_ascii_control());
        if valid {
            Ok(Self(id))
        } else {
            Err(InvalidSubscriberId(id))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for SubscriberId {
    type Err = InvalidSubscriberId;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

impl fmt::Display for SubscriberId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

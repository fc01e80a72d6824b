//! The six-verb action schema shared by ground truths and model answers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::label::CellLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KeyId(pub u32);

impl fmt::Display for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verb {
    Start,
    MoveTo,
    PickUpKey,
    UseKey,
    UnlockAndOpenDoorTo,
    Rescue,
}

impl Verb {
    pub const ALL: [Verb; 6] = [
        Verb::Start,
        Verb::MoveTo,
        Verb::PickUpKey,
        Verb::UseKey,
        Verb::UnlockAndOpenDoorTo,
        Verb::Rescue,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Verb::Start => "start",
            Verb::MoveTo => "move_to",
            Verb::PickUpKey => "pick_up_key",
            Verb::UseKey => "use_key",
            Verb::UnlockAndOpenDoorTo => "unlock_and_open_door_to",
            Verb::Rescue => "rescue",
        }
    }
}

impl FromStr for Verb {
    type Err = ActionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Verb::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| ActionError::UnknownVerb(s.to_string()))
    }
}

/// Name of the person rescued at the goal.
pub const RESCUE_TARGET: &str = "Alice";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionError {
    #[error("unknown verb {0:?}")]
    UnknownVerb(String),
    #[error("verb {verb} does not take argument {arg:?}")]
    BadArgument { verb: &'static str, arg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Start(CellLabel),
    MoveTo(CellLabel),
    PickUpKey(KeyId),
    UseKey(KeyId),
    UnlockAndOpenDoorTo(CellLabel),
    Rescue,
}

impl Action {
    pub fn verb(&self) -> Verb {
        match self {
            Action::Start(_) => Verb::Start,
            Action::MoveTo(_) => Verb::MoveTo,
            Action::PickUpKey(_) => Verb::PickUpKey,
            Action::UseKey(_) => Verb::UseKey,
            Action::UnlockAndOpenDoorTo(_) => Verb::UnlockAndOpenDoorTo,
            Action::Rescue => Verb::Rescue,
        }
    }

    pub fn argument(&self) -> String {
        match self {
            Action::Start(c) | Action::MoveTo(c) | Action::UnlockAndOpenDoorTo(c) => c.to_string(),
            Action::PickUpKey(k) | Action::UseKey(k) => k.to_string(),
            Action::Rescue => RESCUE_TARGET.to_string(),
        }
    }

    /// Builds an action from a verb and an already unquoted, trimmed argument.
    pub fn from_parts(verb: &str, arg: &str) -> Result<Self, ActionError> {
        let verb: Verb = verb.parse()?;
        let bad = || ActionError::BadArgument {
            verb: verb.as_str(),
            arg: arg.to_string(),
        };
        let room = || arg.parse::<CellLabel>().map_err(|_| bad());
        let key = || {
            if arg.is_empty() || !arg.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            arg.parse::<u32>().map(KeyId).map_err(|_| bad())
        };
        Ok(match verb {
            Verb::Start => Action::Start(room()?),
            Verb::MoveTo => Action::MoveTo(room()?),
            Verb::UnlockAndOpenDoorTo => Action::UnlockAndOpenDoorTo(room()?),
            Verb::PickUpKey => Action::PickUpKey(key()?),
            Verb::UseKey => Action::UseKey(key()?),
            Verb::Rescue if arg == RESCUE_TARGET => Action::Rescue,
            Verb::Rescue => return Err(bad()),
        })
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "('{}', '{}')", self.verb().as_str(), self.argument())
    }
}

/// Canonical `[('verb', 'arg'), ...]` rendering.
pub fn render_actions(actions: &[Action]) -> String {
    let body: Vec<String> = actions.iter().map(ToString::to_string).collect();
    format!("[{}]", body.join(", "))
}

impl Serialize for Action {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        [self.verb().as_str().to_string(), self.argument()].serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Action {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let [verb, arg] = <[String; 2]>::deserialize(deserializer)?;
        Action::from_parts(&verb, &arg).map_err(serde::de::Error::custom)
    }
}

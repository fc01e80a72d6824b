//! Parsing model answers and executing them against world rules.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{Action, ActionError, KeyId};
use crate::label::CellLabel;
use crate::maze::Edge;
use crate::world::World;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolutionErrorKind {
    #[error("no \"Solution:\" marker")]
    NoMarker,
    #[error("expected {0}")]
    Expected(&'static str),
    #[error("unterminated quoted token")]
    UnterminatedQuote,
    #[error(transparent)]
    Action(#[from] ActionError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at byte {offset}")]
pub struct SolutionParseError {
    pub offset: usize,
    pub kind: SolutionErrorKind,
}

const MARKER: &str = "solution:";

fn closing_quotes(open: char) -> Option<&'static [char]> {
    match open {
        '\'' | '\u{2018}' | '\u{2019}' => Some(&['\'', '\u{2018}', '\u{2019}']),
        '"' | '\u{201C}' | '\u{201D}' => Some(&['"', '\u{201C}', '\u{201D}']),
        _ => None,
    }
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    // whitespace, backticks and a fence's info string
    fn skip_fence(&mut self) {
        loop {
            self.skip_ws();
            if self.rest().starts_with("```") {
                self.pos += 3;
                let line_end = self.rest().find('\n').unwrap_or(self.rest().len());
                self.pos += line_end;
            } else if self.peek() == Some('`') {
                self.bump();
            } else {
                return;
            }
        }
    }

    fn error(&self, kind: SolutionErrorKind) -> SolutionParseError {
        SolutionParseError { offset: self.pos, kind }
    }

    fn expect(&mut self, c: char, what: &'static str) -> Result<(), SolutionParseError> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.bump();
            Ok(())
        } else {
            Err(self.error(SolutionErrorKind::Expected(what)))
        }
    }

    fn token(&mut self) -> Result<&'a str, SolutionParseError> {
        self.skip_ws();
        let closers = self
            .peek()
            .and_then(closing_quotes)
            .ok_or_else(|| self.error(SolutionErrorKind::Expected("quoted token")))?;
        self.bump();
        let start = self.pos;
        let len = self
            .rest()
            .find(closers)
            .ok_or_else(|| self.error(SolutionErrorKind::UnterminatedQuote))?;
        self.pos += len;
        let token = &self.text[start..self.pos];
        self.bump();
        Ok(token.trim())
    }
}

/// Extracts the action list following the last `Solution:` marker
/// (case-insensitive).
pub fn parse_solution(raw: &str) -> Result<Vec<Action>, SolutionParseError> {
    let lowered = raw.to_ascii_lowercase();
    let marker = lowered.rfind(MARKER).ok_or(SolutionParseError {
        offset: 0,
        kind: SolutionErrorKind::NoMarker,
    })?;
    let mut cur = Cursor {
        text: raw,
        pos: marker + MARKER.len(),
    };
    cur.skip_fence();
    cur.expect('[', "'['")?;
    let mut actions = Vec::new();
    loop {
        cur.skip_ws();
        if cur.peek() == Some(']') {
            break;
        }
        let at = cur.pos;
        cur.expect('(', "'(' or ']'")?;
        let verb = cur.token()?;
        cur.expect(',', "','")?;
        let arg = cur.token()?;
        cur.skip_ws();
        if cur.peek() == Some(',') {
            cur.bump();
        }
        cur.expect(')', "')'")?;
        let action = Action::from_parts(verb, arg).map_err(|e| SolutionParseError {
            offset: at,
            kind: e.into(),
        })?;
        actions.push(action);
        cur.skip_ws();
        match cur.peek() {
            Some(',') => {
                cur.bump();
            }
            Some(']') => break,
            _ => return Err(cur.error(SolutionErrorKind::Expected("',' or ']'"))),
        }
    }
    Ok(actions)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationCategory {
    Start,
    Adjacency,
    LockedDoor,
    KeyUsage,
    UnlockSequence,
    Rescue,
    Parse,
}

impl ViolationCategory {
    pub const ALL: [ViolationCategory; 7] = [
        ViolationCategory::Start,
        ViolationCategory::Adjacency,
        ViolationCategory::LockedDoor,
        ViolationCategory::KeyUsage,
        ViolationCategory::UnlockSequence,
        ViolationCategory::Rescue,
        ViolationCategory::Parse,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ViolationCategory::Start => "start",
            ViolationCategory::Adjacency => "adjacency",
            ViolationCategory::LockedDoor => "locked_door",
            ViolationCategory::KeyUsage => "key_usage",
            ViolationCategory::UnlockSequence => "unlock_sequence",
            ViolationCategory::Rescue => "rescue",
            ViolationCategory::Parse => "parse",
        }
    }
}

impl fmt::Display for ViolationCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub step: usize,
    pub category: ViolationCategory,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub parsed_ok: bool,
    pub violations: Vec<Violation>,
    pub first_violation_step: Option<usize>,
    pub goal_reached: bool,
    pub exact_match: bool,
}

impl VerificationReport {
    pub fn parse_failure(detail: impl Into<String>) -> Self {
        Self {
            parsed_ok: false,
            violations: vec![Violation {
                step: 0,
                category: ViolationCategory::Parse,
                detail: detail.into(),
            }],
            first_violation_step: Some(0),
            goal_reached: false,
            exact_match: false,
        }
    }

    pub fn is_clean(&self) -> bool {
        self.parsed_ok && self.violations.is_empty() && self.goal_reached
    }
}

/// Mutable state while stepping through a sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorldState {
    pub current_room: CellLabel,
    pub held_keys: BTreeSet<KeyId>,
    pub opened_doors: BTreeSet<Edge>,
    /// Key just used, and the room it was used from.
    pub pending_unlock: Option<(KeyId, CellLabel)>,
    pub rescued: bool,
    pub step: usize,
}

impl WorldState {
    pub fn new(world: &World) -> Self {
        Self {
            current_room: world.start,
            held_keys: BTreeSet::new(),
            opened_doors: BTreeSet::new(),
            pending_unlock: None,
            rescued: false,
            step: 0,
        }
    }

    /// Applies one action. On a violation the state is left unchanged apart
    /// from the step counter and the cleared unlock arming.
    pub fn apply(&mut self, world: &World, action: &Action) -> Result<(), (ViolationCategory, String)> {
        use ViolationCategory as V;
        let step = self.step;
        let armed = self.pending_unlock.take();
        self.step += 1;
        let here = self.current_room;
        if step == 0 && !matches!(action, Action::Start(_)) {
            return Err((V::Start, format!("first action must be start, got {}", action.verb().as_str())));
        }
        if self.rescued {
            return Err((V::Rescue, "action after rescue".into()));
        }
        match *action {
            Action::Start(room) => {
                if step != 0 {
                    return Err((V::Start, "start repeated".into()));
                }
                if room != world.start {
                    return Err((V::Start, format!("Bob is in {}, not {room}", world.start)));
                }
            }
            Action::MoveTo(room) => {
                if !world.contains(room) || !world.is_connected(here, room) {
                    return Err((V::Adjacency, format!("{here} and {room} are not connected")));
                }
                if world.lock_on(here, room).is_some() && !self.opened_doors.contains(&Edge::new(here, room)) {
                    return Err((V::LockedDoor, format!("door {here}-{room} is locked")));
                }
                self.current_room = room;
            }
            Action::PickUpKey(key) => {
                if world.key_locations.get(&key) != Some(&here) {
                    return Err((V::KeyUsage, format!("key {key} is not in {here}")));
                }
                if !self.held_keys.insert(key) {
                    return Err((V::KeyUsage, format!("key {key} already held")));
                }
            }
            Action::UseKey(key) => {
                if !self.held_keys.contains(&key) {
                    return Err((V::KeyUsage, format!("key {key} not collected")));
                }
                let usable = world.locks.iter().any(|(edge, k)| {
                    *k == key && edge.touches(here) && !self.opened_doors.contains(edge)
                });
                if !usable {
                    return Err((V::KeyUsage, format!("key {key} opens no locked door at {here}")));
                }
                self.pending_unlock = Some((key, here));
            }
            Action::UnlockAndOpenDoorTo(room) => {
                let edge = Edge::new(here, room);
                let ok = match armed {
                    Some((key, from)) => {
                        from == here
                            && world.locks.get(&edge) == Some(&key)
                            && !self.opened_doors.contains(&edge)
                    }
                    None => false,
                };
                if !ok {
                    return Err((V::UnlockSequence, format!("door {here}-{room} not unlocked by the preceding use_key")));
                }
                self.opened_doors.insert(edge);
            }
            Action::Rescue => {
                if here != world.goal {
                    return Err((V::Rescue, format!("Alice is in {}, not {here}", world.goal)));
                }
                self.rescued = true;
            }
        }
        Ok(())
    }
}

/// Runs every action, recording each violation and skipping the offending
/// action. `exact_match` is left false; see [`evaluate`].
pub fn execute(actions: &[Action], world: &World) -> VerificationReport {
    let mut state = WorldState::new(world);
    let mut violations = Vec::new();
    for action in actions {
        let step = state.step;
        if let Err((category, detail)) = state.apply(world, action) {
            violations.push(Violation { step, category, detail });
        }
    }
    if actions.is_empty() {
        violations.push(Violation {
            step: 0,
            category: ViolationCategory::Start,
            detail: "empty action list".into(),
        });
    }
    VerificationReport {
        parsed_ok: true,
        first_violation_step: violations.first().map(|v| v.step),
        violations,
        goal_reached: state.rescued,
        exact_match: false,
    }
}

pub fn exact_match(pred: &[Action], gt: &[Action]) -> bool {
    pred == gt
}

/// Executes `pred` and fills in the exact-match flag against `gt`.
pub fn evaluate(pred: &[Action], world: &World, gt: &[Action]) -> VerificationReport {
    let mut report = execute(pred, world);
    report.exact_match = exact_match(pred, gt) && report.violations.is_empty() && report.goal_reached;
    report
}

/// Parses raw model text, then [`evaluate`]s it.
pub fn evaluate_text(raw: &str, world: &World, gt: &[Action]) -> (Option<Vec<Action>>, VerificationReport) {
    match parse_solution(raw) {
        Ok(actions) => {
            let report = evaluate(&actions, world, gt);
            (Some(actions), report)
        }
        Err(e) => (None, VerificationReport::parse_failure(e.to_string())),
    }
}

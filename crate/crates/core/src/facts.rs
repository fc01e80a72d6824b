//! Natural-language fact rendering, distractor injection and shuffling.

use std::collections::BTreeSet;

use num_rational::Ratio;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::KeyId;
use crate::label::CellLabel;
use crate::maze::{Edge, MazeGraph};
use crate::oracle;
use crate::seed::stage_rng;
use crate::task::{Door, KeyInfo};
use crate::world::World;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Supporting,
    Distracting,
}

/// One atomic fact. The rendered sentence is a pure function of the kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FactKind {
    OpenConnection(CellLabel, CellLabel),
    LockedConnection(CellLabel, CellLabel),
    RequiresKey(CellLabel, CellLabel, KeyId),
    KeyLocation(KeyId, CellLabel),
    AgentStart(CellLabel),
    AgentGoal(CellLabel),
}

impl FactKind {
    pub fn name(&self) -> &'static str {
        match self {
            FactKind::OpenConnection(..) => "open_connection",
            FactKind::LockedConnection(..) => "locked_connection",
            FactKind::RequiresKey(..) => "requires_key",
            FactKind::KeyLocation(..) => "key_location",
            FactKind::AgentStart(_) => "agent_start",
            FactKind::AgentGoal(_) => "agent_goal",
        }
    }

    pub fn text(&self) -> String {
        match self {
            FactKind::OpenConnection(a, b) => {
                format!("Room {a} and {b} are connected by an open door.")
            }
            FactKind::LockedConnection(a, b) => {
                format!("Room {a} and {b} are connected by a closed and locked door.")
            }
            FactKind::RequiresKey(a, b, k) => {
                format!("The locked door between {a} and {b} requires key {k}.")
            }
            FactKind::KeyLocation(k, room) => format!("Key {k} is in room {room}."),
            FactKind::AgentStart(room) => format!("Bob is in room {room}."),
            FactKind::AgentGoal(room) => format!("Alice is in room {room}."),
        }
    }

    /// Connection edge, for the kinds that describe one.
    pub fn edge(&self) -> Option<Edge> {
        match *self {
            FactKind::OpenConnection(a, b)
            | FactKind::LockedConnection(a, b)
            | FactKind::RequiresKey(a, b, _) => Some(Edge::new(a, b)),
            _ => None,
        }
    }

    pub fn key(&self) -> Option<KeyId> {
        match *self {
            FactKind::RequiresKey(_, _, k) | FactKind::KeyLocation(k, _) => Some(k),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unrecognised fact sentence {0:?}")]
pub struct FactParseError(pub String);

/// Parses one sentence (trailing period optional).
///
/// Besides the canonical templates this accepts the shorter
/// `Door between X and Y requires key K.` phrasing.
pub fn parse_fact(sentence: &str) -> Result<FactKind, FactParseError> {
    let s = sentence.trim();
    let s = s.strip_suffix('.').unwrap_or(s);
    let fail = || FactParseError(sentence.to_string());
    let room = |t: &str| t.parse::<CellLabel>().map_err(|_| fail());
    let key = |t: &str| {
        if t.is_empty() || !t.bytes().all(|b| b.is_ascii_digit()) {
            return Err(fail());
        }
        t.parse::<u32>().map(KeyId).map_err(|_| fail())
    };
    let pair = |t: &str| -> Result<(CellLabel, CellLabel), FactParseError> {
        let (a, b) = t.split_once(" and ").ok_or_else(fail)?;
        Ok((room(a)?, room(b)?))
    };
    if let Some(rest) = s.strip_prefix("Room ") {
        if let Some(rooms) = rest.strip_suffix(" are connected by an open door") {
            let (a, b) = pair(rooms)?;
            return Ok(FactKind::OpenConnection(a, b));
        }
        if let Some(rooms) = rest.strip_suffix(" are connected by a closed and locked door") {
            let (a, b) = pair(rooms)?;
            return Ok(FactKind::LockedConnection(a, b));
        }
        return Err(fail());
    }
    if let Some(rest) = s
        .strip_prefix("The locked door between ")
        .or_else(|| s.strip_prefix("Door between "))
    {
        let (rooms, k) = rest.split_once(" requires key ").ok_or_else(fail)?;
        let (a, b) = pair(rooms)?;
        return Ok(FactKind::RequiresKey(a, b, key(k)?));
    }
    if let Some(rest) = s.strip_prefix("Key ") {
        let (k, r) = rest.split_once(" is in room ").ok_or_else(fail)?;
        return Ok(FactKind::KeyLocation(key(k)?, room(r)?));
    }
    if let Some(r) = s.strip_prefix("Bob is in room ") {
        return Ok(FactKind::AgentStart(room(r)?));
    }
    if let Some(r) = s.strip_prefix("Alice is in room ") {
        return Ok(FactKind::AgentGoal(room(r)?));
    }
    Err(fail())
}

/// Splits a fact paragraph into sentences and parses each one. A leading
/// `Maze Structure:` prefix is skipped.
pub fn parse_fact_text(text: &str) -> Result<Vec<FactKind>, FactParseError> {
    let body = text.trim();
    let body = body.strip_prefix("Maze Structure:").unwrap_or(body);
    body.split_terminator('.')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse_fact)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fact {
    pub role: Role,
    pub kind: FactKind,
}

impl Fact {
    pub fn supporting(kind: FactKind) -> Self {
        Self {
            role: Role::Supporting,
            kind,
        }
    }

    pub fn distracting(kind: FactKind) -> Self {
        Self {
            role: Role::Distracting,
            kind,
        }
    }

    pub fn text(&self) -> String {
        self.kind.text()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactList {
    pub facts: Vec<Fact>,
    pub shuffle_ratio: f64,
}

impl FactList {
    pub fn supporting_count(&self) -> usize {
        self.facts.iter().filter(|f| f.role == Role::Supporting).count()
    }

    pub fn distracting_count(&self) -> usize {
        self.facts.len() - self.supporting_count()
    }

    /// Distracting over supporting count, exact.
    pub fn noise_effective(&self) -> Ratio<u64> {
        let supporting = self.supporting_count() as u64;
        if supporting == 0 {
            return Ratio::from_integer(0);
        }
        Ratio::new(self.distracting_count() as u64, supporting)
    }

    pub fn texts(&self) -> Vec<String> {
        self.facts.iter().map(Fact::text).collect()
    }
}

/// Facts describing the true world, in canonical connection order.
///
/// Each locked door is followed directly by its key requirement and the
/// location of that key.
pub fn compile_supporting_facts(
    maze: &MazeGraph,
    doors: &[Door],
    keys: &[KeyInfo],
    start: CellLabel,
    goal: CellLabel,
) -> FactList {
    let mut facts = Vec::with_capacity(maze.edges().len() + 2 * doors.len() + 2);
    for &edge in maze.edges() {
        let (a, b) = (edge.lo(), edge.hi());
        match doors.iter().find(|d| d.edge == edge) {
            None => facts.push(Fact::supporting(FactKind::OpenConnection(a, b))),
            Some(door) => {
                facts.push(Fact::supporting(FactKind::LockedConnection(a, b)));
                facts.push(Fact::supporting(FactKind::RequiresKey(a, b, door.key_id)));
                if let Some(key) = keys.iter().find(|k| k.key_id == door.key_id) {
                    facts.push(Fact::supporting(FactKind::KeyLocation(key.key_id, key.location)));
                }
            }
        }
    }
    facts.push(Fact::supporting(FactKind::AgentStart(start)));
    facts.push(Fact::supporting(FactKind::AgentGoal(goal)));
    FactList {
        facts,
        shuffle_ratio: 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NoiseError {
    #[error("noise target {0} is outside [0, 1]")]
    OutOfRange(String),
    #[error("distractor pool exhausted: wanted {wanted} distracting facts, could place {placed}")]
    PoolExhausted { wanted: usize, placed: usize },
    #[error("noise can only be injected into an all-supporting fact list")]
    AlreadyNoisy,
}

/// Knobs for distractor generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NoiseOptions {
    /// Also draw open-door distractors on wall edges. Each candidate is kept
    /// only when the oracle optimum of the augmented world is unchanged.
    pub misleading_open_doors: bool,
}

/// Round-half-up of `noise_target * supporting`.
pub fn distractor_count(noise_target: f64, supporting: usize) -> usize {
    (noise_target * supporting as f64 + 0.5 + 1e-9).floor() as usize
}

pub fn inject_noise(
    facts: &FactList,
    world: &World,
    noise_target: f64,
    seed: u64,
) -> Result<FactList, NoiseError> {
    inject_noise_with(facts, world, noise_target, seed, NoiseOptions::default())
}

/// Adds inert distracting facts at seeded positions.
///
/// Phantom doors sit on grid walls that are not connections and require a
/// key that is never placed. Spurious keys are placed for ids that open
/// nothing, at most one per room.
pub fn inject_noise_with(
    facts: &FactList,
    world: &World,
    noise_target: f64,
    seed: u64,
    options: NoiseOptions,
) -> Result<FactList, NoiseError> {
    if !(0.0..=1.0).contains(&noise_target) {
        return Err(NoiseError::OutOfRange(noise_target.to_string()));
    }
    if facts.distracting_count() != 0 {
        return Err(NoiseError::AlreadyNoisy);
    }
    let wanted = distractor_count(noise_target, facts.supporting_count());
    if wanted == 0 {
        return Ok(facts.clone());
    }
    let mut rng = stage_rng(seed);

    let mut walls: Vec<Edge> = crate::maze::grid_edges(world.columns, world.rows)
        .into_iter()
        .filter(|e| !world.connections.contains(e))
        .collect();
    walls.shuffle(&mut rng);
    let key_rooms: BTreeSet<CellLabel> = world.key_locations.values().copied().collect();
    let mut rooms: Vec<CellLabel> = (0..world.rows)
        .flat_map(|r| (0..world.columns).map(move |c| (c, r + 1)))
        .map(|(c, r)| CellLabel::new(c, r).expect("row >= 1"))
        .filter(|c| !key_rooms.contains(c))
        .collect();
    rooms.shuffle(&mut rng);

    let mut used_keys: BTreeSet<KeyId> = world
        .locks
        .values()
        .chain(world.key_locations.keys())
        .copied()
        .collect();
    let mut fresh_key = move || {
        let mut id = 1;
        while used_keys.contains(&KeyId(id)) {
            id += 1;
        }
        used_keys.insert(KeyId(id));
        KeyId(id)
    };

    let baseline = if options.misleading_open_doors {
        oracle::bfs_optimal(world).ok()
    } else {
        None
    };
    let mut augmented = world.clone();

    let mut blocks: Vec<Vec<FactKind>> = Vec::new();
    let mut placed = 0;
    while placed < wanted {
        let remaining = wanted - placed;
        let can_phantom = remaining >= 2 && !walls.is_empty();
        let can_open = options.misleading_open_doors && !walls.is_empty();
        let can_key = !rooms.is_empty();
        let mut choices = Vec::with_capacity(3);
        if can_phantom {
            choices.push(0);
        }
        if can_key {
            choices.push(1);
        }
        if can_open {
            choices.push(2);
        }
        let Some(&choice) = choices.get(rng.random_range(0..choices.len().max(1))) else {
            break;
        };
        match choice {
            0 => {
                let wall = walls.pop().expect("checked");
                let key = fresh_key();
                augmented.connections.insert(wall);
                augmented.locks.insert(wall, key);
                blocks.push(vec![
                    FactKind::LockedConnection(wall.lo(), wall.hi()),
                    FactKind::RequiresKey(wall.lo(), wall.hi(), key),
                ]);
                placed += 2;
            }
            1 => {
                let room = rooms.pop().expect("checked");
                blocks.push(vec![FactKind::KeyLocation(fresh_key(), room)]);
                placed += 1;
            }
            _ => {
                let wall = walls.pop().expect("checked");
                let mut trial = augmented.clone();
                trial.connections.insert(wall);
                let keeps_optimum = match baseline {
                    Some(best) => oracle::bfs_optimal(&trial).ok() == Some(best),
                    None => false,
                };
                if keeps_optimum {
                    augmented = trial;
                    blocks.push(vec![FactKind::OpenConnection(wall.lo(), wall.hi())]);
                    placed += 1;
                }
            }
        }
    }
    if placed < wanted {
        return Err(NoiseError::PoolExhausted { wanted, placed });
    }

    let mut out = facts.facts.clone();
    for block in blocks {
        let at = rng.random_range(0..=out.len());
        out.splice(at..at, block.into_iter().map(Fact::distracting));
    }
    Ok(FactList {
        facts: out,
        shuffle_ratio: facts.shuffle_ratio,
    })
}

/// Permutes a uniformly chosen subset of `ceil(ratio * len)` positions.
pub fn shuffle_facts(facts: &FactList, shuffle_ratio: f64, seed: u64) -> FactList {
    let ratio = shuffle_ratio.clamp(0.0, 1.0);
    let len = facts.facts.len();
    let chosen = ((ratio * len as f64) - 1e-9).ceil().max(0.0) as usize;
    let chosen = chosen.min(len);
    let mut out = facts.facts.clone();
    if chosen > 1 {
        let mut rng = stage_rng(seed);
        let positions = index::sample(&mut rng, len, chosen).into_vec();
        let mut moved: Vec<Fact> = positions.iter().map(|&p| facts.facts[p]).collect();
        moved.shuffle(&mut rng);
        for (p, f) in positions.into_iter().zip(moved) {
            out[p] = f;
        }
    }
    FactList {
        facts: out,
        shuffle_ratio,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(s: &str) -> CellLabel {
        s.parse().unwrap()
    }

    #[test]
    fn templates_are_exact() {
        let (c3, d3) = (cell("C3"), cell("D3"));
        assert_eq!(
            FactKind::OpenConnection(cell("A1"), cell("B1")).text(),
            "Room A1 and B1 are connected by an open door."
        );
        assert_eq!(
            FactKind::LockedConnection(c3, d3).text(),
            "Room C3 and D3 are connected by a closed and locked door."
        );
        assert_eq!(
            FactKind::RequiresKey(c3, d3, KeyId(5)).text(),
            "The locked door between C3 and D3 requires key 5."
        );
        assert_eq!(FactKind::KeyLocation(KeyId(5), cell("E4")).text(), "Key 5 is in room E4.");
        assert_eq!(FactKind::AgentStart(cell("A2")).text(), "Bob is in room A2.");
        assert_eq!(FactKind::AgentGoal(cell("D5")).text(), "Alice is in room D5.");
    }

    #[test]
    fn parses_every_template_and_variant() {
        let kinds = [
            FactKind::OpenConnection(cell("C4"), cell("C3")),
            FactKind::LockedConnection(cell("B5"), cell("B4")),
            FactKind::RequiresKey(cell("B5"), cell("B4"), KeyId(3)),
            FactKind::KeyLocation(KeyId(16), cell("C5")),
            FactKind::AgentStart(cell("C5")),
            FactKind::AgentGoal(cell("D5")),
        ];
        for kind in kinds {
            assert_eq!(parse_fact(&kind.text()).unwrap(), kind);
        }
        assert_eq!(
            parse_fact("Door between C1 and C2 requires key 1.").unwrap(),
            FactKind::RequiresKey(cell("C1"), cell("C2"), KeyId(1))
        );
        for bad in ["Room A1 and B1 are adjacent.", "Key x is in room A1.", "Bob is in room a1.", ""] {
            assert!(parse_fact(bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn rounding_rule() {
        assert_eq!(distractor_count(0.0, 9), 0);
        assert_eq!(distractor_count(0.2, 9), 2);
        assert_eq!(distractor_count(1.0, 10), 10);
        assert_eq!(distractor_count(0.5, 3), 2);
        assert_eq!(distractor_count(0.2, 7), 1);
        assert_eq!(distractor_count(0.6, 5), 3);
    }

    fn two_room_world() -> (MazeGraph, World) {
        let maze = MazeGraph::from_edges(2, 1, [Edge::new(cell("A1"), cell("B1"))]).unwrap();
        let world = World::from_task(&maze, &[], &[], cell("A1"), cell("B1"));
        (maze, world)
    }

    #[test]
    fn two_rooms_no_doors() {
        let (maze, _) = two_room_world();
        let facts = compile_supporting_facts(&maze, &[], &[], cell("A1"), cell("B1"));
        assert_eq!(
            facts.texts(),
            [
                "Room A1 and B1 are connected by an open door.",
                "Bob is in room A1.",
                "Alice is in room B1."
            ]
        );
    }

    #[test]
    fn zero_noise_is_identity() {
        let (maze, world) = two_room_world();
        let facts = compile_supporting_facts(&maze, &[], &[], cell("A1"), cell("B1"));
        let noisy = inject_noise(&facts, &world, 0.0, 4).unwrap();
        assert_eq!(noisy, facts);
        assert_eq!(noisy.noise_effective(), Ratio::from_integer(0));
    }

    #[test]
    fn pool_exhaustion() {
        // 1x1 grid: no walls, one room, two supporting facts
        let maze = MazeGraph::from_edges(1, 1, []).unwrap();
        let a1 = cell("A1");
        let world = World::from_task(&maze, &[], &[], a1, a1);
        let facts = compile_supporting_facts(&maze, &[], &[], a1, a1);
        assert_eq!(
            inject_noise(&facts, &world, 1.0, 1),
            Err(NoiseError::PoolExhausted { wanted: 2, placed: 1 })
        );
        assert!(matches!(inject_noise(&facts, &world, 1.5, 1), Err(NoiseError::OutOfRange(_))));
    }

    #[test]
    fn shuffle_edges() {
        let maze = crate::maze::build_maze(4, 4, 3).unwrap();
        let facts = compile_supporting_facts(&maze, &[], &[], cell("A1"), cell("D4"));
        assert_eq!(shuffle_facts(&facts, 0.0, 9).facts, facts.facts);
        let half = shuffle_facts(&facts, 0.5, 3);
        assert_eq!(half, shuffle_facts(&facts, 0.5, 3));
        let full = shuffle_facts(&facts, 1.0, 3);
        let mut a = full.texts();
        let mut b = facts.texts();
        a.sort();
        b.sort();
        assert_eq!(a, b);
        assert_ne!(full.facts, facts.facts);
        // at most ceil(0.5 * 17) = 9 positions can move
        let moved = half.facts.iter().zip(&facts.facts).filter(|(x, y)| x != y).count();
        assert!(moved <= 9);
    }
}

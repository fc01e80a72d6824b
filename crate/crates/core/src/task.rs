//! Backward ("rewind") placement of keys and locked doors, and the forward
//! ground-truth solution derived from the resulting path skeleton.

use std::collections::{BTreeSet, VecDeque};

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{Action, KeyId};
use crate::label::CellLabel;
use crate::maze::{Edge, MazeError, MazeGraph};
use crate::seed::{derive_seed, stage_rng};

/// Default ceiling for requested backtracks.
pub const MAX_BACKTRACKS: u32 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Door {
    pub edge: Edge,
    pub key_id: KeyId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyInfo {
    pub key_id: KeyId,
    pub location: CellLabel,
    pub opens: Edge,
}

/// One tagged entry of the path skeleton, in forward (execution) order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SkeletonStep {
    Start(CellLabel),
    /// Walk along consecutive cells; the first cell is the current position.
    Move(Vec<CellLabel>),
    Pickup { cell: CellLabel, key: KeyId },
    Unlock { door: Edge, key: KeyId },
    Goal(CellLabel),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathSkeleton(pub Vec<SkeletonStep>);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rewind {
    pub doors: Vec<Door>,
    pub keys: Vec<KeyInfo>,
    pub skeleton: PathSkeleton,
    pub start: CellLabel,
    pub goal: CellLabel,
}

impl Rewind {
    pub fn backtracks(&self) -> u32 {
        self.doors.len() as u32
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaskError {
    #[error("requested {requested} backtracks, maximum is {max}")]
    TooManyBacktracks { requested: u32, max: u32 },
    #[error("could not reach exactly {wanted} backtracks in {attempts} attempts")]
    ExactBacktracksUnreachable { wanted: u32, attempts: u32 },
    #[error("inconsistent skeleton: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Maze(#[from] MazeError),
}

/// Cells reachable from `from` without crossing a locked door.
fn reachable_avoiding(maze: &MazeGraph, from: CellLabel, doors: &BTreeSet<Edge>) -> Vec<CellLabel> {
    let mut seen = vec![false; maze.cell_count()];
    let mut order = Vec::new();
    let mut queue = VecDeque::from([from]);
    seen[maze.index(from).expect("cell in maze")] = true;
    while let Some(cell) = queue.pop_front() {
        order.push(cell);
        for next in maze.neighbours(cell) {
            let i = maze.index(next).expect("cell in maze");
            if !seen[i] && !doors.contains(&Edge::new(cell, next)) {
                seen[i] = true;
                queue.push_back(next);
            }
        }
    }
    // row-major order keeps selection independent of traversal order
    order.sort_by_key(|c| maze.index(*c).expect("cell in maze"));
    order
}

/// Places up to `b_target` key/door pairs working backwards from a random goal.
///
/// Each round picks a key cell reachable from the current cell without
/// crossing an existing door, locks one edge of the path between them, and
/// moves the current cell to the key. The loop stops early when no other
/// cell is reachable. Finally a start cell is drawn among cells that reach
/// the last key cell door-free; the approach segment may be empty.
pub fn rewind_construct(maze: &MazeGraph, b_target: u32, seed: u64) -> Result<Rewind, TaskError> {
    rewind_construct_capped(maze, b_target, seed, MAX_BACKTRACKS)
}

pub fn rewind_construct_capped(
    maze: &MazeGraph,
    b_target: u32,
    seed: u64,
    max_backtracks: u32,
) -> Result<Rewind, TaskError> {
    if b_target > max_backtracks {
        return Err(TaskError::TooManyBacktracks {
            requested: b_target,
            max: max_backtracks,
        });
    }
    let mut rng = stage_rng(seed);
    let goal = maze.cell_at(rng.random_range(0..maze.cell_count()));
    let mut x = goal;
    let mut locked = BTreeSet::new();
    let mut doors = Vec::new();
    let mut keys = Vec::new();
    // collected backwards: (pickup cell, door, forward walk key cell -> x)
    let mut rounds: Vec<(CellLabel, Door, Vec<CellLabel>)> = Vec::new();

    for b in 0..b_target {
        let candidates: Vec<CellLabel> = reachable_avoiding(maze, x, &locked)
            .into_iter()
            .filter(|&c| c != x)
            .collect();
        let Some(&key_cell) = candidates.choose(&mut rng) else {
            break;
        };
        let walk = maze.tree_path(key_cell, x)?;
        let free: Vec<Edge> = walk
            .windows(2)
            .map(|w| Edge::new(w[0], w[1]))
            .filter(|e| !locked.contains(e))
            .collect();
        let Some(&edge) = free.choose(&mut rng) else {
            break;
        };
        let key_id = KeyId(b + 1);
        locked.insert(edge);
        let door = Door { edge, key_id };
        doors.push(door);
        keys.push(KeyInfo {
            key_id,
            location: key_cell,
            opens: edge,
        });
        rounds.push((key_cell, door, walk));
        x = key_cell;
    }

    let origins = reachable_avoiding(maze, x, &locked);
    let start = *origins.choose(&mut rng).expect("x reaches itself");
    let mut steps = vec![SkeletonStep::Start(start), SkeletonStep::Move(maze.tree_path(start, x)?)];
    for (cell, door, walk) in rounds.into_iter().rev() {
        steps.push(SkeletonStep::Pickup { cell, key: door.key_id });
        steps.push(SkeletonStep::Unlock { door: door.edge, key: door.key_id });
        steps.push(SkeletonStep::Move(walk));
    }
    steps.push(SkeletonStep::Goal(goal));
    Ok(Rewind {
        doors,
        keys,
        skeleton: PathSkeleton(steps),
        start,
        goal,
    })
}

/// Retries [`rewind_construct`] with derived seeds until exactly `b_target`
/// doors are placed. Returns the successful attempt's seed alongside it.
pub fn rewind_construct_exact(
    maze: &MazeGraph,
    b_target: u32,
    seed: u64,
    max_attempts: u32,
) -> Result<(u64, Rewind), TaskError> {
    for attempt in 0..max_attempts {
        let s = if attempt == 0 { seed } else { derive_seed(seed, u64::from(attempt)) };
        let rewind = rewind_construct(maze, b_target, s)?;
        if rewind.backtracks() == b_target {
            return Ok((s, rewind));
        }
    }
    Err(TaskError::ExactBacktracksUnreachable {
        wanted: b_target,
        attempts: max_attempts,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub actions: Vec<Action>,
    pub logical_depth: usize,
    pub backtracks_effective: usize,
    pub start: CellLabel,
    pub goal: CellLabel,
}

impl GroundTruth {
    pub fn from_actions(actions: Vec<Action>, start: CellLabel, goal: CellLabel) -> Self {
        let backtracks_effective = actions
            .iter()
            .filter(|a| matches!(a, Action::UnlockAndOpenDoorTo(_)))
            .count();
        Self {
            logical_depth: actions.len(),
            backtracks_effective,
            actions,
            start,
            goal,
        }
    }
}

/// Walks the skeleton forward and emits the action sequence.
///
/// Crossing a still-locked door emits `use_key` then
/// `unlock_and_open_door_to` before the move. Doors stay open afterwards.
pub fn derive_ground_truth(
    maze: &MazeGraph,
    doors: &[Door],
    keys: &[KeyInfo],
    skeleton: &PathSkeleton,
) -> Result<GroundTruth, TaskError> {
    let bad = |msg: String| Err(TaskError::Inconsistent(msg));
    let steps = &skeleton.0;
    let (Some(SkeletonStep::Start(start)), Some(SkeletonStep::Goal(goal))) = (steps.first(), steps.last()) else {
        return bad("skeleton must begin with START and end with GOAL".into());
    };
    let mut here = *start;
    let mut actions = vec![Action::Start(here)];
    let mut held: BTreeSet<KeyId> = BTreeSet::new();
    let mut opened: BTreeSet<Edge> = BTreeSet::new();
    let mut armed: BTreeSet<Edge> = BTreeSet::new();

    for step in &steps[1..steps.len() - 1] {
        match step {
            SkeletonStep::Start(_) | SkeletonStep::Goal(_) => {
                return bad("START/GOAL in the middle of the skeleton".into());
            }
            SkeletonStep::Pickup { cell, key } => {
                if *cell != here {
                    return bad(format!("pickup of key {key} at {cell} while at {here}"));
                }
                match keys.iter().find(|k| k.key_id == *key) {
                    Some(k) if k.location == *cell => {}
                    _ => return bad(format!("key {key} is not located at {cell}")),
                }
                if held.insert(*key) {
                    actions.push(Action::PickUpKey(*key));
                }
            }
            SkeletonStep::Unlock { door, key } => {
                if !doors.iter().any(|d| d.edge == *door && d.key_id == *key) {
                    return bad(format!("unknown door {door} for key {key}"));
                }
                armed.insert(*door);
            }
            SkeletonStep::Move(cells) => {
                if cells.first() != Some(&here) {
                    return bad(format!("segment does not start at {here}"));
                }
                for pair in cells.windows(2) {
                    let (from, to) = (pair[0], pair[1]);
                    if !maze.has_edge(from, to) {
                        return bad(format!("segment step {from}->{to} is not a maze edge"));
                    }
                    let edge = Edge::new(from, to);
                    if let Some(door) = doors.iter().find(|d| d.edge == edge) {
                        if !opened.contains(&edge) {
                            if !armed.remove(&edge) {
                                return bad(format!("door {edge} crossed without an unlock step"));
                            }
                            if !held.contains(&door.key_id) {
                                return bad(format!("door {edge} reached without key {}", door.key_id));
                            }
                            actions.push(Action::UseKey(door.key_id));
                            actions.push(Action::UnlockAndOpenDoorTo(to));
                            opened.insert(edge);
                        }
                    }
                    actions.push(Action::MoveTo(to));
                    here = to;
                }
            }
        }
    }
    if here != *goal {
        return bad(format!("skeleton ends at {here}, goal is {goal}"));
    }
    if let Some(edge) = armed.iter().next() {
        return bad(format!("unlock step for {edge} never used"));
    }
    actions.push(Action::Rescue);
    Ok(GroundTruth::from_actions(actions, *start, *goal))
}

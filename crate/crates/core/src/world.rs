//! The world a sequence of actions is judged against.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::KeyId;
use crate::facts::FactKind;
use crate::label::CellLabel;
use crate::maze::{Edge, MazeGraph};
use crate::task::{Door, KeyInfo};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorldError {
    #[error("locked connection {0} has no key requirement")]
    MissingRequirement(Edge),
    #[error("key requirement for {0}, which is not a locked connection")]
    RequirementWithoutLock(Edge),
    #[error("connection {0} is described twice")]
    DuplicateConnection(Edge),
    #[error("conflicting locations for key {0}")]
    DuplicateKey(KeyId),
    #[error("cells {0} and {1} are not grid neighbours")]
    NotAdjacent(CellLabel, CellLabel),
    #[error("missing {0} position")]
    MissingAgent(&'static str),
    #[error("{0} position given twice")]
    DuplicateAgent(&'static str),
}

/// Rooms, connections, locks and keys, plus the start and goal rooms.
///
/// Unlike [`MazeGraph`] the connection set may contain cycles, so a world
/// can also describe a task augmented with distractor content.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct World {
    pub columns: u32,
    pub rows: u32,
    /// Every connection, locked or open.
    pub connections: BTreeSet<Edge>,
    /// Locked connections and the key each requires.
    pub locks: BTreeMap<Edge, KeyId>,
    pub key_locations: BTreeMap<KeyId, CellLabel>,
    pub start: CellLabel,
    pub goal: CellLabel,
}

impl World {
    pub fn from_task(
        maze: &MazeGraph,
        doors: &[Door],
        keys: &[KeyInfo],
        start: CellLabel,
        goal: CellLabel,
    ) -> Self {
        Self {
            columns: maze.columns(),
            rows: maze.rows(),
            connections: maze.edges().clone(),
            locks: doors.iter().map(|d| (d.edge, d.key_id)).collect(),
            key_locations: keys.iter().map(|k| (k.key_id, k.location)).collect(),
            start,
            goal,
        }
    }

    /// Rebuilds a world from parsed fact sentences. The grid is the smallest
    /// one containing every mentioned room.
    pub fn from_facts<'a>(facts: impl IntoIterator<Item = &'a FactKind>) -> Result<Self, WorldError> {
        let mut open = BTreeSet::new();
        let mut locked = BTreeSet::new();
        let mut requirements = BTreeMap::new();
        let mut key_locations = BTreeMap::new();
        let mut start = None;
        let mut goal = None;
        let mut columns = 1;
        let mut rows = 1;
        let mut see = |c: CellLabel| {
            columns = columns.max(c.column() + 1);
            rows = rows.max(c.row());
        };
        for fact in facts {
            match *fact {
                FactKind::OpenConnection(a, b) | FactKind::LockedConnection(a, b) => {
                    if !a.is_grid_adjacent(b) {
                        return Err(WorldError::NotAdjacent(a, b));
                    }
                    see(a);
                    see(b);
                    let edge = Edge::new(a, b);
                    if open.contains(&edge) || locked.contains(&edge) {
                        return Err(WorldError::DuplicateConnection(edge));
                    }
                    if matches!(fact, FactKind::OpenConnection(..)) {
                        open.insert(edge);
                    } else {
                        locked.insert(edge);
                    }
                }
                FactKind::RequiresKey(a, b, key) => {
                    let edge = Edge::new(a, b);
                    if requirements.insert(edge, key).is_some_and(|k| k != key) {
                        return Err(WorldError::DuplicateConnection(edge));
                    }
                }
                FactKind::KeyLocation(key, room) => {
                    see(room);
                    if key_locations.insert(key, room).is_some_and(|r| r != room) {
                        return Err(WorldError::DuplicateKey(key));
                    }
                }
                FactKind::AgentStart(room) => {
                    see(room);
                    if start.replace(room).is_some() {
                        return Err(WorldError::DuplicateAgent("start"));
                    }
                }
                FactKind::AgentGoal(room) => {
                    see(room);
                    if goal.replace(room).is_some() {
                        return Err(WorldError::DuplicateAgent("goal"));
                    }
                }
            }
        }
        if let Some(edge) = requirements.keys().find(|e| !locked.contains(*e)) {
            return Err(WorldError::RequirementWithoutLock(*edge));
        }
        if let Some(edge) = locked.iter().find(|e| !requirements.contains_key(*e)) {
            return Err(WorldError::MissingRequirement(*edge));
        }
        Ok(Self {
            columns,
            rows,
            connections: open.union(&locked).copied().collect(),
            locks: requirements,
            key_locations,
            start: start.ok_or(WorldError::MissingAgent("start"))?,
            goal: goal.ok_or(WorldError::MissingAgent("goal"))?,
        })
    }

    pub fn contains(&self, cell: CellLabel) -> bool {
        cell.column() < self.columns && cell.row() <= self.rows
    }

    pub fn is_connected(&self, a: CellLabel, b: CellLabel) -> bool {
        self.connections.contains(&Edge::new(a, b))
    }

    pub fn lock_on(&self, a: CellLabel, b: CellLabel) -> Option<KeyId> {
        self.locks.get(&Edge::new(a, b)).copied()
    }

    /// Cells reachable from `cell` through one connection.
    pub fn neighbours(&self, cell: CellLabel) -> impl Iterator<Item = CellLabel> + '_ {
        self.connections.iter().filter_map(move |e| e.other(cell))
    }
}

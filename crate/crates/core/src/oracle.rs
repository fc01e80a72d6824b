//! Exhaustive shortest-solution search, used to certify generated depths.
//!
//! This is deliberately separate from the verifier: it encodes the action
//! rules again over a packed state so the two can be cross-checked.

use std::collections::{HashMap, HashSet, VecDeque};

use thiserror::Error;

use crate::action::KeyId;
use crate::label::CellLabel;
use crate::world::World;

const MAX_TRACKED: usize = 20;

/// (neighbour, Some((door bit, key bit)) when locked, None when open).
type Link = (usize, Option<(usize, usize)>);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("goal is unreachable")]
    Unreachable,
    #[error("world too large for exhaustive search ({0})")]
    TooLarge(String),
}

/// Length of the shortest valid action sequence, counting `start` and `rescue`.
///
/// State is (room, held keys, opened doors, key just used). Keys that open
/// nothing are never worth picking up, and doors whose key is absent can
/// never open, so neither is tracked.
pub fn bfs_optimal(world: &World) -> Result<usize, OracleError> {
    if !world.contains(world.start) || !world.contains(world.goal) {
        return Err(OracleError::Unreachable);
    }
    let cols = world.columns as usize;
    let rows = world.rows as usize;
    let cells = cols * rows;
    if cells >= 1 << 16 {
        return Err(OracleError::TooLarge(format!("{cells} rooms")));
    }
    let idx = |c: CellLabel| (c.row() as usize - 1) * cols + c.column() as usize;

    // keys that have a location and open at least one lock
    let mut keys: Vec<KeyId> = world
        .locks
        .values()
        .copied()
        .filter(|k| world.key_locations.contains_key(k))
        .collect();
    keys.sort();
    keys.dedup();
    if keys.len() > MAX_TRACKED {
        return Err(OracleError::TooLarge(format!("{} keys", keys.len())));
    }
    let key_bit: HashMap<KeyId, usize> = keys.iter().enumerate().map(|(i, k)| (*k, i)).collect();

    // per room: keys lying here
    let mut keys_in_room = vec![Vec::new(); cells];
    for (k, room) in &world.key_locations {
        if let Some(&bit) = key_bit.get(k) {
            if world.contains(*room) {
                keys_in_room[idx(*room)].push(bit);
            }
        }
    }

    // per room: (neighbour, Some((door bit, key bit)) when locked, or None when open)
    // edges locked with an unobtainable key are dropped entirely
    let mut links: Vec<Vec<Link>> = vec![Vec::new(); cells];
    let mut door_count = 0;
    for edge in &world.connections {
        if !world.contains(edge.lo()) || !world.contains(edge.hi()) {
            continue;
        }
        let (a, b) = (idx(edge.lo()), idx(edge.hi()));
        let lock = match world.locks.get(edge) {
            None => None,
            Some(k) => match key_bit.get(k) {
                None => continue,
                Some(&kb) => {
                    door_count += 1;
                    Some((door_count - 1, kb))
                }
            },
        };
        links[a].push((b, lock));
        links[b].push((a, lock));
    }
    if door_count > MAX_TRACKED {
        return Err(OracleError::TooLarge(format!("{door_count} doors")));
    }

    // pending: 0 = none, otherwise key bit + 1
    let pack = |pos: usize, held: u64, opened: u64, pending: u64| -> u64 {
        pos as u64 | held << 16 | opened << 36 | pending << 56
    };
    let goal = idx(world.goal);
    let origin = pack(idx(world.start), 0, 0, 0);
    let mut seen = HashSet::from([origin]);
    // distance counts actions after `start`
    let mut queue = VecDeque::from([(origin, 0usize)]);
    while let Some((state, dist)) = queue.pop_front() {
        let pos = (state & 0xFFFF) as usize;
        let held = (state >> 16) & 0xF_FFFF;
        let opened = (state >> 36) & 0xF_FFFF;
        let pending = state >> 56;
        if pos == goal {
            return Ok(dist + 2);
        }
        let mut push = |next: u64| {
            if seen.insert(next) {
                queue.push_back((next, dist + 1));
            }
        };
        for &(to, lock) in &links[pos] {
            match lock {
                None => push(pack(to, held, opened, 0)),
                Some((door, key)) => {
                    if opened & (1 << door) != 0 {
                        push(pack(to, held, opened, 0));
                    } else {
                        // use_key arms the unlock; unlock must come next
                        if held & (1 << key) != 0 {
                            push(pack(pos, held, opened, key as u64 + 1));
                        }
                        if pending == key as u64 + 1 {
                            push(pack(pos, held, opened | 1 << door, 0));
                        }
                    }
                }
            }
        }
        for &key in &keys_in_room[pos] {
            if held & (1 << key) == 0 {
                push(pack(pos, held | 1 << key, opened, 0));
            }
        }
    }
    Err(OracleError::Unreachable)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::facts::parse_fact_text;

    fn world(text: &str) -> World {
        World::from_facts(&parse_fact_text(text).unwrap()).unwrap()
    }

    #[test]
    fn start_is_goal() {
        let w = world("Bob is in room B2. Alice is in room B2.");
        assert_eq!(bfs_optimal(&w), Ok(2));
    }

    #[test]
    fn single_lock() {
        let w = world(
            "Room A1 and A2 are connected by an open door. Room A1 and B1 are connected by a closed and locked door. \
             The locked door between A1 and B1 requires key 1. Key 1 is in room A2. Bob is in room A1. Alice is in room B1.",
        );
        // start, move A2, pick, move A1, use, unlock, move B1, rescue
        assert_eq!(bfs_optimal(&w), Ok(8));
    }

    #[test]
    fn unreachable_goal() {
        let w = world(
            "Room A1 and B1 are connected by a closed and locked door. The locked door between A1 and B1 requires key 9. \
             Bob is in room A1. Alice is in room B1.",
        );
        assert_eq!(bfs_optimal(&w), Err(OracleError::Unreachable));
        let w = world("Bob is in room A1. Alice is in room B1.");
        assert_eq!(bfs_optimal(&w), Err(OracleError::Unreachable));
    }
}

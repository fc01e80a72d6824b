//! Acyclic grid mazes built with randomized Kruskal.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::label::CellLabel;
use crate::seed::stage_rng;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MazeError {
    #[error("invalid maze dimensions {n}x{m}")]
    InvalidDimensions { n: u32, m: u32 },
    #[error("cell {0} is outside the grid")]
    OutOfRange(CellLabel),
    #[error("cells {0} and {1} are not grid neighbours")]
    NotAdjacent(CellLabel, CellLabel),
    #[error("edge {0} closes a cycle")]
    Cycle(Edge),
    #[error("no path between {0} and {1}")]
    Disconnected(CellLabel, CellLabel),
}

/// An unordered pair of grid-adjacent cells, stored smaller endpoint first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    lo: CellLabel,
    hi: CellLabel,
}

impl Edge {
    pub fn new(a: CellLabel, b: CellLabel) -> Self {
        if a <= b {
            Self { lo: a, hi: b }
        } else {
            Self { lo: b, hi: a }
        }
    }

    pub fn lo(self) -> CellLabel {
        self.lo
    }

    pub fn hi(self) -> CellLabel {
        self.hi
    }

    pub fn touches(self, cell: CellLabel) -> bool {
        self.lo == cell || self.hi == cell
    }

    /// The endpoint that is not `cell`, if `cell` is an endpoint.
    pub fn other(self, cell: CellLabel) -> Option<CellLabel> {
        if self.lo == cell {
            Some(self.hi)
        } else if self.hi == cell {
            Some(self.lo)
        } else {
            None
        }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.lo, self.hi)
    }
}

impl Serialize for Edge {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        [self.lo, self.hi].serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Edge {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let [a, b] = <[CellLabel; 2]>::deserialize(deserializer)?;
        Ok(Edge::new(a, b))
    }
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub(crate) fn new(len: usize) -> Self {
        Self {
            parent: (0..len).collect(),
            rank: vec![0; len],
        }
    }

    pub(crate) fn find(&mut self, mut id: usize) -> usize {
        while self.parent[id] != id {
            self.parent[id] = self.parent[self.parent[id]];
            id = self.parent[id];
        }
        id
    }

    /// Returns false when both ids already share a set.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (x, y) = (self.find(a), self.find(b));
        if x == y {
            return false;
        }
        match self.rank[x].cmp(&self.rank[y]) {
            std::cmp::Ordering::Less => self.parent[x] = y,
            std::cmp::Ordering::Greater => self.parent[y] = x,
            std::cmp::Ordering::Equal => {
                self.parent[y] = x;
                self.rank[x] += 1;
            }
        }
        true
    }
}

/// An acyclic graph on an `n` (columns) by `m` (rows) grid.
///
/// Mazes produced by [`build_maze`] are spanning trees. Mazes rebuilt from a
/// partial description via [`MazeGraph::from_edges`] may be forests.
#[derive(Debug, Clone)]
pub struct MazeGraph {
    n: u32,
    m: u32,
    edges: BTreeSet<Edge>,
    adjacency: Vec<Vec<usize>>,
    // rooted orientation of every component, used by tree_path
    parent: Vec<usize>,
    depth: Vec<u32>,
    component: Vec<usize>,
}

impl PartialEq for MazeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.m == other.m && self.edges == other.edges
    }
}

impl Eq for MazeGraph {}

impl MazeGraph {
    pub fn from_edges(
        n: u32,
        m: u32,
        edges: impl IntoIterator<Item = Edge>,
    ) -> Result<Self, MazeError> {
        if n == 0 || m == 0 {
            return Err(MazeError::InvalidDimensions { n, m });
        }
        let cells = n as usize * m as usize;
        let mut set = BTreeSet::new();
        let mut uf = UnionFind::new(cells);
        let mut adjacency = vec![Vec::new(); cells];
        for edge in edges {
            let (a, b) = (edge.lo, edge.hi);
            if !a.is_grid_adjacent(b) {
                return Err(MazeError::NotAdjacent(a, b));
            }
            let ia = index_in(n, m, a)?;
            let ib = index_in(n, m, b)?;
            if !set.insert(edge) || !uf.union(ia, ib) {
                return Err(MazeError::Cycle(edge));
            }
            adjacency[ia].push(ib);
            adjacency[ib].push(ia);
        }
        let mut maze = Self {
            n,
            m,
            edges: set,
            adjacency,
            parent: Vec::new(),
            depth: Vec::new(),
            component: Vec::new(),
        };
        maze.orient();
        Ok(maze)
    }

    fn orient(&mut self) {
        let cells = self.adjacency.len();
        self.parent = (0..cells).collect();
        self.depth = vec![0; cells];
        self.component = vec![usize::MAX; cells];
        let mut queue = VecDeque::new();
        for root in 0..cells {
            if self.component[root] != usize::MAX {
                continue;
            }
            self.component[root] = root;
            queue.push_back(root);
            while let Some(v) = queue.pop_front() {
                for &w in &self.adjacency[v] {
                    if self.component[w] == usize::MAX {
                        self.component[w] = root;
                        self.parent[w] = v;
                        self.depth[w] = self.depth[v] + 1;
                        queue.push_back(w);
                    }
                }
            }
        }
    }

    pub fn columns(&self) -> u32 {
        self.n
    }

    pub fn rows(&self) -> u32 {
        self.m
    }

    pub fn cell_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edges(&self) -> &BTreeSet<Edge> {
        &self.edges
    }

    pub fn has_edge(&self, a: CellLabel, b: CellLabel) -> bool {
        self.edges.contains(&Edge::new(a, b))
    }

    pub fn contains(&self, cell: CellLabel) -> bool {
        cell.column() < self.n && cell.row() <= self.m
    }

    /// All cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = CellLabel> + '_ {
        (0..self.cell_count()).map(|i| self.cell_at(i))
    }

    pub fn index(&self, cell: CellLabel) -> Result<usize, MazeError> {
        index_in(self.n, self.m, cell)
    }

    pub fn cell_at(&self, index: usize) -> CellLabel {
        let n = self.n as usize;
        CellLabel::new((index % n) as u32, (index / n) as u32 + 1).expect("row >= 1")
    }

    pub fn neighbours(&self, cell: CellLabel) -> impl Iterator<Item = CellLabel> + '_ {
        let adj = self.index(cell).map(|i| self.adjacency[i].as_slice()).unwrap_or(&[]);
        adj.iter().map(|&i| self.cell_at(i))
    }

    /// Grid wall positions not used as maze edges.
    pub fn wall_edges(&self) -> Vec<Edge> {
        grid_edges(self.n, self.m)
            .into_iter()
            .filter(|e| !self.edges.contains(e))
            .collect()
    }

    pub fn is_spanning_tree(&self) -> bool {
        self.edges.len() + 1 == self.cell_count()
    }

    /// The unique simple path from `a` to `b`, both inclusive.
    pub fn tree_path(&self, a: CellLabel, b: CellLabel) -> Result<Vec<CellLabel>, MazeError> {
        let (mut ia, mut ib) = (self.index(a)?, self.index(b)?);
        if self.component[ia] != self.component[ib] {
            return Err(MazeError::Disconnected(a, b));
        }
        let mut head = Vec::new();
        let mut tail = Vec::new();
        while self.depth[ia] > self.depth[ib] {
            head.push(ia);
            ia = self.parent[ia];
        }
        while self.depth[ib] > self.depth[ia] {
            tail.push(ib);
            ib = self.parent[ib];
        }
        while ia != ib {
            head.push(ia);
            tail.push(ib);
            ia = self.parent[ia];
            ib = self.parent[ib];
        }
        head.push(ia);
        head.extend(tail.into_iter().rev());
        Ok(head.into_iter().map(|i| self.cell_at(i)).collect())
    }
}

fn index_in(n: u32, m: u32, cell: CellLabel) -> Result<usize, MazeError> {
    if cell.column() >= n || cell.row() > m {
        return Err(MazeError::OutOfRange(cell));
    }
    Ok((cell.row() as usize - 1) * n as usize + cell.column() as usize)
}

/// Every 4-neighbourhood adjacency of the grid, in canonical order.
pub fn grid_edges(n: u32, m: u32) -> Vec<Edge> {
    let mut edges = Vec::new();
    for column in 0..n {
        for row in 1..=m {
            let here = CellLabel::new(column, row).expect("row >= 1");
            if row < m {
                edges.push(Edge::new(here, CellLabel::new(column, row + 1).expect("row >= 1")));
            }
            if column + 1 < n {
                edges.push(Edge::new(here, CellLabel::new(column + 1, row).expect("row >= 1")));
            }
        }
    }
    edges
}

/// Random spanning tree of the grid: seeded shuffle of every wall, then
/// union-find acceptance.
pub fn build_maze(n: u32, m: u32, seed: u64) -> Result<MazeGraph, MazeError> {
    if n == 0 || m == 0 {
        return Err(MazeError::InvalidDimensions { n, m });
    }
    let mut candidates = grid_edges(n, m);
    candidates.shuffle(&mut stage_rng(seed));
    let mut uf = UnionFind::new(n as usize * m as usize);
    let mut accepted = Vec::with_capacity(n as usize * m as usize - 1);
    for edge in candidates {
        let a = index_in(n, m, edge.lo)?;
        let b = index_in(n, m, edge.hi)?;
        if uf.union(a, b) {
            accepted.push(edge);
        }
    }
    MazeGraph::from_edges(n, m, accepted)
}

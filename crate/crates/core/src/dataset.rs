//! Annotated task instances and their JSON-Lines persistence.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{Action, KeyId};
use crate::facts::{
    compile_supporting_facts, inject_noise, shuffle_facts, Fact, FactKind, FactList, NoiseError, Role,
};
use crate::label::CellLabel;
use crate::maze::{build_maze, Edge, MazeError, MazeGraph};
use crate::seed::derive_seed;
use crate::task::{derive_ground_truth, rewind_construct, Door, GroundTruth, KeyInfo, TaskError, MAX_BACKTRACKS};
use crate::verify::execute;
use crate::world::World;

pub const SCHEMA_VERSION: u32 = 1;

const MAZE_STREAM: u64 = 1;
const REWIND_STREAM: u64 = 2;
const NOISE_STREAM: u64 = 3;
const SHUFFLE_STREAM: u64 = 4;

/// Generation parameters for one instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub n: u32,
    pub m: u32,
    pub b_target: u32,
    pub noise_target: f64,
    pub shuffle_ratio: f64,
}

impl GenParams {
    pub fn new(n: u32, m: u32, b_target: u32) -> Self {
        Self {
            n,
            m,
            b_target,
            noise_target: 0.0,
            shuffle_ratio: 0.0,
        }
    }

    pub fn with_noise(mut self, noise_target: f64) -> Self {
        self.noise_target = noise_target;
        self
    }

    pub fn with_shuffle(mut self, shuffle_ratio: f64) -> Self {
        self.shuffle_ratio = shuffle_ratio;
        self
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: String| Err(DatasetError::InvalidParams(m));
        if self.n == 0 || self.m == 0 {
            return bad(format!("grid {}x{} must be at least 1x1", self.n, self.m));
        }
        if self.b_target > MAX_BACKTRACKS {
            return bad(format!("backtracks {} exceed maximum {MAX_BACKTRACKS}", self.b_target));
        }
        if !(0.0..=1.0).contains(&self.noise_target) {
            return bad(format!("noise {} outside [0, 1]", self.noise_target));
        }
        if !(0.0..=1.0).contains(&self.shuffle_ratio) {
            return bad(format!("shuffle {} outside [0, 1]", self.shuffle_ratio));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Maze(#[from] MazeError),
    #[error("generator self-check failed for {id}: {detail}")]
    SelfCheck { id: String, detail: String },
    #[error("line {line}: field `{field}`: {message}")]
    Malformed { line: usize, field: String, message: String },
    #[error("malformed instance id {0:?}")]
    BadId(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `{n}x{m}-b{b}-nz{noise}-sh{shuffle}-{seed hex}`.
pub fn instance_id(params: &GenParams, seed: u64) -> String {
    format!(
        "{}x{}-b{}-nz{:?}-sh{:?}-{:x}",
        params.n, params.m, params.b_target, params.noise_target, params.shuffle_ratio, seed
    )
}

pub fn parse_instance_id(id: &str) -> Result<(GenParams, u64), DatasetError> {
    let bad = || DatasetError::BadId(id.to_string());
    let mut parts = id.split('-');
    let mut next = || parts.next().ok_or_else(bad);
    let (n, m) = next()?.split_once('x').ok_or_else(bad)?;
    let b = next()?.strip_prefix('b').ok_or_else(bad)?;
    let noise = next()?.strip_prefix("nz").ok_or_else(bad)?;
    let shuffle = next()?.strip_prefix("sh").ok_or_else(bad)?;
    let seed = next()?;
    if parts.next().is_some() {
        return Err(bad());
    }
    let int = |s: &str| -> Result<u32, DatasetError> {
        if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        s.parse().map_err(|_| bad())
    };
    let real = |s: &str| -> Result<f64, DatasetError> {
        let v: f64 = s.parse().map_err(|_| bad())?;
        // only the canonical rendering round-trips
        if format!("{v:?}") != s {
            return Err(bad());
        }
        Ok(v)
    };
    if seed.is_empty() || !seed.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase()) {
        return Err(bad());
    }
    let params = GenParams {
        n: int(n)?,
        m: int(m)?,
        b_target: int(b)?,
        noise_target: real(noise)?,
        shuffle_ratio: real(shuffle)?,
    };
    let seed = u64::from_str_radix(seed, 16).map_err(|_| bad())?;
    if instance_id(&params, seed) != id {
        return Err(bad());
    }
    Ok((params, seed))
}

/// One fully annotated task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskInstance {
    pub id: String,
    pub seed: u64,
    pub params: GenParams,
    pub maze: MazeGraph,
    pub doors: Vec<Door>,
    pub keys: Vec<KeyInfo>,
    pub start: CellLabel,
    pub goal: CellLabel,
    pub facts: FactList,
    pub ground_truth: GroundTruth,
}

impl TaskInstance {
    pub fn logical_depth(&self) -> usize {
        self.ground_truth.logical_depth
    }

    pub fn b_effective(&self) -> usize {
        self.ground_truth.backtracks_effective
    }

    pub fn noise_effective(&self) -> f64 {
        let r = self.facts.noise_effective();
        *r.numer() as f64 / *r.denom() as f64
    }

    /// The true world, without distractor content.
    pub fn world(&self) -> World {
        World::from_task(&self.maze, &self.doors, &self.keys, self.start, self.goal)
    }

    pub fn regenerate(&self) -> Result<TaskInstance, DatasetError> {
        assemble_instance(&self.params, self.seed)
    }
}

/// Maze, rewind construction, ground truth, then facts with noise and
/// shuffling. The ground truth is executed before returning.
pub fn assemble_instance(params: &GenParams, seed: u64) -> Result<TaskInstance, DatasetError> {
    params.validate()?;
    let id = instance_id(params, seed);
    let maze = build_maze(params.n, params.m, derive_seed(seed, MAZE_STREAM))?;
    let rewind = rewind_construct(&maze, params.b_target, derive_seed(seed, REWIND_STREAM))?;
    let ground_truth = derive_ground_truth(&maze, &rewind.doors, &rewind.keys, &rewind.skeleton)?;
    let world = World::from_task(&maze, &rewind.doors, &rewind.keys, rewind.start, rewind.goal);
    let report = execute(&ground_truth.actions, &world);
    if !report.violations.is_empty() || !report.goal_reached {
        return Err(DatasetError::SelfCheck {
            id,
            detail: format!("{:?}", report.violations),
        });
    }
    if ground_truth.backtracks_effective != rewind.doors.len() {
        return Err(DatasetError::SelfCheck {
            id,
            detail: "unlock count differs from door count".into(),
        });
    }
    let supporting = compile_supporting_facts(&maze, &rewind.doors, &rewind.keys, rewind.start, rewind.goal);
    let noisy = inject_noise(&supporting, &world, params.noise_target, derive_seed(seed, NOISE_STREAM))?;
    let facts = shuffle_facts(&noisy, params.shuffle_ratio, derive_seed(seed, SHUFFLE_STREAM));
    Ok(TaskInstance {
        id,
        seed,
        params: *params,
        maze,
        doors: rewind.doors,
        keys: rewind.keys,
        start: rewind.start,
        goal: rewind.goal,
        facts,
        ground_truth,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FactParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rooms: Option<[CellLabel; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<KeyId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub room: Option<CellLabel>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactRecord {
    pub role: Role,
    pub kind: String,
    pub text: String,
    pub params: FactParams,
}

impl From<&Fact> for FactRecord {
    fn from(f: &Fact) -> Self {
        let params = match f.kind {
            FactKind::OpenConnection(a, b) | FactKind::LockedConnection(a, b) => FactParams {
                rooms: Some([a, b]),
                ..Default::default()
            },
            FactKind::RequiresKey(a, b, k) => FactParams {
                rooms: Some([a, b]),
                key: Some(k),
                room: None,
            },
            FactKind::KeyLocation(k, r) => FactParams {
                key: Some(k),
                room: Some(r),
                rooms: None,
            },
            FactKind::AgentStart(r) | FactKind::AgentGoal(r) => FactParams {
                room: Some(r),
                ..Default::default()
            },
        };
        Self {
            role: f.role,
            kind: f.kind.name().to_string(),
            text: f.text(),
            params,
        }
    }
}

impl FactRecord {
    pub fn to_fact(&self) -> Result<Fact, String> {
        let p = &self.params;
        let need = |what: &str| format!("{} fact is missing params.{what}", self.kind);
        let kind = match self.kind.as_str() {
            "open_connection" | "locked_connection" | "requires_key" => {
                let [a, b] = p.rooms.ok_or_else(|| need("rooms"))?;
                match self.kind.as_str() {
                    "open_connection" => FactKind::OpenConnection(a, b),
                    "locked_connection" => FactKind::LockedConnection(a, b),
                    _ => FactKind::RequiresKey(a, b, p.key.ok_or_else(|| need("key"))?),
                }
            }
            "key_location" => FactKind::KeyLocation(p.key.ok_or_else(|| need("key"))?, p.room.ok_or_else(|| need("room"))?),
            "agent_start" => FactKind::AgentStart(p.room.ok_or_else(|| need("room"))?),
            "agent_goal" => FactKind::AgentGoal(p.room.ok_or_else(|| need("room"))?),
            other => return Err(format!("unknown fact kind {other:?}")),
        };
        let fact = Fact { role: self.role, kind };
        if FactRecord::from(&fact) != *self {
            return Err(format!("text/params mismatch for {:?}", self.text));
        }
        Ok(fact)
    }
}

/// The on-disk record; field order is the file's key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceRecord {
    pub schema: u32,
    pub id: String,
    pub seed: u64,
    pub n: u32,
    pub m: u32,
    pub b_target: u32,
    pub b_effective: usize,
    pub noise_target: f64,
    pub noise_effective: f64,
    pub shuffle_ratio: f64,
    pub logical_depth: usize,
    pub facts: Vec<FactRecord>,
    pub ground_truth: Vec<Action>,
    pub edges: Vec<Edge>,
    pub doors: Vec<Door>,
    pub keys: Vec<KeyInfo>,
    pub start: CellLabel,
    pub goal: CellLabel,
}

impl From<&TaskInstance> for InstanceRecord {
    fn from(t: &TaskInstance) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            id: t.id.clone(),
            seed: t.seed,
            n: t.params.n,
            m: t.params.m,
            b_target: t.params.b_target,
            b_effective: t.b_effective(),
            noise_target: t.params.noise_target,
            noise_effective: t.noise_effective(),
            shuffle_ratio: t.params.shuffle_ratio,
            logical_depth: t.logical_depth(),
            facts: t.facts.facts.iter().map(FactRecord::from).collect(),
            ground_truth: t.ground_truth.actions.clone(),
            edges: t.maze.edges().iter().copied().collect(),
            doors: t.doors.clone(),
            keys: t.keys.clone(),
            start: t.start,
            goal: t.goal,
        }
    }
}

impl InstanceRecord {
    /// Validates the record and rebuilds the typed instance. Errors name the
    /// offending field.
    pub fn into_instance(self) -> Result<TaskInstance, (String, String)> {
        let err = |field: &str, msg: String| Err((field.to_string(), msg));
        if self.schema != SCHEMA_VERSION {
            return err("schema", format!("unsupported schema {}", self.schema));
        }
        let params = GenParams {
            n: self.n,
            m: self.m,
            b_target: self.b_target,
            noise_target: self.noise_target,
            shuffle_ratio: self.shuffle_ratio,
        };
        if instance_id(&params, self.seed) != self.id {
            return err("id", format!("{:?} does not match parameters and seed", self.id));
        }
        let maze = match MazeGraph::from_edges(self.n, self.m, self.edges.iter().copied()) {
            Ok(m) => m,
            Err(e) => return err("edges", e.to_string()),
        };
        for (i, d) in self.doors.iter().enumerate() {
            if !maze.edges().contains(&d.edge) {
                return err(&format!("doors[{i}]"), format!("door {} is not a maze edge", d.edge));
            }
            if !self.keys.iter().any(|k| k.key_id == d.key_id && k.opens == d.edge) {
                return err(&format!("doors[{i}]"), format!("no key opens door {}", d.edge));
            }
        }
        let mut facts = Vec::with_capacity(self.facts.len());
        for (i, f) in self.facts.iter().enumerate() {
            match f.to_fact() {
                Ok(fact) => facts.push(fact),
                Err(e) => return err(&format!("facts[{i}]"), e),
            }
        }
        let facts = FactList {
            facts,
            shuffle_ratio: self.shuffle_ratio,
        };
        let ground_truth = GroundTruth::from_actions(self.ground_truth, self.start, self.goal);
        if ground_truth.logical_depth != self.logical_depth {
            return err("logical_depth", format!("{} but ground truth has {} actions", self.logical_depth, ground_truth.logical_depth));
        }
        if ground_truth.backtracks_effective != self.b_effective || self.doors.len() != self.b_effective {
            return err("b_effective", format!("{} disagrees with doors and unlock actions", self.b_effective));
        }
        let noise = facts.noise_effective();
        if (*noise.numer() as f64 / *noise.denom() as f64) != self.noise_effective {
            return err("noise_effective", format!("{} disagrees with fact roles ({noise})", self.noise_effective));
        }
        let instance = TaskInstance {
            id: self.id,
            seed: self.seed,
            params,
            maze,
            doors: self.doors,
            keys: self.keys,
            start: self.start,
            goal: self.goal,
            facts,
            ground_truth,
        };
        let report = execute(&instance.ground_truth.actions, &instance.world());
        if !report.violations.is_empty() || !report.goal_reached {
            let detail = report
                .violations
                .first()
                .map(|v| format!("step {}: {}", v.step, v.detail))
                .unwrap_or_else(|| "goal not reached".into());
            return err("ground_truth", detail);
        }
        Ok(instance)
    }
}

pub fn instance_to_line(instance: &TaskInstance) -> String {
    serde_json::to_string(&InstanceRecord::from(instance)).expect("records always serialize")
}

/// Parses one JSONL line; `line` is 1-based and only used in errors.
pub fn instance_from_line(text: &str, line: usize) -> Result<TaskInstance, DatasetError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let record: InstanceRecord = serde_path_to_error::deserialize(&mut de).map_err(|e| DatasetError::Malformed {
        line,
        field: match e.path().to_string() {
            p if p == "." => "<record>".to_string(),
            p => p,
        },
        message: e.inner().to_string(),
    })?;
    de.end().map_err(|e| DatasetError::Malformed {
        line,
        field: "<record>".into(),
        message: e.to_string(),
    })?;
    record
        .into_instance()
        .map_err(|(field, message)| DatasetError::Malformed { line, field, message })
}

pub fn write_jsonl(instances: &[TaskInstance], path: &Path) -> Result<(), DatasetError> {
    let mut out = BufWriter::new(File::create(path)?);
    for instance in instances {
        writeln!(out, "{}", instance_to_line(instance))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads every record. Blank lines are skipped.
pub fn read_jsonl(path: &Path) -> Result<Vec<TaskInstance>, DatasetError> {
    let reader = BufReader::new(File::open(path)?);
    let mut instances = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        instances.push(instance_from_line(&line, i + 1)?);
    }
    Ok(instances)
}

//! Sequential-reasoning pathfinding tasks on grid mazes with keys and
//! locked doors.
//!
//! The pipeline: [`maze::build_maze`] draws a spanning tree,
//! [`task::rewind_construct`] places keys and doors backwards from the goal,
//! [`task::derive_ground_truth`] produces the optimal action sequence, and
//! [`facts`] renders the world as sentences with optional distractors.
//! [`verify`] judges model answers, [`analytics`] turns verdicts into
//! success curves and fits the characteristic depth.

pub mod action;
pub mod analytics;
pub mod dataset;
pub mod facts;
pub mod label;
pub mod maze;
pub mod oracle;
pub mod prompt;
pub mod report;
pub mod seed;
pub mod task;
pub mod verify;
pub mod world;

pub use action::{render_actions, Action, KeyId, Verb};
pub use dataset::{assemble_instance, read_jsonl, write_jsonl, GenParams, TaskInstance};
pub use label::CellLabel;
pub use maze::{build_maze, Edge, MazeGraph};
pub use world::World;

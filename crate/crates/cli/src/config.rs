//! Resolution of subcommand settings: flag, then config-file section, then
//! default. Every resolved config is serializable so it can be logged.

use std::path::{Path, PathBuf};

use keymaze::prompt::PromptOptions;
use keymaze_runner::EndpointConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

/// The parsed `--config` file: an optional top-level `master_seed` plus one
/// table per subcommand.
#[derive(Debug, Default)]
pub struct FileConfig {
    root: Map<String, Value>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let table: toml::Table = toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let root = match serde_json::to_value(table).expect("toml tables convert") {
            Value::Object(m) => m,
            _ => unreachable!("a table is an object"),
        };
        const KNOWN: [&str; 7] = ["master_seed", "generate", "prompt", "run", "evaluate", "report", "oracle-check"];
        if let Some(k) = root.keys().find(|k| !KNOWN.contains(&k.as_str())) {
            return Err(CliError::Usage(format!("{}: unknown config key `{k}`", path.display())));
        }
        Ok(Self { root })
    }

    pub fn master_seed(&self) -> Option<&Value> {
        self.root.get("master_seed")
    }

    pub fn section_has(&self, section: &str, key: &str) -> bool {
        self.root.get(section).and_then(|s| s.get(key)).is_some()
    }

    /// The section for `name` with `flags` laid over it, deserialized.
    pub fn resolve<T: DeserializeOwned + Serialize>(&self, name: &str, flags: Value) -> Result<T, CliError> {
        let mut merged = match self.root.get(name) {
            Some(Value::Object(m)) => Value::Object(m.clone()),
            Some(_) => return Err(CliError::Usage(format!("config section `{name}` must be a table"))),
            None => Value::Object(Map::new()),
        };
        overlay(&mut merged, flags);
        let resolved: T = serde_json::from_value(merged).map_err(|e| CliError::Usage(format!("{name}: {e}")))?;
        log::info!(
            "resolved {name} config: {}",
            serde_json::to_string(&resolved).expect("configs serialize")
        );
        Ok(resolved)
    }
}

/// Recursively copies non-null values of `top` into `base`.
fn overlay(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                if v.is_null() {
                    continue;
                }
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => overlay(slot, v),
                    _ if v.is_object() => {
                        let mut fresh = Value::Object(Map::new());
                        overlay(&mut fresh, v);
                        if fresh.as_object().is_some_and(|m| !m.is_empty()) {
                            b.insert(k, fresh);
                        }
                    }
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, t) if !t.is_null() => *b = t,
        _ => {}
    }
}

fn default_runs() -> u32 {
    5
}

fn yes() -> bool {
    true
}

fn default_few_shot() -> usize {
    PromptOptions::default().few_shot
}

fn default_attempts() -> u32 {
    50
}

fn default_bin_width() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    pub n: u32,
    pub m: u32,
    #[serde(default)]
    pub backtracks: u32,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub shuffle: f64,
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
    pub out: PathBuf,
    /// Resample each instance until it places exactly `backtracks` doors.
    #[serde(default)]
    pub exact_backtracks: bool,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptConfig {
    pub tasks: PathBuf,
    pub out: PathBuf,
    #[serde(default = "yes")]
    pub guidance: bool,
    #[serde(default = "default_few_shot")]
    pub few_shot: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub tasks: PathBuf,
    pub out: PathBuf,
    #[serde(default = "default_runs")]
    pub runs: u32,
    #[serde(default = "yes")]
    pub guidance: bool,
    #[serde(default = "default_few_shot")]
    pub few_shot: usize,
    pub endpoint: EndpointConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    pub tasks: PathBuf,
    pub responses: PathBuf,
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    pub verdicts: PathBuf,
    pub tasks: PathBuf,
    #[serde(default = "default_bin_width")]
    pub bin_width: usize,
    pub out_prefix: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleCheckConfig {
    pub tasks: PathBuf,
    /// Also check that distractors leave the optimum unchanged.
    #[serde(default = "yes")]
    pub with_distractors: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn flags_override_file_values() {
        let mut base = json!({"n": 5, "endpoint": {"base_url": "a", "retry": {"max_attempts": 2}}});
        overlay(
            &mut base,
            json!({"n": 7, "m": null, "extra": {"a": null}, "endpoint": {"model_name": "x", "retry": {"backoff_base_ms": 1}}}),
        );
        assert_eq!(
            base,
            json!({"n": 7, "endpoint": {"base_url": "a", "model_name": "x", "retry": {"max_attempts": 2, "backoff_base_ms": 1}}})
        );
    }
}

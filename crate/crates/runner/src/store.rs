use std::collections::BTreeSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::RunError;

/// One completion, persisted as one JSONL line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelResponse {
    pub instance_id: String,
    pub run_index: u32,
    /// Verbatim message content; empty when the request failed.
    pub raw_text: String,
    /// -1 when the provider reported no usage.
    pub prompt_tokens: i64,
    /// -1 when the provider reported no usage.
    pub output_tokens: i64,
    pub latency_ms: u64,
    pub attempts: u32,
    /// Set when no completion was obtained.
    pub error: Option<String>,
}

impl ModelResponse {
    pub fn is_success(&self) -> bool {
        self.error.is_none()
    }

    pub fn key(&self) -> (String, u32) {
        (self.instance_id.clone(), self.run_index)
    }
}

pub fn response_from_line(line: &str) -> Result<ModelResponse, serde_json::Error> {
    serde_json::from_str(line)
}

pub fn response_to_line(r: &ModelResponse) -> String {
    serde_json::to_string(r).expect("responses serialize")
}

/// Reads a response file. Blank lines are skipped; a malformed line is an
/// error naming its 1-based line number.
pub fn read_responses(path: &Path) -> Result<Vec<ModelResponse>, RunError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(response_from_line(&line).map_err(|e| RunError::Store {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Append-only sink for responses; each record is flushed as written.
#[derive(Debug)]
pub struct ResponseStore {
    path: PathBuf,
    file: File,
    done: BTreeSet<(String, u32)>,
}

impl ResponseStore {
    /// Opens or creates `path`, preparing it for resumption.
    ///
    /// Successful records are kept and their keys returned by
    /// [`ResponseStore::is_done`]. Failed records and an unterminated final
    /// line are dropped, rewriting the file when anything was removed, so the
    /// file holds at most one record per (instance, run).
    pub fn open(path: &Path) -> Result<Self, RunError> {
        let mut kept: Vec<ModelResponse> = Vec::new();
        let mut dirty = false;
        if path.exists() {
            let text = std::fs::read_to_string(path)?;
            let complete = text.ends_with('\n');
            let lines: Vec<&str> = text.lines().collect();
            for (i, line) in lines.iter().enumerate() {
                if line.trim().is_empty() {
                    dirty = true;
                    continue;
                }
                match response_from_line(line) {
                    Ok(r) if r.is_success() && !kept.iter().any(|k| k.key() == r.key()) => kept.push(r),
                    Ok(_) => dirty = true,
                    Err(_) if i + 1 == lines.len() && !complete => {
                        log::warn!("{}: dropping truncated final line", path.display());
                        dirty = true;
                    }
                    Err(e) => {
                        return Err(RunError::Store {
                            line: i + 1,
                            message: e.to_string(),
                        })
                    }
                }
            }
        }
        if dirty {
            let tmp = path.with_extension("jsonl.tmp");
            let mut f = File::create(&tmp)?;
            for r in &kept {
                writeln!(f, "{}", response_to_line(r))?;
            }
            f.sync_all()?;
            std::fs::rename(&tmp, path)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
            done: kept.iter().map(ModelResponse::key).collect(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn is_done(&self, instance_id: &str, run_index: u32) -> bool {
        self.done.contains(&(instance_id.to_string(), run_index))
    }

    pub fn completed(&self) -> usize {
        self.done.len()
    }

    /// Writes one line in a single call and flushes it.
    pub fn append(&mut self, r: &ModelResponse) -> Result<(), RunError> {
        let mut line = response_to_line(r);
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        if r.is_success() {
            self.done.insert(r.key());
        }
        Ok(())
    }
}

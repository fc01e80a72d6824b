use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use keymaze::analytics::{aggregate_bins, first_violation_histogram, fit_l0, score_run, RunResult};
use keymaze::dataset::DatasetError;
use keymaze::facts::parse_fact_text;
use keymaze::oracle::{bfs_optimal, OracleError};
use keymaze::prompt::{build_prompt_with, PromptOptions, FEW_SHOT};
use keymaze::report::{bins_csv, decay_svg, fit_summary};
use keymaze::seed::derive_seed;
use keymaze::{assemble_instance, read_jsonl, write_jsonl, GenParams, TaskInstance, World};
use keymaze_runner::{response_from_line, Job, ModelResponse, RunError, Runner};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{EvaluateConfig, GenerateConfig, OracleCheckConfig, PromptConfig, ReportConfig, RunConfig};
use crate::CliError;

/// Offset keeping resampling streams apart from per-stage streams.
const RESAMPLE_STREAM: u64 = 0x100;

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn load_tasks(path: &Path) -> Result<Vec<TaskInstance>, CliError> {
    read_jsonl(path).map_err(|e| match e {
        DatasetError::Io(io) => CliError::Data(format!("{}: {io}", path.display())),
        other => CliError::Data(format!("{}: {other}", path.display())),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn prompt_options(guidance: bool, few_shot: usize) -> Result<PromptOptions, CliError> {
    if few_shot > FEW_SHOT.len() {
        return Err(CliError::Usage(format!("few_shot {few_shot} exceeds {}", FEW_SHOT.len())));
    }
    Ok(PromptOptions {
        include_guidance: guidance,
        few_shot,
    })
}

fn generate_one(params: &GenParams, cfg: &GenerateConfig, index: usize) -> Result<TaskInstance, CliError> {
    let seed = derive_seed(cfg.seed, index as u64);
    if !cfg.exact_backtracks {
        return assemble_instance(params, seed).map_err(data);
    }
    for attempt in 0..cfg.max_attempts.max(1) {
        let s = if attempt == 0 {
            seed
        } else {
            derive_seed(seed, RESAMPLE_STREAM + u64::from(attempt))
        };
        let t = assemble_instance(params, s).map_err(data)?;
        if t.b_effective() == params.b_target as usize {
            return Ok(t);
        }
    }
    Err(CliError::Data(format!(
        "instance {index}: no sample with exactly {} doors in {} attempts",
        params.b_target, cfg.max_attempts
    )))
}

pub fn generate(cfg: &GenerateConfig) -> Result<(), CliError> {
    let params = GenParams::new(cfg.n, cfg.m, cfg.backtracks)
        .with_noise(cfg.noise)
        .with_shuffle(cfg.shuffle);
    params.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let tasks: Vec<TaskInstance> = (0..cfg.count)
        .into_par_iter()
        .map(|i| generate_one(&params, cfg, i))
        .collect::<Result<_, _>>()?;
    write_jsonl(&tasks, &cfg.out).map_err(|e| CliError::Data(format!("{}: {e}", cfg.out.display())))?;
    let mut by_b: BTreeMap<usize, usize> = BTreeMap::new();
    for t in &tasks {
        *by_b.entry(t.b_effective()).or_default() += 1;
    }
    let depths = tasks.iter().map(TaskInstance::logical_depth);
    let range = match (depths.clone().min(), depths.max()) {
        (Some(lo), Some(hi)) => format!("{lo}..={hi}"),
        _ => "empty".to_string(),
    };
    println!(
        "wrote {} instances to {}; depth range {range}; doors placed {by_b:?}",
        tasks.len(),
        cfg.out.display(),
    );
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct PromptRecord {
    instance_id: String,
    prompt: String,
}

pub fn prompt(cfg: &PromptConfig) -> Result<(), CliError> {
    let options = prompt_options(cfg.guidance, cfg.few_shot)?;
    let tasks = load_tasks(&cfg.tasks)?;
    let mut out = create(&cfg.out)?;
    for t in &tasks {
        let record = PromptRecord {
            instance_id: t.id.clone(),
            prompt: build_prompt_with(t, options).assembled,
        };
        writeln!(out, "{}", serde_json::to_string(&record).expect("serializes")).map_err(data)?;
    }
    out.flush().map_err(data)?;
    println!("wrote {} prompts to {}", tasks.len(), cfg.out.display());
    Ok(())
}

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let options = prompt_options(cfg.guidance, cfg.few_shot)?;
    let tasks = load_tasks(&cfg.tasks)?;
    let jobs: Vec<Job> = tasks
        .iter()
        .map(|t| Job {
            instance_id: t.id.clone(),
            prompt: build_prompt_with(t, options).assembled,
        })
        .collect();
    let runner = Runner::new(cfg.endpoint.clone()).map_err(|e| CliError::Usage(e.to_string()))?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(data)?;
    let summary = rt
        .block_on(runner.run_batch_to_file(&jobs, cfg.runs, &cfg.out))
        .map_err(|e| match e {
            RunError::Auth { .. } => CliError::Endpoint(e.to_string()),
            other => CliError::Data(other.to_string()),
        })?;
    println!(
        "requested {}, skipped {} already present, succeeded {}, failed {}",
        summary.requested, summary.skipped_existing, summary.succeeded, summary.failed
    );
    if summary.failed > 0 {
        for (id, n) in &summary.failures_by_instance {
            eprintln!("  {id}: {n} failed run(s)");
        }
        return Err(CliError::Endpoint(format!(
            "{} request(s) failed; rerun to retry them",
            summary.failed
        )));
    }
    Ok(())
}

/// A response line as evaluation sees it. Lines that are not valid records
/// but still name their (instance, run) are scored as unparseable.
enum ResponseLine {
    Ok(ModelResponse),
    Corrupt { instance_id: String, run_index: u32 },
}

fn read_response_lines(path: &Path) -> Result<(Vec<ResponseLine>, usize), CliError> {
    let reader = BufReader::new(File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?);
    let mut out = Vec::new();
    let mut unreadable = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(data)?;
        if line.trim().is_empty() {
            continue;
        }
        match response_from_line(&line) {
            Ok(r) => out.push(ResponseLine::Ok(r)),
            Err(e) => {
                let v: Option<Value> = serde_json::from_str(&line).ok();
                let id = v.as_ref().and_then(|v| v.get("instance_id")?.as_str().map(str::to_string));
                let run = v.as_ref().and_then(|v| v.get("run_index")?.as_u64());
                match (id, run.and_then(|r| u32::try_from(r).ok())) {
                    (Some(instance_id), Some(run_index)) => {
                        log::warn!("{}:{}: corrupted response ({e}); scored as unparseable", path.display(), i + 1);
                        out.push(ResponseLine::Corrupt { instance_id, run_index });
                    }
                    _ => {
                        log::warn!("{}:{}: unreadable response skipped ({e})", path.display(), i + 1);
                        unreadable += 1;
                    }
                }
            }
        }
    }
    Ok((out, unreadable))
}

pub fn evaluate(cfg: &EvaluateConfig) -> Result<(), CliError> {
    let tasks = load_tasks(&cfg.tasks)?;
    let by_id: HashMap<&str, &TaskInstance> = tasks.iter().map(|t| (t.id.as_str(), t)).collect();
    let (lines, unreadable) = read_response_lines(&cfg.responses)?;

    // one verdict per (instance, run); a later success replaces a failure
    let mut order: Vec<(String, u32)> = Vec::new();
    let mut chosen: HashMap<(String, u32), RunResult> = HashMap::new();
    let mut orphans = 0;
    for line in lines {
        let (id, run, raw, tokens, ok) = match &line {
            ResponseLine::Ok(r) => (
                &r.instance_id,
                r.run_index,
                r.error.is_none().then_some(r.raw_text.as_str()),
                r.output_tokens,
                r.error.is_none(),
            ),
            ResponseLine::Corrupt { instance_id, run_index } => (instance_id, *run_index, Some(""), -1, false),
        };
        let Some(task) = by_id.get(id.as_str()) else {
            log::warn!("orphan response for unknown instance {id:?} (run {run}) skipped");
            orphans += 1;
            continue;
        };
        let verdict = score_run(task, run, raw, tokens);
        let key = (id.clone(), run);
        match chosen.get(&key) {
            None => {
                order.push(key.clone());
                chosen.insert(key, verdict);
            }
            Some(_) if ok => {
                chosen.insert(key, verdict);
            }
            Some(_) => log::warn!("duplicate failed response for {id} run {run} ignored"),
        }
    }

    let mut out = create(&cfg.out)?;
    let mut exact = 0;
    for key in &order {
        let v = &chosen[key];
        exact += usize::from(v.exact_match);
        writeln!(out, "{}", serde_json::to_string(v).expect("serializes")).map_err(data)?;
    }
    out.flush().map_err(data)?;
    let pass = if order.is_empty() { 0.0 } else { exact as f64 / order.len() as f64 };
    println!(
        "wrote {} verdicts to {}; exact {exact}, Pass@1 {pass:.4}; orphans skipped {orphans}; unreadable lines {unreadable}",
        order.len(),
        cfg.out.display()
    );
    Ok(())
}

fn read_verdicts(path: &Path) -> Result<Vec<RunResult>, CliError> {
    let reader = BufReader::new(File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(data)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

pub fn report(cfg: &ReportConfig) -> Result<(), CliError> {
    let verdicts = read_verdicts(&cfg.verdicts)?;
    if verdicts.is_empty() {
        return Err(CliError::Data(format!("{}: no verdicts", cfg.verdicts.display())));
    }
    let tasks = load_tasks(&cfg.tasks)?;
    let depths: HashMap<String, usize> = tasks.iter().map(|t| (t.id.clone(), t.logical_depth())).collect();
    let bins = aggregate_bins(&verdicts, &depths, cfg.bin_width).map_err(data)?;
    let fit = fit_l0(&bins);

    let write = |suffix: &str, text: &str| -> Result<(), CliError> {
        let path = with_suffix(&cfg.out_prefix, suffix);
        std::fs::write(&path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    };
    write(".csv", &bins_csv(&bins))?;
    write(".svg", &decay_svg(&bins, fit.as_ref().ok()))?;
    let summary = fit_summary(&fit);
    write(".fit.txt", &summary)?;
    let counts = first_violation_histogram(verdicts.iter().map(|v| v.first_violation_step), false);
    let total: f64 = counts.values().sum();
    let mut hist = String::from("step,count,fraction\n");
    for (step, c) in &counts {
        hist.push_str(&format!("{step},{c},{:.6}\n", c / total));
    }
    write(".violations.csv", &hist)?;

    print!("{summary}");
    match fit {
        Ok(_) => Ok(()),
        Err(e) => Err(CliError::Data(e.to_string())),
    }
}

pub fn oracle_check(cfg: &OracleCheckConfig) -> Result<(), CliError> {
    let tasks = load_tasks(&cfg.tasks)?;
    let results: Vec<Result<bool, String>> = tasks
        .par_iter()
        .map(|t| {
            let mut worlds = vec![("true world", t.world())];
            if cfg.with_distractors {
                let kinds = parse_fact_text(&t.facts.texts().join(" ")).map_err(|e| format!("{}: {e}", t.id))?;
                worlds.push(("with distractors", World::from_facts(&kinds).map_err(|e| format!("{}: {e}", t.id))?));
            }
            for (label, world) in &worlds {
                match bfs_optimal(world) {
                    Ok(best) if best == t.logical_depth() => {}
                    Ok(best) => return Err(format!("{} ({label}): optimum {best}, stored depth {}", t.id, t.logical_depth())),
                    Err(OracleError::TooLarge(_)) => return Ok(false),
                    Err(e) => return Err(format!("{} ({label}): {e}", t.id)),
                }
            }
            Ok(true)
        })
        .collect();
    let mut certified = 0;
    let mut skipped = 0;
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(true) => certified += 1,
            Ok(false) => skipped += 1,
            Err(e) => failures.push(e),
        }
    }
    for f in &failures {
        eprintln!("  {f}");
    }
    println!("certified {certified}, skipped (too large) {skipped}, mismatches {}", failures.len());
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Data(format!("{} instance(s) failed certification", failures.len())))
    }
}

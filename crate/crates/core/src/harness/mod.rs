//! Config-driven experiment runner: trials, scoring and persistence.

mod config;
mod metrics;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use thiserror::Error;

pub use config::{ExperimentConfig, Parallelism};
pub use metrics::{score, ConfusionMatrix, Metric, StrategyReport, Summary};

use crate::recognition::EvidenceRecord;
use crate::seed::SeedTree;
use crate::types::{Condition, CoreError, RecognitionLevel, Transcript, Verdict};
use crate::wiring::{build_session, Session, WiringError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("writing results: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Wiring(#[from] WiringError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("thread pool: {0}")]
    Pool(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Outcome of one session.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub condition: Condition,
    pub trial_index: u64,
    /// `None` only for aborted trials.
    pub verdict: Option<Verdict>,
    pub turns: u32,
    pub level: RecognitionLevel,
    /// Why the trial was abandoned, if it was.
    pub aborted: Option<String>,
    pub transcript: Transcript,
    pub evidence: Vec<EvidenceRecord>,
    pub protocol_violations: u32,
    pub downgraded: bool,
}

impl TrialResult {
    /// File stem shared by the transcript and its evidence sidecar.
    pub fn file_stem(&self) -> String {
        format!("{}-{:04}", self.condition.label(), self.trial_index)
    }

    #[cfg(test)]
    pub(crate) fn for_test(
        condition: Condition,
        verdict: Option<Verdict>,
        aborted: Option<String>,
        transcript: Transcript,
    ) -> Self {
        TrialResult {
            condition,
            trial_index: 0,
            turns: verdict.as_ref().map_or(0, Verdict::turns_used),
            verdict,
            level: RecognitionLevel::L0,
            aborted,
            transcript,
            evidence: Vec::new(),
            protocol_violations: 0,
            downgraded: false,
        }
    }
}

/// Seeds for one trial: `master / <condition>[0] / trial[index]`.
pub fn trial_seeds(master_seed: u64, condition: Condition, trial_index: u64) -> Result<SeedTree, CoreError> {
    SeedTree::new(master_seed).child(condition.label(), 0)?.child("trial", trial_index)
}

fn snapshot(
    session: &Session,
    condition: Condition,
    trial_index: u64,
    aborted: Option<String>,
) -> TrialResult {
    TrialResult {
        condition,
        trial_index,
        verdict: if aborted.is_some() { None } else { session.verdict().cloned() },
        turns: session.subject_turns(),
        level: session.level(),
        aborted,
        transcript: session.transcript().clone(),
        evidence: session.evidence_trace().to_vec(),
        protocol_violations: session.protocol_violations(),
        downgraded: session.evidence_trace().iter().any(|r| r.downgraded),
    }
}

/// Runs one session to its verdict or the end of the budget.
///
/// Failures of out-of-process agents abort the trial instead of failing the call.
pub fn run_trial(config: &ExperimentConfig, condition: Condition, trial_index: u64) -> Result<TrialResult, HarnessError> {
    let seeds = trial_seeds(config.master_seed, condition, trial_index)?;
    let counterpart = match condition {
        Condition::Other if !config.other_pool.is_empty() => {
            Some(&config.other_pool[(trial_index % config.other_pool.len() as u64) as usize])
        }
        _ => None,
    };
    let built = build_session(
        condition,
        &config.subject,
        &config.strategy,
        counterpart,
        config.budget,
        &seeds,
    );
    let mut session = match built {
        Ok(s) => s.with_gate(config.rebind_gate).with_channel(config.channel),
        Err(e) if e.is_counterpart_failure() => {
            return Ok(TrialResult {
                condition,
                trial_index,
                verdict: None,
                turns: 0,
                level: RecognitionLevel::L0,
                aborted: Some(e.to_string()),
                transcript: Transcript::new(crate::types::SessionId::new(format!(
                    "{}-{:016x}",
                    condition.label(),
                    seeds.seed()
                ))),
                evidence: Vec::new(),
                protocol_violations: u32::from(matches!(
                    e,
                    WiringError::Protocol(crate::protocol::ProtocolError::ProtocolViolation(_))
                )),
                downgraded: false,
            })
        }
        Err(e) => return Err(e.into()),
    };
    let outcome = session.run_to_end().map(|_| ());
    session.close();
    match outcome {
        Ok(()) => Ok(snapshot(&session, condition, trial_index, None)),
        Err(e) if e.is_counterpart_failure() => Ok(snapshot(&session, condition, trial_index, Some(e.to_string()))),
        Err(e) => Err(e.into()),
    }
}

/// Every (condition, trial) pair, shuffled by a seed derived from the master seed.
pub fn schedule(config: &ExperimentConfig) -> Vec<(Condition, u64)> {
    let mut jobs: Vec<(Condition, u64)> = config
        .conditions
        .iter()
        .flat_map(|c| (0..u64::from(config.trials_per_condition)).map(move |i| (*c, i)))
        .collect();
    let mut rng = SeedTree::new(config.master_seed)
        .child("schedule", 0)
        .expect("static label")
        .rng();
    jobs.shuffle(&mut rng);
    jobs
}

#[cfg(feature = "parallel")]
fn run_jobs(config: &ExperimentConfig, jobs: &[(Condition, u64)]) -> Result<Vec<TrialResult>, HarnessError> {
    use rayon::prelude::*;
    let run = |&(c, i): &(Condition, u64)| run_trial(config, c, i);
    match config.parallelism {
        Parallelism::Sequential => jobs.iter().map(run).collect(),
        Parallelism::Auto => jobs.par_iter().map(run).collect(),
        Parallelism::Threads(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| HarnessError::Pool(e.to_string()))?
            .install(|| jobs.par_iter().map(run).collect()),
    }
}

#[cfg(not(feature = "parallel"))]
fn run_jobs(config: &ExperimentConfig, jobs: &[(Condition, u64)]) -> Result<Vec<TrialResult>, HarnessError> {
    jobs.iter().map(|&(c, i)| run_trial(config, c, i)).collect()
}

/// Runs every trial and returns the results ordered by (condition as listed
/// in the config, trial index), whatever order they finished in.
pub fn run_trials(config: &ExperimentConfig) -> Result<Vec<TrialResult>, HarnessError> {
    config.validate()?;
    let mut results = run_jobs(config, &schedule(config))?;
    let rank = |c: Condition| config.conditions.iter().position(|x| *x == c);
    results.sort_by_key(|r| (rank(r.condition), r.trial_index));
    Ok(results)
}

fn mean(xs: &[u32]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().map(|&x| f64::from(x)).sum::<f64>() / xs.len() as f64)
}

/// Aggregates results into the summary written to `summary.json`.
pub fn summarize(config: &ExperimentConfig, results: &[TrialResult]) -> Summary {
    let matrix = score(results);
    let caps = config.subject.capabilities();
    let mut aborted = BTreeMap::new();
    let mut condition_accuracy = BTreeMap::new();
    let mut mean_turns = BTreeMap::new();
    for c in &config.conditions {
        let of_c: Vec<&TrialResult> = results.iter().filter(|r| r.condition == *c).collect();
        aborted.insert(c.label().to_string(), of_c.iter().filter(|r| r.aborted.is_some()).count() as u64);
        condition_accuracy.insert(c.label().to_string(), Metric::from(matrix.condition_accuracy(*c)));
        let decided: Vec<u32> = of_c
            .iter()
            .filter_map(|r| r.verdict.as_ref())
            .filter(|v| !v.is_undecided())
            .map(Verdict::turns_used)
            .collect();
        mean_turns.insert(c.label().to_string(), Metric::from(mean(&decided)));
    }
    Summary {
        master_seed: config.master_seed,
        trials_per_condition: config.trials_per_condition,
        budget: config.budget,
        subject: config.subject.describe(),
        strategy: StrategyReport {
            kind: config.strategy.kind.label().to_string(),
            baseline_cheat: config.strategy.kind.is_baseline(),
            self_simulation: caps.self_simulation,
            analytic_likelihood: caps.analytic_likelihood,
            downgraded_trials: results.iter().filter(|r| r.downgraded).count() as u64,
        },
        completed: results.iter().filter(|r| r.aborted.is_none()).count() as u64,
        aborted,
        confusion: matrix.to_map(),
        accuracy: Metric::from(matrix.accuracy()),
        condition_accuracy,
        mean_turns_to_verdict: mean_turns,
        protocol_violations: results.iter().map(|r| u64::from(r.protocol_violations)).sum(),
        matrix,
    }
}

/// Writes `transcripts/`, `evidence/`, `results.csv` and `summary.json` under `dir`.
pub fn write_outputs(dir: &Path, results: &[TrialResult], summary: &Summary) -> Result<(), HarnessError> {
    let transcripts = dir.join("transcripts");
    let evidence = dir.join("evidence");
    for d in [dir, transcripts.as_path(), evidence.as_path()] {
        fs::create_dir_all(d).map_err(io_err(d))?;
    }
    for r in results {
        let path = transcripts.join(format!("{}.jsonl", r.file_stem()));
        fs::write(&path, r.transcript.to_jsonl()).map_err(io_err(&path))?;
        let path = evidence.join(format!("{}.jsonl", r.file_stem()));
        let mut lines = String::new();
        for rec in &r.evidence {
            lines.push_str(&serde_json::to_string(rec).expect("evidence serializes"));
            lines.push('\n');
        }
        fs::write(&path, lines).map_err(io_err(&path))?;
    }

    let path = dir.join("results.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["condition", "verdict", "confidence", "turns", "level", "aborted"])?;
    for r in results {
        let (label, conf) = match &r.verdict {
            Some(v) => (v.label().label().to_string(), format!("{:.6}", v.confidence())),
            None => (String::new(), String::new()),
        };
        w.write_record([
            r.condition.label().to_string(),
            label,
            conf,
            r.turns.to_string(),
            r.level.to_string(),
            r.aborted.is_some().to_string(),
        ])?;
    }
    w.flush().map_err(io_err(&path))?;

    let path = dir.join("summary.json");
    let mut json = serde_json::to_string_pretty(summary).expect("summary serializes");
    json.push('\n');
    fs::write(&path, json).map_err(io_err(&path))
}

/// Runs the whole experiment and persists it under `config.output_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Summary, HarnessError> {
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let results = run_trials(config)?;
    let summary = summarize(config, &results);
    write_outputs(dir, &results, &summary)?;
    Ok(summary)
}

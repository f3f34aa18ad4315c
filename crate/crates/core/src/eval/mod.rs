//! Execution-based evaluation: generate candidates per benchmark problem,
//! run them against the problem's tests in a subprocess, report pass@k per
//! seed and averaged over seeds.

pub mod benchmark;
pub mod passk;
pub mod sandbox;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decode::{DecodeError, Orchestrator, SamplingParams, TokenGenerator};

pub use benchmark::{load_benchmark, parse_benchmark, BenchmarkProblem};
pub use passk::{pass_at_k, unbiased_estimate, PassAtK, PassAtKMode, Passed};
pub use sandbox::{assemble_program, run_candidate, CandidateResult, CandidateStatus};

pub const DEFAULT_TEMPLATE: &str = "{context}{completion}\n\n{tests}\n";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("benchmark has no problems")]
    EmptyBenchmark,
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("invalid evaluation config: {0}")]
    InvalidConfig(String),
    #[error("candidate for {0} still contains tool-call markup")]
    MarkersInCandidate(String),
    #[error("problem #{problem} has {have} candidates, pass@{need} needs {need}")]
    NotEnoughCandidates { problem: usize, have: usize, need: usize },
    #[error("could not run candidate: {0}")]
    Spawn(String),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub k_values: Vec<usize>,
    /// Candidates generated per problem and seed.
    pub n_samples: usize,
    pub seeds: Vec<u64>,
    pub timeout_s: f64,
    pub interpreter_cmd: Vec<String>,
    /// Program layout; see [`assemble_program`].
    pub template: String,
    /// Parallel candidate runs; 0 picks the number of CPUs.
    pub workers: usize,
    pub output_cap_bytes: usize,
    pub sandbox_guard: bool,
    pub pass_at_k_mode: PassAtKMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k_values: vec![1, 10],
            n_samples: 10,
            seeds: vec![0, 1000, 2000],
            timeout_s: 10.0,
            interpreter_cmd: vec!["python3".into(), "-I".into(), "-B".into()],
            template: DEFAULT_TEMPLATE.into(),
            workers: 0,
            output_cap_bytes: 64 * 1024,
            sandbox_guard: true,
            pass_at_k_mode: PassAtKMode::FirstK,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::InvalidConfig(m));
        if self.k_values.is_empty() || self.k_values.contains(&0) {
            return bad(format!("k values must be positive, got {:?}", self.k_values));
        }
        let max_k = *self.k_values.iter().max().unwrap();
        if self.n_samples < max_k {
            return bad(format!("{} samples cannot support pass@{max_k}", self.n_samples));
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return bad(format!("timeout {}", self.timeout_s));
        }
        if self.interpreter_cmd.is_empty() {
            return bad("interpreter command is empty".into());
        }
        if !self.template.contains("{completion}") {
            return bad("template must contain {completion}".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemOutcome {
    pub seed: u64,
    pub problem_id: String,
    pub statuses: Vec<CandidateStatus>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub benchmark: String,
    pub problems: usize,
    pub n_samples: usize,
    pub mode: PassAtKMode,
    pub seeds: Vec<u64>,
    /// pass@k per seed, in seed order.
    pub pass_at: BTreeMap<usize, Vec<f64>>,
    pub solved: BTreeMap<usize, Vec<usize>>,
    pub mean: BTreeMap<usize, f64>,
    pub tool_invocations: usize,
    pub generation_failures: usize,
    pub outcomes: Vec<ProblemOutcome>,
}

impl EvalReport {
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{}: {} problems, {} samples per problem, {} seed(s)",
            self.benchmark,
            self.problems,
            self.n_samples,
            self.seeds.len()
        );
        let _ = write!(out, "{:<10}", "metric");
        for seed in &self.seeds {
            let _ = write!(out, "{:>12}", format!("seed={seed}"));
        }
        let _ = writeln!(out, "{:>12}", "mean");
        for (k, values) in &self.pass_at {
            let _ = write!(out, "{:<10}", format!("pass@{k}"));
            for v in values {
                let _ = write!(out, "{:>12}", format!("{:.2}%", v * 100.0));
            }
            let _ = writeln!(out, "{:>12}", format!("{:.2}%", self.mean[k] * 100.0));
        }
        let _ = writeln!(
            out,
            "tool invocations: {}, failed generations: {}",
            self.tool_invocations, self.generation_failures
        );
        out
    }
}

/// Runs every problem under every seed. Candidate `j` of seed `s` is decoded
/// with seed `s + j`.
pub fn evaluate(
    generator: &mut dyn TokenGenerator,
    orchestrator: &Orchestrator<'_>,
    benchmark_name: &str,
    problems: &[BenchmarkProblem],
    config: &EvalConfig,
    sampling: &SamplingParams,
) -> Result<EvalReport, EvalError> {
    config.validate()?;
    if problems.is_empty() {
        return Err(EvalError::EmptyBenchmark);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| EvalError::InvalidConfig(e.to_string()))?;
    let markers = &orchestrator.config().markers;

    let mut report = EvalReport {
        benchmark: benchmark_name.to_string(),
        problems: problems.len(),
        n_samples: config.n_samples,
        mode: config.pass_at_k_mode,
        seeds: config.seeds.clone(),
        pass_at: BTreeMap::new(),
        solved: BTreeMap::new(),
        mean: BTreeMap::new(),
        tool_invocations: 0,
        generation_failures: 0,
        outcomes: Vec::new(),
    };

    for &seed in &config.seeds {
        let params = sampling.with_seed(seed);
        let mut jobs = Vec::with_capacity(problems.len() * config.n_samples);
        for (pi, problem) in problems.iter().enumerate() {
            let outcomes = orchestrator.generate_candidates(
                generator,
                &problem.prompt(),
                Some(&problem.id),
                config.n_samples,
                &params,
            )?;
            for (ci, outcome) in outcomes.into_iter().enumerate() {
                report.tool_invocations += outcome.trace.invocation_count();
                let failure = outcome.failure().map(str::to_string);
                if failure.is_some() {
                    report.generation_failures += 1;
                }
                jobs.push((pi, ci, outcome.clean_code, failure));
            }
        }
        log::info!("seed {seed}: running {} candidates", jobs.len());

        let results: Vec<CandidateResult> = pool.install(|| {
            jobs.par_iter()
                .map(|(pi, ci, code, failure)| match failure {
                    Some(message) => Ok(CandidateResult {
                        problem_id: problems[*pi].id.clone(),
                        candidate_index: *ci,
                        status: CandidateStatus::Error,
                        stderr_excerpt: message.clone(),
                        wall_ms: 0.0,
                    }),
                    None => run_candidate(&problems[*pi], code, *ci, config, markers),
                })
                .collect::<Result<_, _>>()
        })?;

        let per_problem: Vec<Vec<CandidateResult>> = results
            .chunks(config.n_samples)
            .map(|c| c.to_vec())
            .collect();
        for k in &config.k_values {
            let p = pass_at_k(&per_problem, *k, config.pass_at_k_mode)?;
            report.pass_at.entry(*k).or_default().push(p.value);
            report.solved.entry(*k).or_default().push(p.solved);
        }
        report
            .outcomes
            .extend(per_problem.iter().zip(problems).map(|(cands, problem)| ProblemOutcome {
                seed,
                problem_id: problem.id.clone(),
                statuses: cands.iter().map(|c| c.status).collect(),
            }));
    }

    report.mean = report
        .pass_at
        .iter()
        .map(|(k, values)| (*k, values.iter().sum::<f64>() / values.len() as f64))
        .collect();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        EvalConfig::default().validate().unwrap();
        let mut c = EvalConfig::default();
        c.n_samples = 5;
        assert!(c.validate().is_err());
        let mut c = EvalConfig::default();
        c.seeds.clear();
        assert!(c.validate().is_err());
        let mut c = EvalConfig::default();
        c.template = "{context}".into();
        assert!(c.validate().is_err());
    }
}

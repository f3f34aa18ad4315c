use std::collections::HashSet;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;

/// One benchmark task. On disk: `{"id", "context", "description", "tests"}`
/// per line; the HumanEval-family names `task_id`, `prompt`, `test`,
/// `entry_point` and `canonical_solution` are accepted as aliases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkProblem {
    #[serde(alias = "task_id")]
    pub id: String,
    #[serde(default, alias = "prompt", rename = "context")]
    pub context_code: String,
    #[serde(default)]
    pub description: String,
    #[serde(alias = "test", rename = "tests")]
    pub test_code: String,
    #[serde(default, alias = "entry_point", skip_serializing_if = "Option::is_none")]
    pub entry_hint: Option<String>,
    #[serde(default, alias = "canonical_solution", skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

impl BenchmarkProblem {
    /// Text handed to the generator.
    pub fn prompt(&self) -> String {
        if !self.context_code.is_empty() {
            return self.context_code.clone();
        }
        self.description
            .lines()
            .map(|l| format!("# {l}\n"))
            .collect::<String>()
    }
}

pub fn parse_benchmark(text: &str) -> Result<Vec<BenchmarkProblem>, EvalError> {
    let mut problems: Vec<BenchmarkProblem> = Vec::new();
    let mut ids = HashSet::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let schema = |message: String| EvalError::Schema {
            line: lineno + 1,
            message,
        };
        let problem: BenchmarkProblem = serde_json::from_str(line).map_err(|e| schema(e.to_string()))?;
        if problem.test_code.trim().is_empty() {
            return Err(schema(format!("problem {} has no tests", problem.id)));
        }
        if !ids.insert(problem.id.clone()) {
            return Err(schema(format!("duplicate problem id {}", problem.id)));
        }
        problems.push(problem);
    }
    if problems.is_empty() {
        return Err(EvalError::EmptyBenchmark);
    }
    Ok(problems)
}

pub fn load_benchmark(path: &Path) -> Result<Vec<BenchmarkProblem>, EvalError> {
    let file = std::fs::File::open(path).map_err(|e| EvalError::Io(path.display().to_string(), e))?;
    let mut text = String::new();
    for line in std::io::BufReader::new(file).lines() {
        text.push_str(&line.map_err(|e| EvalError::Io(path.display().to_string(), e))?);
        text.push('\n');
    }
    let problems = parse_benchmark(&text)?;
    log::info!("loaded {} problems from {}", problems.len(), path.display());
    Ok(problems)
}

//! Runner for the scripted decode fixture, shared by the core tests and the
//! acceptance suite.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::Deserialize;
use toolcoder_core::decode::{
    DecodeConfig, DecodeOutcome, Orchestrator, SamplingParams, ScriptedGenerator, StopReason, ToolFailurePolicy,
    TraceEvent,
};
use toolcoder_core::search::{ApiSearchTool, ToolError};

#[derive(Debug, Deserialize)]
pub struct Suite {
    pub prompt: String,
    pub tool: BTreeMap<String, String>,
    pub cases: Vec<Case>,
}

#[derive(Debug, Deserialize)]
pub struct Case {
    pub name: String,
    pub chunks: Vec<String>,
    pub max_len: Option<usize>,
    #[serde(default)]
    pub stop_sequences: Vec<String>,
    pub stop_at_dedent: Option<bool>,
    #[serde(default)]
    pub policy: ToolFailurePolicy,
    pub tool_enabled: Option<bool>,
    pub expect: Expect,
}

#[derive(Debug, Deserialize)]
pub struct Expect {
    pub raw_text: String,
    pub clean_code: String,
    pub stop: String,
    pub calls: Vec<(String, String)>,
    #[serde(default)]
    pub disabled: Vec<String>,
}

/// Answers from a fixed table and counts every call.
pub struct MapTool {
    pub answers: BTreeMap<String, String>,
    pub calls: AtomicUsize,
}

impl ApiSearchTool for MapTool {
    fn search(&self, query: &str) -> Result<String, ToolError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.answers
            .get(query)
            .cloned()
            .ok_or_else(|| ToolError::Failed(format!("no answer for {query}")))
    }
}

pub fn load(path: &Path) -> Suite {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub fn stop_name(reason: &StopReason) -> &'static str {
    match reason {
        StopReason::MaxLen => "max_len",
        StopReason::StopSequence => "stop_sequence",
        StopReason::GeneratorDone => "generator_done",
        StopReason::GeneratorFailed { .. } => "generator_failed",
        StopReason::ToolFailed { .. } => "tool_failed",
    }
}

pub fn run_case(suite: &Suite, case: &Case) -> (DecodeOutcome, usize) {
    let tool = MapTool {
        answers: suite.tool.clone(),
        calls: AtomicUsize::new(0),
    };
    let config = DecodeConfig {
        on_tool_failure: case.policy,
        ..DecodeConfig::default()
    };
    let enabled = case.tool_enabled.unwrap_or(true);
    let orchestrator = Orchestrator::new(enabled.then_some(&tool as &dyn ApiSearchTool), config);
    let defaults = SamplingParams::default();
    let params = SamplingParams {
        max_len: case.max_len.unwrap_or(defaults.max_len),
        stop_sequences: case.stop_sequences.clone(),
        stop_at_dedent: case.stop_at_dedent.unwrap_or(defaults.stop_at_dedent),
        ..defaults
    };
    let mut generator = ScriptedGenerator::fixed(case.chunks.clone());
    let outcome = orchestrator
        .infer_with_tool(&mut generator, &suite.prompt, &params)
        .unwrap();
    (outcome, tool.calls.load(Ordering::SeqCst))
}

/// Differences between the outcome and the expectation; empty when it conforms.
pub fn check_case(suite: &Suite, case: &Case) -> Vec<String> {
    let (outcome, tool_calls) = run_case(suite, case);
    let mut problems = Vec::new();
    let e = &case.expect;
    if outcome.raw_text != e.raw_text {
        problems.push(format!("raw_text {:?} != {:?}", outcome.raw_text, e.raw_text));
    }
    if outcome.clean_code != e.clean_code {
        problems.push(format!("clean_code {:?} != {:?}", outcome.clean_code, e.clean_code));
    }
    let stop = outcome.trace.stop_reason().map(stop_name).unwrap_or("none");
    if stop != e.stop {
        problems.push(format!("stop {stop} != {}", e.stop));
    }
    let calls: Vec<(String, String)> = outcome
        .trace
        .tool_invocations()
        .map(|(q, a, _)| (q.to_string(), a.to_string()))
        .collect();
    if calls != e.calls {
        problems.push(format!("calls {calls:?} != {:?}", e.calls));
    }
    if tool_calls != e.calls.len() {
        problems.push(format!("tool asked {tool_calls} times, expected {}", e.calls.len()));
    }
    let disabled: Vec<&str> = outcome
        .trace
        .events
        .iter()
        .filter_map(|ev| match ev {
            TraceEvent::ToolDisabled { query } => Some(query.as_str()),
            _ => None,
        })
        .collect();
    if disabled != e.disabled.iter().map(String::as_str).collect::<Vec<_>>() {
        problems.push(format!("disabled {disabled:?} != {:?}", e.disabled));
    }
    let emitted: String = outcome
        .trace
        .events
        .iter()
        .filter_map(|ev| match ev {
            TraceEvent::TextEmitted { chunk } => Some(chunk.as_str()),
            _ => None,
        })
        .collect();
    if emitted != case.chunks[..emitted_chunks(&outcome, case)].concat() {
        problems.push("trace does not record the generator's chunks verbatim".into());
    }
    problems
}

fn emitted_chunks(outcome: &DecodeOutcome, case: &Case) -> usize {
    outcome
        .trace
        .events
        .iter()
        .filter(|ev| matches!(ev, TraceEvent::TextEmitted { .. }))
        .count()
        .min(case.chunks.len())
}

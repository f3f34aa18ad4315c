//! Tool-augmented decoding.
//!
//! The orchestrator watches the decoded text for an open marker, lets the
//! generator write `APISearch(query)->`, then suspends it, asks the search
//! tool, splices `answer</API>` into the output and resumes. The generated
//! character budget counts the spliced text too.

pub mod generator;
mod orchestrator;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::ToolCallMarkers;

pub use generator::{
    GenerationScript, GeneratorError, HttpGenerator, Increment, ScriptedGenerator, SessionInfo, StepRequest,
    StepResponse, TokenGenerator,
};
pub use orchestrator::{clean_generated_code, Orchestrator};

pub const DEFAULT_TEMPERATURE: f64 = 0.8;
pub const DEFAULT_TOOL_TIMEOUT_MS: u64 = 600;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("invalid decode input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingParams {
    pub temperature: f64,
    pub seed: u64,
    /// Budget in generated characters, spliced answers included.
    pub max_len: usize,
    pub stop_sequences: Vec<String>,
    /// Stop at a blank line followed by an unindented line.
    pub stop_at_dedent: bool,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            temperature: DEFAULT_TEMPERATURE,
            seed: 0,
            max_len: 512,
            stop_sequences: Vec::new(),
            stop_at_dedent: true,
        }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<(), DecodeError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(DecodeError::InvalidInput(format!("temperature {}", self.temperature)));
        }
        if self.max_len == 0 {
            return Err(DecodeError::InvalidInput("max_len must be positive".into()));
        }
        if self.stop_sequences.iter().any(String::is_empty) {
            return Err(DecodeError::InvalidInput("empty stop sequence".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// What to do when the search tool errors or overruns its timeout.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolFailurePolicy {
    #[default]
    InjectEmpty,
    Abort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub markers: ToolCallMarkers,
    pub tool_timeout_ms: u64,
    pub on_tool_failure: ToolFailurePolicy,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            markers: ToolCallMarkers::default(),
            tool_timeout_ms: DEFAULT_TOOL_TIMEOUT_MS,
            on_tool_failure: ToolFailurePolicy::InjectEmpty,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StopReason {
    MaxLen,
    StopSequence,
    GeneratorDone,
    GeneratorFailed { message: String },
    ToolFailed { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    TextEmitted {
        chunk: String,
    },
    ToolInvoked {
        query: String,
        answer: String,
        latency_ms: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    /// A call was intercepted while no tool is configured; nothing was asked.
    ToolDisabled {
        query: String,
    },
    Stopped {
        reason: StopReason,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationTrace {
    pub events: Vec<TraceEvent>,
}

impl GenerationTrace {
    pub fn tool_invocations(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.events.iter().filter_map(|e| match e {
            TraceEvent::ToolInvoked {
                query,
                answer,
                latency_ms,
                ..
            } => Some((query.as_str(), answer.as_str(), *latency_ms)),
            _ => None,
        })
    }

    pub fn invocation_count(&self) -> usize {
        self.tool_invocations().count()
    }

    pub fn stop_reason(&self) -> Option<&StopReason> {
        self.events.iter().rev().find_map(|e| match e {
            TraceEvent::Stopped { reason } => Some(reason),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeOutcome {
    pub raw_text: String,
    pub clean_code: String,
    pub trace: GenerationTrace,
}

impl DecodeOutcome {
    /// Generator or tool failure ended the session early.
    pub fn failure(&self) -> Option<&str> {
        match self.trace.stop_reason()? {
            StopReason::GeneratorFailed { message } | StopReason::ToolFailed { message } => Some(message),
            _ => None,
        }
    }
}

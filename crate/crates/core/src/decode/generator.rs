//! Text generators: a scripted player for tests and fixtures, and an HTTP
//! client for a remote model server.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::SamplingParams;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GeneratorError {
    #[error("generator request failed: {0}")]
    Transport(String),
    #[error("generator returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("generator produced an empty increment without finishing")]
    EmptyIncrement,
    #[error("invalid generation script: {0}")]
    Script(String),
}

/// One decoding step's output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Increment {
    pub text: String,
    pub done: bool,
}

/// Identifies a generation session to the generator.
#[derive(Debug, Clone, Copy)]
pub struct SessionInfo<'a> {
    pub prompt: &'a str,
    pub seed: u64,
    pub problem_id: Option<&'a str>,
    pub candidate_index: usize,
}

/// Produces text increments for a context.
///
/// Output must be a deterministic function of the context, the sampling
/// parameters (including the seed) and the session.
pub trait TokenGenerator {
    fn begin(&mut self, _session: &SessionInfo<'_>) -> Result<(), GeneratorError> {
        Ok(())
    }

    fn step(&mut self, context: &str, params: &SamplingParams) -> Result<Increment, GeneratorError>;
}

impl<G: TokenGenerator + ?Sized> TokenGenerator for Box<G> {
    fn begin(&mut self, session: &SessionInfo<'_>) -> Result<(), GeneratorError> {
        (**self).begin(session)
    }

    fn step(&mut self, context: &str, params: &SamplingParams) -> Result<Increment, GeneratorError> {
        (**self).step(context, params)
    }
}

/// Emission chunks keyed by `"<seed>"`, `"#<candidate index>"` or `"*"`.
pub type SeedScript = BTreeMap<String, Vec<String>>;

/// A script file: either a bare [`SeedScript`] or per-problem scripts with
/// an optional fallback.
///
/// ```json
/// {"*": ["x = 1"], "7": ["x = 2"]}
/// {"problems": {"NumpyEval/3": {"#0": ["..."]}}, "default": {"*": ["pass"]}}
/// ```
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationScript {
    #[serde(default)]
    pub problems: BTreeMap<String, SeedScript>,
    #[serde(default)]
    pub default: SeedScript,
}

impl GenerationScript {
    pub fn from_json(text: &str) -> Result<Self, GeneratorError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| GeneratorError::Script(e.to_string()))?;
        let wrapped = value
            .as_object()
            .is_some_and(|o| o.contains_key("problems") || o.contains_key("default"));
        if wrapped {
            serde_json::from_value(value).map_err(|e| GeneratorError::Script(e.to_string()))
        } else {
            let default: SeedScript =
                serde_json::from_value(value).map_err(|e| GeneratorError::Script(e.to_string()))?;
            Ok(Self {
                problems: BTreeMap::new(),
                default,
            })
        }
    }

    pub fn load(path: &Path) -> Result<Self, GeneratorError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GeneratorError::Script(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn chunks_for(&self, session: &SessionInfo<'_>) -> &[String] {
        let table = session
            .problem_id
            .and_then(|id| self.problems.get(id))
            .unwrap_or(&self.default);
        table
            .get(&session.seed.to_string())
            .or_else(|| table.get(&format!("#{}", session.candidate_index)))
            .or_else(|| table.get("*"))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

/// Replays fixed chunks, one per step, ignoring the context.
#[derive(Debug, Clone)]
pub struct ScriptedGenerator {
    script: GenerationScript,
    pending: Vec<String>,
    cursor: usize,
}

impl ScriptedGenerator {
    pub fn new(script: GenerationScript) -> Self {
        Self {
            script,
            pending: Vec::new(),
            cursor: 0,
        }
    }

    /// Same chunks for every session.
    pub fn fixed<I, S>(chunks: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let default = BTreeMap::from([("*".to_string(), chunks.into_iter().map(Into::into).collect())]);
        Self::new(GenerationScript {
            problems: BTreeMap::new(),
            default,
        })
    }
}

impl TokenGenerator for ScriptedGenerator {
    fn begin(&mut self, session: &SessionInfo<'_>) -> Result<(), GeneratorError> {
        self.pending = self.script.chunks_for(session).to_vec();
        self.cursor = 0;
        Ok(())
    }

    fn step(&mut self, _context: &str, _params: &SamplingParams) -> Result<Increment, GeneratorError> {
        let Some(chunk) = self.pending.get(self.cursor) else {
            return Ok(Increment {
                text: String::new(),
                done: true,
            });
        };
        self.cursor += 1;
        Ok(Increment {
            text: chunk.clone(),
            done: self.cursor == self.pending.len(),
        })
    }
}

/// Request body of `POST /v1/step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRequest {
    pub context: String,
    pub temperature: f64,
    pub seed: u64,
    pub max_new: usize,
}

/// Response body of `POST /v1/step`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepResponse {
    pub text: String,
    pub done: bool,
}

/// Client for a model server speaking the `/v1/step` protocol.
#[derive(Debug, Clone)]
pub struct HttpGenerator {
    client: reqwest::blocking::Client,
    endpoint: String,
    max_new: usize,
}

impl HttpGenerator {
    pub fn new(base_url: &str, max_new: usize, timeout: Duration) -> Result<Self, GeneratorError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GeneratorError::Transport(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: format!("{}/v1/step", base_url.trim_end_matches('/')),
            max_new: max_new.max(1),
        })
    }
}

impl TokenGenerator for HttpGenerator {
    fn step(&mut self, context: &str, params: &SamplingParams) -> Result<Increment, GeneratorError> {
        let request = StepRequest {
            context: context.to_string(),
            temperature: params.temperature,
            seed: params.seed,
            max_new: self.max_new,
        };
        let resp = self
            .client
            .post(&self.endpoint)
            .json(&request)
            .send()
            .map_err(|e| GeneratorError::Transport(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(GeneratorError::Status {
                status: status.as_u16(),
                body,
            });
        }
        let body: StepResponse = resp.json().map_err(|e| GeneratorError::Transport(e.to_string()))?;
        Ok(Increment {
            text: body.text,
            done: body.done,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn session(seed: u64, index: usize, problem: Option<&str>) -> SessionInfo<'_> {
        SessionInfo {
            prompt: "p",
            seed,
            problem_id: problem,
            candidate_index: index,
        }
    }

    #[test]
    fn script_lookup_precedence() {
        let script = GenerationScript::from_json(
            r##"{"problems": {"a": {"#1": ["idx"], "5": ["seed"]}}, "default": {"*": ["any"]}}"##,
        )
        .unwrap();
        assert_eq!(script.chunks_for(&session(5, 1, Some("a"))), ["seed"]);
        assert_eq!(script.chunks_for(&session(9, 1, Some("a"))), ["idx"]);
        assert!(script.chunks_for(&session(9, 0, Some("a"))).is_empty());
        assert_eq!(script.chunks_for(&session(9, 0, Some("b"))), ["any"]);
        assert_eq!(script.chunks_for(&session(9, 0, None)), ["any"]);
    }

    #[test]
    fn bare_seed_map() {
        let script = GenerationScript::from_json(r#"{"3": ["x"], "*": ["y"]}"#).unwrap();
        assert_eq!(script.chunks_for(&session(3, 0, None)), ["x"]);
        assert_eq!(script.chunks_for(&session(4, 0, None)), ["y"]);
        assert!(GenerationScript::from_json("[1]").is_err());
    }

    #[test]
    fn scripted_steps_flag_done_on_last_chunk() {
        let mut g = ScriptedGenerator::fixed(["a", "b"]);
        let params = SamplingParams::default();
        g.begin(&session(0, 0, None)).unwrap();
        assert_eq!(g.step("", &params).unwrap(), Increment { text: "a".into(), done: false });
        assert_eq!(g.step("", &params).unwrap(), Increment { text: "b".into(), done: true });
        assert_eq!(g.step("", &params).unwrap(), Increment { text: String::new(), done: true });
        g.begin(&session(0, 0, None)).unwrap();
        assert_eq!(g.step("", &params).unwrap().text, "a");
    }
}

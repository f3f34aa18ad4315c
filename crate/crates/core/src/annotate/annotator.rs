//! Annotator backends: a chat-completion style HTTP client, a JSONL fixture
//! player, and a recorder that turns live runs into fixtures.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::prompt::ChatRequest;
use super::AnnotateError;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnnotatorError {
    #[error("annotator request failed: {0}")]
    Transport(String),
    #[error("annotator timed out")]
    Timeout,
    #[error("annotator returned status {0}")]
    Status(u16),
    #[error("no fixture for sample {0:?}")]
    MissingFixture(String),
}

pub trait AnnotatorClient: Send + Sync {
    fn complete(&self, sample_id: &str, request: &ChatRequest) -> Result<String, AnnotatorError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
}

/// POSTs `{"system", "messages"}` and expects `{"text"}` back.
#[derive(Debug, Clone)]
pub struct HttpAnnotator {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: Option<String>,
}

impl HttpAnnotator {
    pub fn new(endpoint: &str, api_key: Option<String>, timeout: Duration) -> Result<Self, AnnotatorError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| AnnotatorError::Transport(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: endpoint.to_string(),
            api_key,
        })
    }
}

impl AnnotatorClient for HttpAnnotator {
    fn complete(&self, _sample_id: &str, request: &ChatRequest) -> Result<String, AnnotatorError> {
        let mut builder = self.client.post(&self.endpoint).json(request);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let resp = builder.send().map_err(|e| {
            if e.is_timeout() {
                AnnotatorError::Timeout
            } else {
                AnnotatorError::Transport(e.to_string())
            }
        })?;
        if !resp.status().is_success() {
            return Err(AnnotatorError::Status(resp.status().as_u16()));
        }
        let body: ChatResponse = resp.json().map_err(|e| {
            if e.is_timeout() {
                AnnotatorError::Timeout
            } else {
                AnnotatorError::Transport(e.to_string())
            }
        })?;
        Ok(body.text)
    }
}

/// One fixture line: `{"id", "text"}`, or `{"id", "error"}` to replay a failure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureLine {
    pub id: String,
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct FixtureAnnotator {
    lines: BTreeMap<String, FixtureLine>,
}

impl FixtureAnnotator {
    pub fn from_lines(lines: impl IntoIterator<Item = FixtureLine>) -> Self {
        Self {
            lines: lines.into_iter().map(|l| (l.id.clone(), l)).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, AnnotateError> {
        let io = |e| AnnotateError::Io(path.display().to_string(), e);
        let file = std::fs::File::open(path).map_err(io)?;
        let mut lines = Vec::new();
        for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            lines.push(serde_json::from_str(&line).map_err(|e| AnnotateError::Schema {
                line: lineno + 1,
                message: e.to_string(),
            })?);
        }
        Ok(Self::from_lines(lines))
    }
}

impl AnnotatorClient for FixtureAnnotator {
    fn complete(&self, sample_id: &str, _request: &ChatRequest) -> Result<String, AnnotatorError> {
        let line = self
            .lines
            .get(sample_id)
            .ok_or_else(|| AnnotatorError::MissingFixture(sample_id.to_string()))?;
        match (&line.text, &line.error) {
            (_, Some(err)) if err == "timeout" => Err(AnnotatorError::Timeout),
            (_, Some(err)) => Err(AnnotatorError::Transport(err.clone())),
            (Some(text), None) => Ok(text.clone()),
            (None, None) => Err(AnnotatorError::MissingFixture(sample_id.to_string())),
        }
    }
}

/// Wraps a client and keeps every exchange for [`RecordingAnnotator::save`].
pub struct RecordingAnnotator<A> {
    inner: A,
    recorded: Mutex<BTreeMap<String, FixtureLine>>,
}

impl<A: AnnotatorClient> RecordingAnnotator<A> {
    pub fn new(inner: A) -> Self {
        Self {
            inner,
            recorded: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), AnnotateError> {
        let io = |e| AnnotateError::Io(path.display().to_string(), e);
        let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        for line in self.recorded.lock().unwrap().values() {
            writeln!(file, "{}", serde_json::to_string(line).expect("fixture lines serialize")).map_err(io)?;
        }
        file.flush().map_err(io)
    }
}

impl<A: AnnotatorClient> AnnotatorClient for RecordingAnnotator<A> {
    fn complete(&self, sample_id: &str, request: &ChatRequest) -> Result<String, AnnotatorError> {
        let result = self.inner.complete(sample_id, request);
        let line = FixtureLine {
            id: sample_id.to_string(),
            text: result.as_ref().ok().cloned(),
            error: result.as_ref().err().map(|e| match e {
                AnnotatorError::Timeout => "timeout".to_string(),
                other => other.to_string(),
            }),
        };
        self.recorded.lock().unwrap().insert(sample_id.to_string(), line);
        result
    }
}

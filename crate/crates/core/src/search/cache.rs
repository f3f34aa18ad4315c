//! Recorded search answers keyed by normalized query.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use super::{ApiSearchTool, SearchError, ToolError};

/// Lowercase, collapse whitespace, trim punctuation and blanks at both ends.
pub fn normalize_query(query: &str) -> String {
    let collapsed = query.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_matches(|c: char| c.is_whitespace() || c.is_ascii_punctuation())
        .to_string()
}

/// One cache line: `{"query", "answer", "source", "latency_ms"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub query: String,
    pub answer: String,
    #[serde(default)]
    pub source: String,
    #[serde(default)]
    pub latency_ms: f64,
}

/// What a replay lookup does when the query was never recorded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissPolicy {
    Error,
    #[default]
    Empty,
}

#[derive(Debug, Default)]
pub struct SearchFixtureCache {
    entries: RwLock<BTreeMap<String, CacheEntry>>,
}

impl SearchFixtureCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(path: &Path) -> Result<Self, SearchError> {
        let file = std::fs::File::open(path).map_err(|e| SearchError::Io(path.display().to_string(), e))?;
        let cache = Self::new();
        for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| SearchError::Io(path.display().to_string(), e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: CacheEntry = serde_json::from_str(&line).map_err(|e| SearchError::Schema {
                line: lineno + 1,
                message: e.to_string(),
            })?;
            cache.insert(entry);
        }
        Ok(cache)
    }

    pub fn save(&self, path: &Path) -> Result<(), SearchError> {
        let io_err = |e| SearchError::Io(path.display().to_string(), e);
        let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
        for entry in self.entries.read().unwrap().values() {
            let line = serde_json::to_string(entry).expect("cache entries serialize");
            writeln!(file, "{line}").map_err(io_err)?;
        }
        file.flush().map_err(io_err)
    }

    pub fn insert(&self, entry: CacheEntry) {
        let key = normalize_query(&entry.query);
        self.entries.write().unwrap().insert(key, entry);
    }

    pub fn record(&self, query: &str, answer: &str, source: &str, latency_ms: f64) {
        self.insert(CacheEntry {
            query: query.to_string(),
            answer: answer.to_string(),
            source: source.to_string(),
            latency_ms,
        });
    }

    pub fn lookup(&self, query: &str) -> Option<CacheEntry> {
        self.entries.read().unwrap().get(&normalize_query(query)).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Replay-only tool backed by a cache file.
#[derive(Debug)]
pub struct FixtureTool {
    cache: SearchFixtureCache,
    on_miss: MissPolicy,
}

impl FixtureTool {
    pub fn new(cache: SearchFixtureCache, on_miss: MissPolicy) -> Self {
        Self { cache, on_miss }
    }
}

impl ApiSearchTool for FixtureTool {
    fn search(&self, query: &str) -> Result<String, ToolError> {
        match (self.cache.lookup(query), self.on_miss) {
            (Some(hit), _) => Ok(hit.answer),
            (None, MissPolicy::Empty) => Ok(String::new()),
            (None, MissPolicy::Error) => Err(ToolError::CacheMiss(query.to_string())),
        }
    }

    fn name(&self) -> &str {
        "fixture"
    }
}

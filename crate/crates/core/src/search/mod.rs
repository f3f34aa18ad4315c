//! API search tools behind one `query -> answer` contract.

pub mod bm25;
pub mod cache;
pub mod online;
pub mod tokenize;
pub mod vocab;

use thiserror::Error;

pub use bm25::{load_doc_corpus, DocEntry, DocIndex, DocSearchTool, Hit};
pub use cache::{normalize_query, CacheEntry, FixtureTool, MissPolicy, SearchFixtureCache};
pub use online::{CacheMode, HttpTransport, OnlineAnswer, OnlineConfig, OnlineSearch, Transport, TransportError};
pub use tokenize::tokenize;
pub use vocab::{ApiVocabulary, LibraryPattern, VocabularyConfig};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("doc corpus is empty")]
    EmptyCorpus,
    #[error("duplicate api name in corpus: {0}")]
    DuplicateApi(String),
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("corrupt index: {0}")]
    CorruptIndex(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ToolError {
    #[error("tool call timed out after {0} ms")]
    Timeout(u64),
    #[error("no recorded answer for query {0:?}")]
    CacheMiss(String),
    #[error("tool returned an unusable answer {0:?}")]
    InvalidAnswer(String),
    #[error("tool failed: {0}")]
    Failed(String),
}

/// A search service suggesting a single API name for a query.
///
/// Implementations must tolerate concurrent calls. An empty answer means
/// nothing was found.
pub trait ApiSearchTool: Send + Sync {
    fn search(&self, query: &str) -> Result<String, ToolError>;

    fn name(&self) -> &str {
        "tool"
    }
}

impl<T: ApiSearchTool + ?Sized> ApiSearchTool for Box<T> {
    fn search(&self, query: &str) -> Result<String, ToolError> {
        (**self).search(query)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

//! BM25 retrieval over API documentation.
//!
//! Each entry is scored on its api name plus docstring. Term weights use
//! `idf = ln((N - df + 0.5) / (df + 0.5) + 1)`, which is never negative, and
//! the usual saturating term frequency
//! `tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl))`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tokenize::tokenize;
use super::{ApiSearchTool, SearchError, ToolError};
use crate::scalar::Scalar;

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

/// One documented API. On disk: `{"name", "signature", "text"}` per line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocEntry {
    #[serde(rename = "name")]
    pub api_name: String,
    #[serde(default)]
    pub signature: String,
    #[serde(rename = "text")]
    pub comment: String,
}

impl DocEntry {
    pub fn new(api_name: impl Into<String>, signature: impl Into<String>, comment: impl Into<String>) -> Self {
        Self {
            api_name: api_name.into(),
            signature: signature.into(),
            comment: comment.into(),
        }
    }

    /// Text the index scores against.
    pub fn scoring_text(&self) -> String {
        format!("{} {}", self.api_name, self.comment)
    }
}

pub fn load_doc_corpus(path: &Path) -> Result<Vec<DocEntry>, SearchError> {
    let file = std::fs::File::open(path).map_err(|e| SearchError::Io(path.display().to_string(), e))?;
    let mut entries = Vec::new();
    for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| SearchError::Io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: DocEntry = serde_json::from_str(&line).map_err(|e| SearchError::Schema {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        entries.push(entry);
    }
    Ok(entries)
}

/// Immutable inverted index with BM25 parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: Deserialize<'de>"))]
pub struct DocIndex<F> {
    entries: Vec<DocEntry>,
    postings: BTreeMap<String, Vec<(usize, u32)>>,
    doc_lengths: Vec<u32>,
    avg_doc_len: F,
    k1: F,
    b: F,
}

/// A ranked search result.
#[derive(Debug, Clone, PartialEq)]
pub struct Hit<'a, F> {
    pub entry_id: usize,
    pub entry: &'a DocEntry,
    pub score: F,
}

impl<F: Scalar> DocIndex<F> {
    pub fn build(corpus: Vec<DocEntry>, k1: F, b: F) -> Result<Self, SearchError> {
        if corpus.is_empty() {
            return Err(SearchError::EmptyCorpus);
        }
        if !(k1 > F::zero()) || !(b >= F::zero() && b <= F::one()) {
            return Err(SearchError::InvalidParameters(format!("k1={k1}, b={b}")));
        }
        let mut seen = HashSet::new();
        for entry in &corpus {
            if entry.api_name.is_empty() {
                return Err(SearchError::InvalidParameters("empty api name".into()));
            }
            if !seen.insert(entry.api_name.as_str()) {
                return Err(SearchError::DuplicateApi(entry.api_name.clone()));
            }
        }

        let mut postings: BTreeMap<String, Vec<(usize, u32)>> = BTreeMap::new();
        let mut doc_lengths = Vec::with_capacity(corpus.len());
        for (id, entry) in corpus.iter().enumerate() {
            let tokens = tokenize(&entry.scoring_text());
            doc_lengths.push(tokens.len() as u32);
            let mut counts: BTreeMap<String, u32> = BTreeMap::new();
            for token in tokens {
                *counts.entry(token).or_default() += 1;
            }
            for (term, tf) in counts {
                postings.entry(term).or_default().push((id, tf));
            }
        }
        let total: u64 = doc_lengths.iter().map(|&l| u64::from(l)).sum();
        let avg_doc_len = F::from_u64(total).unwrap() / F::from_usize_lossy(doc_lengths.len());

        Ok(Self {
            entries: corpus,
            postings,
            doc_lengths,
            avg_doc_len,
            k1,
            b,
        })
    }

    pub fn with_defaults(corpus: Vec<DocEntry>) -> Result<Self, SearchError> {
        Self::build(corpus, F::lit(DEFAULT_K1), F::lit(DEFAULT_B))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[DocEntry] {
        &self.entries
    }

    pub fn postings(&self, term: &str) -> &[(usize, u32)] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    pub fn doc_lengths(&self) -> &[u32] {
        &self.doc_lengths
    }

    pub fn avg_doc_len(&self) -> F {
        self.avg_doc_len
    }

    pub fn params(&self) -> (F, F) {
        (self.k1, self.b)
    }

    pub fn idf(&self, doc_freq: usize) -> F {
        let n = F::from_usize_lossy(self.entries.len());
        let df = F::from_usize_lossy(doc_freq);
        let half = F::lit(0.5);
        ((n - df + half) / (df + half) + F::one()).ln()
    }

    /// Ranked entries containing at least one query term. Repeated query
    /// terms count once. Ties go to the lower entry id.
    pub fn search(&self, query: &str, top_k: usize) -> Vec<Hit<'_, F>> {
        let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
        let mut scores: BTreeMap<usize, F> = BTreeMap::new();
        for term in &terms {
            let postings = self.postings(term);
            if postings.is_empty() {
                continue;
            }
            let idf = self.idf(postings.len());
            for &(id, tf) in postings {
                let tf = F::from_u32(tf).unwrap();
                let dl = F::from_u32(self.doc_lengths[id]).unwrap();
                let norm = self.k1 * (F::one() - self.b + self.b * dl / self.avg_doc_len);
                let weight = idf * tf * (self.k1 + F::one()) / (tf + norm);
                let slot = scores.entry(id).or_insert_with(F::zero);
                *slot = *slot + weight;
            }
        }
        let mut hits: Vec<Hit<'_, F>> = scores
            .into_iter()
            .map(|(entry_id, score)| Hit {
                entry_id,
                entry: &self.entries[entry_id],
                score,
            })
            .collect();
        hits.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.entry_id.cmp(&b.entry_id))
        });
        hits.truncate(top_k);
        hits
    }

    /// Rebuilds from the stored entries and checks the stored postings.
    pub fn verify(&self) -> Result<(), SearchError> {
        let rebuilt = Self::build(self.entries.clone(), self.k1, self.b)?;
        if rebuilt.postings != self.postings
            || rebuilt.doc_lengths != self.doc_lengths
            || rebuilt.avg_doc_len != self.avg_doc_len
        {
            return Err(SearchError::CorruptIndex("postings do not match entries".into()));
        }
        Ok(())
    }
}

impl<F: Scalar + Serialize + for<'de> Deserialize<'de>> DocIndex<F> {
    pub fn save(&self, path: &Path) -> Result<(), SearchError> {
        let json = serde_json::to_string(self).map_err(|e| SearchError::CorruptIndex(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| SearchError::Io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self, SearchError> {
        let text = std::fs::read_to_string(path).map_err(|e| SearchError::Io(path.display().to_string(), e))?;
        let index: Self = serde_json::from_str(&text).map_err(|e| SearchError::CorruptIndex(e.to_string()))?;
        index.verify()?;
        Ok(index)
    }
}

/// Documentation search tool: answers with the rank-1 api name.
#[derive(Debug, Clone)]
pub struct DocSearchTool<F> {
    index: DocIndex<F>,
}

impl<F: Scalar> DocSearchTool<F> {
    pub fn new(index: DocIndex<F>) -> Self {
        Self { index }
    }

    pub fn index(&self) -> &DocIndex<F> {
        &self.index
    }
}

impl<F: Scalar> ApiSearchTool for DocSearchTool<F> {
    fn search(&self, query: &str) -> Result<String, ToolError> {
        Ok(self
            .index
            .search(query, 1)
            .first()
            .map(|hit| hit.entry.api_name.clone())
            .unwrap_or_default())
    }

    fn name(&self) -> &str {
        "doc"
    }
}

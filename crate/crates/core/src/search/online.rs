//! Site-restricted web search with regex API extraction.
//!
//! For each configured site the client runs a `site:` query against the
//! DuckDuckGo HTML endpoint, fetches the top result pages, strips markup and
//! counts vocabulary mentions. A mention on the result at rank `r` (0-based)
//! weighs `results_per_site - r`. The highest total wins; equal totals go to
//! the lexicographically smaller name. Everything sits behind the cache: in
//! replay mode no request is ever made.

use std::collections::BTreeMap;
use std::sync::{Arc, LazyLock};
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::cache::{MissPolicy, SearchFixtureCache};
use super::vocab::ApiVocabulary;
use super::{ApiSearchTool, ToolError};

pub const DEFAULT_ENGINE_URL: &str = "https://html.duckduckgo.com/html/";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("network error: {0}")]
    Network(String),
    #[error("http status {0}")]
    Status(u16),
}

/// Blocking GET used by the online client. Swappable for tests.
pub trait Transport: Send + Sync {
    fn get(&self, url: &str, timeout: Duration) -> Result<String, TransportError>;
}

impl<T: Transport + ?Sized> Transport for Arc<T> {
    fn get(&self, url: &str, timeout: Duration) -> Result<String, TransportError> {
        (**self).get(url, timeout)
    }
}

#[derive(Debug, Clone)]
pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new() -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .user_agent("Mozilla/5.0 (X11; Linux x86_64) toolcoder/0.1")
            .build()
            .map_err(|e| TransportError::Network(e.to_string()))?;
        Ok(Self { client })
    }
}

impl Transport for HttpTransport {
    fn get(&self, url: &str, timeout: Duration) -> Result<String, TransportError> {
        let resp = self.client.get(url).timeout(timeout).send().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Network(e.to_string())
            }
        })?;
        if !resp.status().is_success() {
            return Err(TransportError::Status(resp.status().as_u16()));
        }
        resp.text().map_err(|e| TransportError::Network(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheMode {
    /// Answer from the cache only.
    #[default]
    Replay,
    /// Cache first, then the network; fresh answers are recorded.
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OnlineConfig {
    pub sites: Vec<String>,
    pub engine_url: String,
    pub results_per_site: usize,
    pub timeout_ms: u64,
    pub mode: CacheMode,
    pub on_miss: MissPolicy,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        Self {
            sites: vec![
                "datagy.io".into(),
                "numpy.org/doc".into(),
                "pandas.pydata.org/docs".into(),
                "pytorch.org/data".into(),
            ],
            engine_url: DEFAULT_ENGINE_URL.into(),
            results_per_site: 3,
            timeout_ms: 600,
            mode: CacheMode::Replay,
            on_miss: MissPolicy::Empty,
        }
    }
}

/// Outcome of one online lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineAnswer {
    pub answer: String,
    pub source: String,
    pub scores: BTreeMap<String, u64>,
    pub diagnostics: Vec<String>,
    pub from_cache: bool,
}

impl OnlineAnswer {
    fn empty(diagnostic: impl Into<String>) -> Self {
        Self {
            answer: String::new(),
            source: String::new(),
            scores: BTreeMap::new(),
            diagnostics: vec![diagnostic.into()],
            from_cache: false,
        }
    }
}

pub struct OnlineSearch<T> {
    config: OnlineConfig,
    vocab: ApiVocabulary,
    transport: T,
    cache: Arc<SearchFixtureCache>,
}

impl<T: Transport> OnlineSearch<T> {
    pub fn new(config: OnlineConfig, vocab: ApiVocabulary, transport: T, cache: Arc<SearchFixtureCache>) -> Self {
        Self {
            config,
            vocab,
            transport,
            cache,
        }
    }

    pub fn cache(&self) -> &Arc<SearchFixtureCache> {
        &self.cache
    }

    pub fn search_url(&self, site: &str, query: &str) -> String {
        let mut url = url::Url::parse(&self.config.engine_url).expect("engine url is valid");
        url.query_pairs_mut().append_pair("q", &format!("site:{site} {query}"));
        url.to_string()
    }

    pub fn lookup(&self, query: &str) -> Result<OnlineAnswer, ToolError> {
        if let Some(hit) = self.cache.lookup(query) {
            return Ok(OnlineAnswer {
                answer: hit.answer,
                source: hit.source,
                scores: BTreeMap::new(),
                diagnostics: Vec::new(),
                from_cache: true,
            });
        }
        match self.config.mode {
            CacheMode::Replay => match self.config.on_miss {
                MissPolicy::Empty => Ok(OnlineAnswer::empty(format!("cache miss: {query}"))),
                MissPolicy::Error => Err(ToolError::CacheMiss(query.to_string())),
            },
            CacheMode::Live => Ok(self.fetch_and_record(query)),
        }
    }

    fn fetch_and_record(&self, query: &str) -> OnlineAnswer {
        if self.config.sites.is_empty() {
            return OnlineAnswer::empty("no sites configured");
        }
        let started = Instant::now();
        let deadline = started + Duration::from_millis(self.config.timeout_ms);
        let remaining = || deadline.checked_duration_since(Instant::now()).filter(|d| !d.is_zero());

        let weight_base = self.config.results_per_site as u64;
        let mut scores: BTreeMap<String, u64> = BTreeMap::new();
        let mut first_source: BTreeMap<String, String> = BTreeMap::new();
        let mut diagnostics = Vec::new();
        let mut failed_requests = 0usize;

        for site in &self.config.sites {
            let Some(budget) = remaining() else {
                return OnlineAnswer::empty(format!("search timed out after {} ms", self.config.timeout_ms));
            };
            let results = match self.transport.get(&self.search_url(site, query), budget) {
                Ok(html) => parse_result_links(&html),
                Err(TransportError::Timeout) => {
                    return OnlineAnswer::empty(format!("search timed out after {} ms", self.config.timeout_ms))
                }
                Err(e) => {
                    diagnostics.push(format!("{site}: {e}"));
                    failed_requests += 1;
                    continue;
                }
            };
            let on_site = results.into_iter().filter(|u| url_on_site(u, site));
            for (rank, page_url) in on_site.take(self.config.results_per_site).enumerate() {
                let Some(budget) = remaining() else {
                    return OnlineAnswer::empty(format!("search timed out after {} ms", self.config.timeout_ms));
                };
                let page = match self.transport.get(&page_url, budget) {
                    Ok(page) => page,
                    Err(TransportError::Timeout) => {
                        return OnlineAnswer::empty(format!("search timed out after {} ms", self.config.timeout_ms))
                    }
                    Err(e) => {
                        diagnostics.push(format!("{page_url}: {e}"));
                        failed_requests += 1;
                        continue;
                    }
                };
                let weight = weight_base - rank as u64;
                for api in self.vocab.extract(&strip_tags(&page)) {
                    first_source.entry(api.clone()).or_insert_with(|| page_url.clone());
                    *scores.entry(api).or_default() += weight;
                }
            }
        }

        let latency_ms = started.elapsed().as_secs_f64() * 1e3;
        let (answer, source) = match best_candidate(&scores) {
            Some(api) => (api.to_string(), first_source[api].clone()),
            None => {
                diagnostics.push("no vocabulary API found in result pages".into());
                (String::new(), String::new())
            }
        };
        // Partial answers after network errors are not worth replaying.
        if failed_requests == 0 {
            self.cache.record(query, &answer, &source, latency_ms);
        }
        OnlineAnswer {
            answer,
            source,
            scores,
            diagnostics,
            from_cache: false,
        }
    }
}

impl<T: Transport> ApiSearchTool for OnlineSearch<T> {
    fn search(&self, query: &str) -> Result<String, ToolError> {
        let answer = self.lookup(query)?;
        for diagnostic in &answer.diagnostics {
            log::warn!("online search {query:?}: {diagnostic}");
        }
        Ok(answer.answer)
    }

    fn name(&self) -> &str {
        "online"
    }
}

/// Highest score; equal scores resolve to the smaller name.
pub fn best_candidate(scores: &BTreeMap<String, u64>) -> Option<&str> {
    // BTreeMap iterates names ascending, so keeping the first maximum is the
    // lexicographic tie-break.
    let mut best: Option<(&str, u64)> = None;
    for (name, &score) in scores {
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((name, score));
        }
    }
    best.map(|(name, _)| name)
}

fn url_on_site(page_url: &str, site: &str) -> bool {
    let bare = page_url
        .trim_start_matches("https://")
        .trim_start_matches("http://")
        .trim_start_matches("www.");
    let site = site.trim_start_matches("www.");
    bare.starts_with(site) || bare.split_once('/').is_some_and(|(host, _)| host.ends_with(&format!(".{site}")))
}

static ANCHOR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?is)<a\s[^>]*>").unwrap());
static HREF: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#"(?i)href\s*=\s*"([^"]*)""#).unwrap());
static SCRIPT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?is)<(script|style)\b[^>]*>.*?</(script|style)\s*>").unwrap());
static TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)<[^>]*>").unwrap());

/// Result URLs from a DuckDuckGo HTML results page, in rank order.
pub fn parse_result_links(html: &str) -> Vec<String> {
    let mut links = Vec::new();
    for tag in ANCHOR.find_iter(html) {
        let tag = tag.as_str();
        if !tag.contains("result__a") {
            continue;
        }
        let Some(href) = HREF.captures(tag).map(|c| decode_entities(&c[1])) else {
            continue;
        };
        let absolute = if href.starts_with("//") {
            format!("https:{href}")
        } else {
            href
        };
        let target = url::Url::parse(&absolute)
            .ok()
            .and_then(|u| {
                if u.path().starts_with("/l/") {
                    u.query_pairs().find(|(k, _)| k == "uddg").map(|(_, v)| v.into_owned())
                } else {
                    Some(u.to_string())
                }
            })
            .unwrap_or(absolute);
        if !links.contains(&target) {
            links.push(target);
        }
    }
    links
}

/// Drops scripts, styles and tags; decodes the common entities.
pub fn strip_tags(html: &str) -> String {
    let without_scripts = SCRIPT.replace_all(html, " ");
    let text = TAG.replace_all(&without_scripts, " ");
    decode_entities(&text)
}

fn decode_entities(text: &str) -> String {
    text.replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&#39;", "'")
        .replace("&#x27;", "'")
        .replace("&nbsp;", " ")
        .replace("&amp;", "&")
}

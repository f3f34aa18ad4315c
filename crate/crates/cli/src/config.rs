use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use toolcoder_core::annotate::DEFAULT_PUBLIC_PREFIXES;
use toolcoder_core::decode::{DecodeConfig, SamplingParams};
use toolcoder_core::eval::EvalConfig;
use toolcoder_core::search::{ApiVocabulary, CacheMode, OnlineConfig, VocabularyConfig};

use crate::UsageError;

pub const CONFIG_ENV: &str = "TOOLCODER_CONFIG";

/// Everything a run needs besides its inputs. Every section is optional in
/// the TOML file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlobalConfig {
    pub decode: DecodeConfig,
    pub sampling: SamplingParams,
    pub generator: GeneratorSection,
    pub search: SearchSection,
    pub annotate: AnnotateSection,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSection {
    /// Characters requested per `/v1/step` call.
    pub max_new: usize,
    pub timeout_s: f64,
}

impl Default for GeneratorSection {
    fn default() -> Self {
        Self {
            max_new: 16,
            timeout_s: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    /// Saved documentation index, or a `.jsonl` corpus indexed on load.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub index: Option<PathBuf>,
    /// Query/answer cache used by the online and fixture tools.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache: Option<PathBuf>,
    pub top_k: usize,
    pub online: OnlineConfig,
    pub vocabulary: VocabularyConfig,
}

impl Default for SearchSection {
    fn default() -> Self {
        Self {
            index: None,
            cache: None,
            top_k: 5,
            online: OnlineConfig::default(),
            vocabulary: VocabularyConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotateSection {
    pub public_prefixes: Vec<String>,
    pub min_len: usize,
    pub max_len: usize,
    pub sample_n: usize,
    pub seed: u64,
    pub timeout_s: f64,
    /// Environment variable holding the annotator API key.
    pub api_key_env: String,
}

impl Default for AnnotateSection {
    fn default() -> Self {
        Self {
            public_prefixes: DEFAULT_PUBLIC_PREFIXES.iter().map(|s| s.to_string()).collect(),
            min_len: 50,
            max_len: 400,
            sample_n: 60_000,
            seed: 0,
            timeout_s: 60.0,
            api_key_env: "TOOLCODER_ANNOTATOR_KEY".into(),
        }
    }
}

impl GlobalConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| UsageError(format!("invalid config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads `path`; relative paths inside are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text).with_context(|| format!("in {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for slot in [&mut config.search.index, &mut config.search.cache] {
            if let Some(p) = slot.as_mut() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        config.check_paths()?;
        Ok(config)
    }

    /// Referenced files must exist, except a cache that live search will create.
    pub fn check_paths(&self) -> Result<()> {
        let live = self.search.online.mode == CacheMode::Live;
        let required = [
            self.search.index.as_ref(),
            self.search.cache.as_ref().filter(|_| !live),
        ];
        for path in required.into_iter().flatten() {
            if !path.is_file() {
                return Err(UsageError(format!("invalid config: {} does not exist", path.display())).into());
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| -> Result<()> { Err(UsageError(format!("invalid config: {m}")).into()) };
        if let Err(e) = self.decode.markers.validate() {
            return bad(e.to_string());
        }
        if let Err(e) = self.sampling.validate() {
            return bad(e.to_string());
        }
        if let Err(e) = self.eval.validate() {
            return bad(e.to_string());
        }
        if self.generator.max_new == 0 || !(self.generator.timeout_s > 0.0) {
            return bad("generator.max_new and generator.timeout_s must be positive".into());
        }
        let online = &self.search.online;
        if online.sites.is_empty() || online.results_per_site == 0 || online.timeout_ms == 0 {
            return bad("search.online needs sites, results_per_site > 0 and timeout_ms > 0".into());
        }
        if !(online.engine_url.starts_with("http://") || online.engine_url.starts_with("https://")) {
            return bad(format!("search.online.engine_url {:?} is not a URL", online.engine_url));
        }
        if let Err(e) = ApiVocabulary::compile(&self.search.vocabulary) {
            return bad(e.to_string());
        }
        if self.search.top_k == 0 {
            return bad("search.top_k must be positive".into());
        }
        let a = &self.annotate;
        if a.min_len >= a.max_len || a.sample_n == 0 || !(a.timeout_s > 0.0) {
            return bad("annotate needs min_len < max_len, sample_n > 0 and timeout_s > 0".into());
        }
        Ok(())
    }
}

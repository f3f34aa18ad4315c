//! Regex vocabulary for pulling API names out of free text.

use std::collections::BTreeMap;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::SearchError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LibraryPattern {
    pub library: String,
    pub pattern: String,
}

/// Serializable form of [`ApiVocabulary`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct VocabularyConfig {
    pub libraries: Vec<LibraryPattern>,
    /// Prefix rewrites applied to every match, e.g. `numpy.` to `np.`.
    pub aliases: BTreeMap<String, String>,
    /// Exact API names matched as whole words (typically a doc corpus).
    pub allowlist: Vec<String>,
}

impl Default for VocabularyConfig {
    fn default() -> Self {
        let ident = r"[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)*";
        let lib = |library: &str, prefixes: &str| LibraryPattern {
            library: library.to_string(),
            pattern: format!(r"\b(?:{prefixes})\.{ident}"),
        };
        Self {
            libraries: vec![
                lib("numpy", "np|numpy"),
                lib("pandas", "pd|pandas"),
                lib("torchdata", "torchdata"),
            ],
            aliases: BTreeMap::from([
                ("numpy.".to_string(), "np.".to_string()),
                ("pandas.".to_string(), "pd.".to_string()),
            ]),
            allowlist: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ApiVocabulary {
    patterns: Vec<(String, Regex)>,
    aliases: Vec<(String, String)>,
    allowlist: Option<Regex>,
}

impl ApiVocabulary {
    pub fn compile(config: &VocabularyConfig) -> Result<Self, SearchError> {
        let patterns = config
            .libraries
            .iter()
            .map(|lib| {
                Regex::new(&lib.pattern)
                    .map(|re| (lib.library.clone(), re))
                    .map_err(|e| SearchError::InvalidParameters(format!("pattern for {}: {e}", lib.library)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        // Longest alias first so `numpy.linalg.` could beat `numpy.`.
        let mut aliases: Vec<(String, String)> = config.aliases.clone().into_iter().collect();
        aliases.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        let allowlist = if config.allowlist.is_empty() {
            None
        } else {
            let mut names = config.allowlist.clone();
            names.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
            names.dedup();
            let alternation = names.iter().map(|n| regex::escape(n)).collect::<Vec<_>>().join("|");
            let re = Regex::new(&format!(r"(?:^|[^\w.])({alternation})(?:$|[^\w])"))
                .map_err(|e| SearchError::InvalidParameters(format!("allowlist: {e}")))?;
            Some(re)
        };
        Ok(Self {
            patterns,
            aliases,
            allowlist,
        })
    }

    pub fn canonicalize(&self, name: &str) -> String {
        for (from, to) in &self.aliases {
            if let Some(rest) = name.strip_prefix(from.as_str()) {
                return format!("{to}{rest}");
            }
        }
        name.to_string()
    }

    /// All API mentions in `text`, in order of appearance, canonicalized.
    pub fn extract(&self, text: &str) -> Vec<String> {
        let mut found: Vec<(usize, usize, String)> = Vec::new();
        for (_, re) in &self.patterns {
            for m in re.find_iter(text) {
                found.push((m.start(), m.end(), self.canonicalize(m.as_str())));
            }
        }
        if let Some(re) = &self.allowlist {
            let mut at = 0;
            while let Some(caps) = re.captures_at(text, at) {
                let m = caps.get(1).expect("group 1 always participates");
                let overlaps = found.iter().any(|(s, e, _)| m.start() < *e && *s < m.end());
                if !overlaps {
                    found.push((m.start(), m.end(), self.canonicalize(m.as_str())));
                }
                at = m.end();
            }
        }
        found.sort_by_key(|(start, end, _)| (*start, *end));
        // Two library patterns could match the same span.
        found.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
        found.into_iter().map(|(_, _, name)| name).collect()
    }

    /// Library owning `api`, judged by which pattern matches it fully.
    pub fn library_of(&self, api: &str) -> Option<&str> {
        self.patterns
            .iter()
            .find(|(_, re)| re.find(api).is_some_and(|m| m.start() == 0 && m.end() == api.len()))
            .map(|(lib, _)| lib.as_str())
    }
}

impl Default for ApiVocabulary {
    fn default() -> Self {
        Self::compile(&VocabularyConfig::default()).expect("default vocabulary compiles")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extracts_and_canonicalizes() {
        let vocab = ApiVocabulary::default();
        let text = "Use numpy.squeeze() or np.squeeze(a). Then pd.DataFrame.sum and np.";
        assert_eq!(vocab.extract(text), ["np.squeeze", "np.squeeze", "pd.DataFrame.sum"]);
    }

    #[test]
    fn allowlist_adds_private_names() {
        let config = VocabularyConfig {
            allowlist: vec!["monkey.squeeze".into(), "np.sum".into()],
            ..VocabularyConfig::default()
        };
        let vocab = ApiVocabulary::compile(&config).unwrap();
        assert_eq!(vocab.extract("call monkey.squeeze, np.sum(x) and xmonkey.squeeze"), ["monkey.squeeze", "np.sum"]);
    }

    #[test]
    fn nothing_to_extract() {
        assert!(ApiVocabulary::default().extract("plain prose about arrays").is_empty());
    }

    #[test]
    fn library_lookup() {
        let vocab = ApiVocabulary::default();
        assert_eq!(vocab.library_of("np.sum"), Some("numpy"));
        assert_eq!(vocab.library_of("pd.concat"), Some("pandas"));
        assert_eq!(vocab.library_of("internal.helper"), None);
    }

    #[test]
    fn bad_pattern_is_an_error() {
        let config = VocabularyConfig {
            libraries: vec![LibraryPattern {
                library: "x".into(),
                pattern: "(".into(),
            }],
            ..VocabularyConfig::default()
        };
        assert!(ApiVocabulary::compile(&config).is_err());
    }
}

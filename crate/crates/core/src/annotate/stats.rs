//! Dataset statistics over accepted samples.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::filter::{AnnotatedSample, RejectRule, Verdict};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub size: usize,
    pub avg_calls_per_sample: f64,
    /// Distinct answered APIs per sample, reported next to the call average.
    pub avg_distinct_apis_per_sample: f64,
    pub avg_len_words_before: f64,
    pub avg_len_words_after: f64,
    pub library_proportions: BTreeMap<String, f64>,
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

pub fn default_library_prefixes() -> BTreeMap<String, Vec<String>> {
    BTreeMap::from([
        ("numpy".to_string(), vec!["np.".to_string(), "numpy.".to_string()]),
        ("pandas".to_string(), vec!["pd.".to_string(), "pandas.".to_string()]),
        ("torchdata".to_string(), vec!["torchdata.".to_string()]),
    ])
}

/// Statistics plus a diagnostic when nothing was accepted.
pub fn compute_stats(
    samples: &[AnnotatedSample],
    library_prefixes: &BTreeMap<String, Vec<String>>,
) -> (DatasetStats, Option<String>) {
    let accepted: Vec<&AnnotatedSample> = samples.iter().filter(|s| s.verdict.is_accepted()).collect();
    let n = accepted.len();
    let mean = |total: usize| if n == 0 { 0.0 } else { total as f64 / n as f64 };

    let calls: usize = accepted.iter().map(|s| s.calls.len()).sum();
    let distinct: usize = accepted
        .iter()
        .map(|s| s.calls.iter().map(|c| c.answer.as_str()).collect::<BTreeSet<_>>().len())
        .sum();
    let before: usize = accepted.iter().map(|s| word_count(&s.original_code)).sum();
    let after: usize = accepted.iter().map(|s| word_count(&s.annotated_code)).sum();
    let library_proportions = library_prefixes
        .iter()
        .map(|(library, prefixes)| {
            let hits = accepted
                .iter()
                .filter(|s| {
                    s.calls
                        .iter()
                        .any(|c| prefixes.iter().any(|p| c.answer.starts_with(p.as_str())))
                })
                .count();
            (library.clone(), mean(hits))
        })
        .collect();

    let stats = DatasetStats {
        size: n,
        avg_calls_per_sample: mean(calls),
        avg_distinct_apis_per_sample: mean(distinct),
        avg_len_words_before: mean(before),
        avg_len_words_after: mean(after),
        library_proportions,
    };
    let diagnostic = (n == 0).then(|| "no accepted samples; statistics are all zero".to_string());
    (stats, diagnostic)
}

/// Accepted count and rejections per rule.
pub fn verdict_counts(samples: &[AnnotatedSample]) -> (usize, BTreeMap<RejectRule, usize>) {
    let mut accepted = 0;
    let mut rejected = BTreeMap::new();
    for sample in samples {
        match sample.verdict {
            Verdict::Accepted => accepted += 1,
            Verdict::Rejected(rule) => *rejected.entry(rule).or_insert(0) += 1,
        }
    }
    (accepted, rejected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::ToolCall;

    fn sample(answers: &[&str], verdict: Verdict) -> AnnotatedSample {
        AnnotatedSample {
            id: String::new(),
            original_code: "a b".into(),
            annotated_code: "a x b".into(),
            calls: answers.iter().map(|a| ToolCall::new("q", *a)).collect(),
            verdict,
        }
    }

    #[test]
    fn averages_over_accepted_only() {
        let samples = [
            sample(&["np.a", "np.b", "np.c"], Verdict::Accepted),
            sample(&["np.a", "np.a", "pd.b", "pd.c"], Verdict::Accepted),
            sample(&["np.a"; 6], Verdict::Rejected(RejectRule::TooManyCalls)),
        ];
        let (stats, diag) = compute_stats(&samples, &default_library_prefixes());
        assert!(diag.is_none());
        assert_eq!(stats.size, 2);
        assert_eq!(stats.avg_calls_per_sample, 3.5);
        assert_eq!(stats.avg_distinct_apis_per_sample, 3.0);
        assert_eq!(stats.avg_len_words_before, 2.0);
        assert_eq!(stats.avg_len_words_after, 3.0);
        assert_eq!(stats.library_proportions["numpy"], 1.0);
        assert_eq!(stats.library_proportions["pandas"], 0.5);
        assert_eq!(stats.library_proportions["torchdata"], 0.0);
    }

    #[test]
    fn empty_accepted_set() {
        let (stats, diag) = compute_stats(&[], &default_library_prefixes());
        assert_eq!(stats.size, 0);
        assert_eq!(stats.avg_calls_per_sample, 0.0);
        assert!(diag.is_some());
    }

    #[test]
    fn counts_per_rule() {
        let samples = [
            sample(&[], Verdict::Accepted),
            sample(&[], Verdict::Rejected(RejectRule::Nested)),
            sample(&[], Verdict::Rejected(RejectRule::Nested)),
        ];
        let (accepted, rejected) = verdict_counts(&samples);
        assert_eq!(accepted, 1);
        assert_eq!(rejected[&RejectRule::Nested], 2);
    }
}

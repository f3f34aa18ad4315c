//! Filter-and-clean rules for annotator output.
//!
//! Rules run in order and the first failure decides the verdict:
//!
//! | rule | rejects when |
//! |------|--------------|
//! | R1 | any call is nested inside another |
//! | R2 | the sample has 5 or more calls |
//! | R3 | no call answers with a public-library API |
//! | R4 | stripping the calls does not give back the original code |
//! | R5 | some call's answer is absent from the code right after it |

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::grammar::{parse_tool_calls, strip_tool_calls, ToolCall, ToolCallMarkers};

/// R2 keeps samples with strictly fewer calls than this.
pub const MAX_CALLS_EXCLUSIVE: usize = 5;
/// R5 looks for the answer within this many characters after the call.
pub const FOLLOW_WINDOW_CHARS: usize = 200;

pub const DEFAULT_PUBLIC_PREFIXES: [&str; 6] = ["np.", "numpy.", "pd.", "pandas.", "plt.", "matplotlib."];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RejectRule {
    #[serde(rename = "R1")]
    Nested,
    #[serde(rename = "R2")]
    TooManyCalls,
    #[serde(rename = "R3")]
    NoPublicApi,
    #[serde(rename = "R4")]
    NotFaithful,
    #[serde(rename = "R5")]
    AnswerNotUsed,
    #[serde(rename = "annotator_error")]
    AnnotatorError,
}

impl RejectRule {
    pub fn id(self) -> &'static str {
        match self {
            Self::Nested => "R1",
            Self::TooManyCalls => "R2",
            Self::NoPublicApi => "R3",
            Self::NotFaithful => "R4",
            Self::AnswerNotUsed => "R5",
            Self::AnnotatorError => "annotator_error",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        [
            Self::Nested,
            Self::TooManyCalls,
            Self::NoPublicApi,
            Self::NotFaithful,
            Self::AnswerNotUsed,
            Self::AnnotatorError,
        ]
        .into_iter()
        .find(|r| r.id() == id)
    }
}

impl fmt::Display for RejectRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accepted,
    Rejected(RejectRule),
}

impl Verdict {
    pub fn is_accepted(self) -> bool {
        self == Verdict::Accepted
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedSample {
    pub id: String,
    pub original_code: String,
    pub annotated_code: String,
    pub calls: Vec<ToolCall>,
    pub verdict: Verdict,
}

/// Line of the output dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub original_code: String,
    pub annotated_code: String,
    pub verdict: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_id: Option<String>,
}

impl AnnotatedSample {
    pub fn to_record(&self) -> SampleRecord {
        let (verdict, rule_id) = match self.verdict {
            Verdict::Accepted => ("accepted", None),
            Verdict::Rejected(rule) => ("rejected", Some(rule.id().to_string())),
        };
        SampleRecord {
            id: self.id.clone(),
            original_code: self.original_code.clone(),
            annotated_code: self.annotated_code.clone(),
            verdict: verdict.to_string(),
            rule_id,
        }
    }

    /// Rebuilds a sample from a record, re-parsing its calls.
    pub fn from_record(record: SampleRecord, markers: &ToolCallMarkers) -> Result<Self, String> {
        let verdict = match (record.verdict.as_str(), record.rule_id.as_deref()) {
            ("accepted", _) => Verdict::Accepted,
            ("rejected", Some(id)) => {
                Verdict::Rejected(RejectRule::from_id(id).ok_or_else(|| format!("unknown rule id {id:?}"))?)
            }
            (other, _) => return Err(format!("unknown verdict {other:?}")),
        };
        let calls = parse_tool_calls(&record.annotated_code, markers).calls;
        Ok(Self {
            id: record.id,
            original_code: record.original_code,
            annotated_code: record.annotated_code,
            calls,
            verdict,
        })
    }
}

pub fn is_public_api(answer: &str, public_prefixes: &[String]) -> bool {
    public_prefixes.iter().any(|p| answer.starts_with(p.as_str()))
}

/// R5 for one call: the answer occurs in the first
/// [`FOLLOW_WINDOW_CHARS`] characters of code after the call, with any later
/// markup stripped.
pub fn answer_follows(annotated: &str, call: &ToolCall, markers: &ToolCallMarkers) -> bool {
    if call.answer.is_empty() {
        return false;
    }
    let following = strip_tool_calls(&annotated[call.span.end..], markers);
    let window: String = following.chars().take(FOLLOW_WINDOW_CHARS).collect();
    window.contains(&call.answer)
}

pub fn filter_and_clean(
    original: &str,
    annotated: &str,
    public_prefixes: &[String],
    markers: &ToolCallMarkers,
) -> AnnotatedSample {
    let parsed = parse_tool_calls(annotated, markers);
    let verdict = if parsed.has_nesting() {
        Verdict::Rejected(RejectRule::Nested)
    } else if parsed.calls.len() >= MAX_CALLS_EXCLUSIVE {
        Verdict::Rejected(RejectRule::TooManyCalls)
    } else if !parsed.calls.iter().any(|c| is_public_api(&c.answer, public_prefixes)) {
        Verdict::Rejected(RejectRule::NoPublicApi)
    } else if strip_tool_calls(annotated, markers) != original {
        Verdict::Rejected(RejectRule::NotFaithful)
    } else if !parsed.calls.iter().all(|c| answer_follows(annotated, c, markers)) {
        Verdict::Rejected(RejectRule::AnswerNotUsed)
    } else {
        Verdict::Accepted
    };
    AnnotatedSample {
        id: String::new(),
        original_code: original.to_string(),
        annotated_code: annotated.to_string(),
        calls: parsed.calls,
        verdict,
    }
}

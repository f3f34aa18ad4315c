//! Building tool-augmented training data: base-sample selection, annotator
//! prompting, rule-based filtering and dataset statistics.

pub mod annotator;
pub mod filter;
pub mod prompt;
pub mod select;
pub mod stats;

use rayon::prelude::*;
use thiserror::Error;

use crate::grammar::ToolCallMarkers;

pub use annotator::{AnnotatorClient, AnnotatorError, FixtureAnnotator, FixtureLine, HttpAnnotator, RecordingAnnotator};
pub use filter::{
    filter_and_clean, AnnotatedSample, RejectRule, SampleRecord, Verdict, DEFAULT_PUBLIC_PREFIXES,
    FOLLOW_WINDOW_CHARS, MAX_CALLS_EXCLUSIVE,
};
pub use prompt::{AnnotationPrompt, ChatMessage, ChatRequest, FewShotPair};
pub use select::{load_code_units, select_base_samples, CodeUnit, Selection};
pub use stats::{compute_stats, default_library_prefixes, verdict_counts, word_count, DatasetStats};

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid annotation prompt: {0}")]
    InvalidPrompt(String),
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}

/// The annotator's reply, verbatim.
pub fn annotate(
    unit: &CodeUnit,
    prompt: &AnnotationPrompt,
    annotator: &dyn AnnotatorClient,
) -> Result<String, AnnotatorError> {
    annotator.complete(&unit.id, &prompt.render(&unit.code))
}

/// Annotates and filters one unit; annotator failures become
/// `Rejected(annotator_error)`.
pub fn annotate_sample(
    unit: &CodeUnit,
    prompt: &AnnotationPrompt,
    annotator: &dyn AnnotatorClient,
    public_prefixes: &[String],
    markers: &ToolCallMarkers,
) -> AnnotatedSample {
    match annotate(unit, prompt, annotator) {
        Ok(text) => {
            let mut sample = filter_and_clean(&unit.code, &text, public_prefixes, markers);
            sample.id = unit.id.clone();
            sample
        }
        Err(e) => {
            log::warn!("annotating {}: {e}", unit.id);
            AnnotatedSample {
                id: unit.id.clone(),
                original_code: unit.code.clone(),
                annotated_code: String::new(),
                calls: Vec::new(),
                verdict: Verdict::Rejected(RejectRule::AnnotatorError),
            }
        }
    }
}

/// Annotates units in parallel; output order matches input order.
pub fn annotate_all(
    units: &[CodeUnit],
    prompt: &AnnotationPrompt,
    annotator: &dyn AnnotatorClient,
    public_prefixes: &[String],
    markers: &ToolCallMarkers,
) -> Vec<AnnotatedSample> {
    units
        .par_iter()
        .map(|unit| annotate_sample(unit, prompt, annotator, public_prefixes, markers))
        .collect()
}

use std::sync::LazyLock;
use std::time::Instant;

use regex::Regex;

use super::{
    DecodeConfig, DecodeError, DecodeOutcome, GenerationTrace, SamplingParams, SessionInfo, StopReason,
    TokenGenerator, ToolFailurePolicy, TraceEvent,
};
use crate::grammar::{check_query, find_arrow, strip_tool_calls, ToolCallMarkers, MAX_QUERY_BYTES};
use crate::search::{ApiSearchTool, ToolError};

/// Blanks tolerated between `)` and the arrow while capturing.
const ARROW_BLANK_SLACK: usize = 8;

static DEDENT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\n[ \t]*\n[^\s]").unwrap());

enum Flow {
    NeedMore,
    Stop(StopReason),
}

struct Session<'a> {
    markers: &'a ToolCallMarkers,
    params: &'a SamplingParams,
    out: String,
    trace: Vec<TraceEvent>,
    /// Start of text that belongs to no call.
    normal_from: usize,
    /// Where the next open-marker search starts.
    open_from: usize,
    /// Byte offset of the open marker currently being captured.
    capture: Option<usize>,
}

/// Drives a generator with tool interception.
pub struct Orchestrator<'t> {
    tool: Option<&'t dyn ApiSearchTool>,
    config: DecodeConfig,
}

impl<'t> Orchestrator<'t> {
    /// `tool: None` runs the no-tool ablation: calls are still intercepted
    /// but answered with nothing and no tool is invoked.
    pub fn new(tool: Option<&'t dyn ApiSearchTool>, config: DecodeConfig) -> Self {
        Self { tool, config }
    }

    pub fn config(&self) -> &DecodeConfig {
        &self.config
    }

    pub fn infer_with_tool(
        &self,
        generator: &mut dyn TokenGenerator,
        input_nl: &str,
        params: &SamplingParams,
    ) -> Result<DecodeOutcome, DecodeError> {
        let session = SessionInfo {
            prompt: input_nl,
            seed: params.seed,
            problem_id: None,
            candidate_index: 0,
        };
        self.run_session(generator, &session, params)
    }

    /// `n` sessions with seeds `params.seed .. params.seed + n`.
    pub fn generate_candidates(
        &self,
        generator: &mut dyn TokenGenerator,
        problem_prompt: &str,
        problem_id: Option<&str>,
        n: usize,
        params: &SamplingParams,
    ) -> Result<Vec<DecodeOutcome>, DecodeError> {
        if n == 0 {
            return Err(DecodeError::InvalidInput("candidate count must be at least 1".into()));
        }
        (0..n)
            .map(|index| {
                let seeded = params.with_seed(params.seed.wrapping_add(index as u64));
                let session = SessionInfo {
                    prompt: problem_prompt,
                    seed: seeded.seed,
                    problem_id,
                    candidate_index: index,
                };
                self.run_session(generator, &session, &seeded)
            })
            .collect()
    }

    pub fn run_session(
        &self,
        generator: &mut dyn TokenGenerator,
        info: &SessionInfo<'_>,
        params: &SamplingParams,
    ) -> Result<DecodeOutcome, DecodeError> {
        if info.prompt.is_empty() {
            return Err(DecodeError::InvalidInput("input prompt is empty".into()));
        }
        params.validate()?;
        self.config
            .markers
            .validate()
            .map_err(|e| DecodeError::InvalidInput(e.to_string()))?;

        let mut session = Session {
            markers: &self.config.markers,
            params,
            out: String::new(),
            trace: Vec::new(),
            normal_from: 0,
            open_from: 0,
            capture: None,
        };

        let reason = match generator.begin(info) {
            Err(e) => StopReason::GeneratorFailed { message: e.to_string() },
            Ok(()) => self.decode_loop(generator, info, &mut session),
        };
        session.trace.push(TraceEvent::Stopped { reason });

        let clean_code = clean_generated_code(&session.out, &self.config.markers);
        Ok(DecodeOutcome {
            raw_text: session.out,
            clean_code,
            trace: GenerationTrace { events: session.trace },
        })
    }

    fn decode_loop(
        &self,
        generator: &mut dyn TokenGenerator,
        info: &SessionInfo<'_>,
        session: &mut Session<'_>,
    ) -> StopReason {
        let mut generated_chars = 0usize;
        loop {
            if generated_chars >= session.params.max_len {
                return StopReason::MaxLen;
            }
            let context = format!("{}{}", info.prompt, session.out);
            let increment = match generator.step(&context, session.params) {
                Ok(inc) => inc,
                Err(e) => return StopReason::GeneratorFailed { message: e.to_string() },
            };
            if increment.text.is_empty() && !increment.done {
                return StopReason::GeneratorFailed {
                    message: super::GeneratorError::EmptyIncrement.to_string(),
                };
            }
            if !increment.text.is_empty() {
                session.out.push_str(&increment.text);
                session.trace.push(TraceEvent::TextEmitted { chunk: increment.text });
            }
            if let Flow::Stop(reason) = self.advance(session) {
                return reason;
            }
            generated_chars = session.out.chars().count();
            if increment.done {
                return StopReason::GeneratorDone;
            }
        }
    }

    /// Runs the marker state machine over newly appended text.
    fn advance(&self, s: &mut Session<'_>) -> Flow {
        let markers = s.markers;
        loop {
            if let Some(start) = s.capture {
                let body_start = start + markers.open_marker.len();
                let body = &s.out[body_start..];
                let prefix = markers.call_prefix.as_str();
                if !body.starts_with(prefix) {
                    if prefix.starts_with(body) {
                        return Flow::NeedMore;
                    }
                    self.abort_capture(s, start);
                    continue;
                }
                let rest_start = body_start + prefix.len();
                let rest = &s.out[rest_start..];
                match find_arrow(rest, markers) {
                    Some((query_end, answer_start)) => {
                        let query = &rest[..query_end];
                        if check_query(query).is_err() || markers.contains_marker(query) {
                            self.abort_capture(s, start);
                            continue;
                        }
                        let query = query.to_string();
                        // Anything the model wrote past the arrow is replaced by the tool answer.
                        s.out.truncate(rest_start + answer_start);
                        let answer = match self.call_tool(&query, &mut s.trace) {
                            Ok(answer) => answer,
                            Err(reason) => return Flow::Stop(reason),
                        };
                        s.out.push_str(&answer);
                        s.out.push_str(&markers.close_marker);
                        s.capture = None;
                        s.normal_from = s.out.len();
                        s.open_from = s.out.len();
                    }
                    None => {
                        let overlong = rest.len() > MAX_QUERY_BYTES + 1 + ARROW_BLANK_SLACK + markers.max_arrow_len();
                        if overlong || rest.contains('\n') || markers.contains_marker(rest) {
                            self.abort_capture(s, start);
                            continue;
                        }
                        return Flow::NeedMore;
                    }
                }
            } else {
                let open_at = s.out[s.open_from..]
                    .find(&markers.open_marker)
                    .map(|p| p + s.open_from);
                let stop_at = find_stop(&s.out[s.normal_from..], s.params).map(|p| p + s.normal_from);
                match (open_at, stop_at) {
                    (_, Some(stop)) if open_at.is_none_or(|open| stop < open) => {
                        s.out.truncate(stop);
                        return Flow::Stop(StopReason::StopSequence);
                    }
                    (Some(open), _) => s.capture = Some(open),
                    _ => return Flow::NeedMore,
                }
            }
        }
    }

    /// Malformed capture: leave the region as literal text.
    fn abort_capture(&self, s: &mut Session<'_>, start: usize) {
        let first = s.markers.open_marker.chars().next().map_or(1, char::len_utf8);
        s.capture = None;
        s.open_from = start + first;
    }

    fn call_tool(&self, query: &str, trace: &mut Vec<TraceEvent>) -> Result<String, StopReason> {
        let Some(tool) = self.tool else {
            trace.push(TraceEvent::ToolDisabled { query: query.to_string() });
            return Ok(String::new());
        };
        let started = Instant::now();
        let result = tool.search(query);
        let elapsed = started.elapsed();
        let latency_ms = elapsed.as_secs_f64() * 1e3;
        let result = result
            .and_then(|answer| {
                let answer = answer.trim().to_string();
                if answer.chars().any(char::is_whitespace) || self.config.markers.contains_marker(&answer) {
                    Err(ToolError::InvalidAnswer(answer))
                } else {
                    Ok(answer)
                }
            })
            .and_then(|answer| {
                if elapsed.as_millis() > u128::from(self.config.tool_timeout_ms) {
                    Err(ToolError::Timeout(self.config.tool_timeout_ms))
                } else {
                    Ok(answer)
                }
            });
        match (result, self.config.on_tool_failure) {
            (Ok(answer), _) => {
                trace.push(TraceEvent::ToolInvoked {
                    query: query.to_string(),
                    answer: answer.clone(),
                    latency_ms,
                    error: None,
                });
                Ok(answer)
            }
            (Err(e), policy) => {
                log::warn!("search tool failed for {query:?}: {e}");
                trace.push(TraceEvent::ToolInvoked {
                    query: query.to_string(),
                    answer: String::new(),
                    latency_ms,
                    error: Some(e.to_string()),
                });
                match policy {
                    ToolFailurePolicy::InjectEmpty => Ok(String::new()),
                    ToolFailurePolicy::Abort => Err(StopReason::ToolFailed { message: e.to_string() }),
                }
            }
        }
    }
}

fn find_stop(text: &str, params: &SamplingParams) -> Option<usize> {
    let literal = params.stop_sequences.iter().filter_map(|s| text.find(s.as_str())).min();
    let dedent = params
        .stop_at_dedent
        .then(|| DEDENT.find(text).map(|m| m.start()))
        .flatten();
    match (literal, dedent) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}

/// Code with all tool-call markup removed.
///
/// Well-formed calls are stripped; an unfinished call at the very end (budget
/// ran out mid-capture) is cut off; any remaining stray marker strings are
/// deleted so the result never contains a marker.
pub fn clean_generated_code(raw: &str, markers: &ToolCallMarkers) -> String {
    let mut text = raw.to_string();
    loop {
        let mut next = strip_tool_calls(&text, markers);
        if let Some(pos) = next.rfind(&markers.open_marker) {
            let tail = &next[pos + markers.open_marker.len()..];
            let unfinished = !tail.contains('\n')
                && !tail.contains(&markers.close_marker)
                && (markers.call_prefix.starts_with(tail) || tail.starts_with(&markers.call_prefix));
            if unfinished {
                next.truncate(pos);
            }
        }
        let next = next.replace(&markers.open_marker, "").replace(&markers.close_marker, "");
        if next == text {
            return text;
        }
        text = next;
    }
}

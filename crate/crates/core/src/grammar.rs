//! Inline tool-call markup: `<API>APISearch(query)->answer</API>`.
//!
//! Markers are matched as literal strings in the text, so the same grammar
//! works for any tokenizer. Parsing is total: malformed regions come back as
//! [`Diagnostic`]s instead of errors.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Longest query (in bytes) accepted by the parser and the decoder.
pub const MAX_QUERY_BYTES: usize = 256;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GrammarError {
    #[error("invalid markers: {0}")]
    InvalidMarkers(String),
    #[error("tool call query is empty")]
    EmptyQuery,
    #[error("tool call query is unusable: {0}")]
    InvalidQuery(String),
}

/// Literal strings that delimit a tool call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToolCallMarkers {
    pub open_marker: String,
    pub close_marker: String,
    pub call_prefix: String,
    /// Arrow spellings accepted on input.
    pub arrows: Vec<String>,
    /// Arrow written by [`serialize_tool_call`] and the decoder.
    pub emit_arrow: String,
}

impl Default for ToolCallMarkers {
    fn default() -> Self {
        Self {
            open_marker: "<API>".into(),
            close_marker: "</API>".into(),
            call_prefix: "APISearch(".into(),
            arrows: vec!["->".into(), "→".into()],
            emit_arrow: "->".into(),
        }
    }
}

impl ToolCallMarkers {
    pub fn validate(&self) -> Result<(), GrammarError> {
        let bad = |msg: &str| Err(GrammarError::InvalidMarkers(msg.to_string()));
        if self.open_marker.is_empty() || self.close_marker.is_empty() {
            return bad("markers must be non-empty");
        }
        if self.open_marker == self.close_marker {
            return bad("open and close markers must differ");
        }
        if self.open_marker.contains(&self.close_marker)
            || self.close_marker.contains(&self.open_marker)
        {
            return bad("one marker is a substring of the other");
        }
        if self.call_prefix.is_empty() {
            return bad("call prefix must be non-empty");
        }
        if self.arrows.is_empty() {
            return bad("at least one arrow is required");
        }
        for arrow in &self.arrows {
            if arrow.is_empty() {
                return bad("arrows must be non-empty");
            }
            if arrow.contains(&self.open_marker) || arrow.contains(&self.close_marker) {
                return bad("arrow contains a marker");
            }
        }
        if !self.arrows.contains(&self.emit_arrow) {
            return bad("emit arrow must be one of the accepted arrows");
        }
        Ok(())
    }

    pub fn contains_marker(&self, text: &str) -> bool {
        text.contains(&self.open_marker) || text.contains(&self.close_marker)
    }

    pub(crate) fn max_arrow_len(&self) -> usize {
        self.arrows.iter().map(String::len).max().unwrap_or(0)
    }

    /// Earliest open or close marker at or after `from`.
    fn next_marker(&self, text: &str, from: usize) -> Option<(usize, MarkerKind)> {
        let hay = &text[from..];
        let open = hay.find(&self.open_marker).map(|p| (from + p, MarkerKind::Open));
        let close = hay.find(&self.close_marker).map(|p| (from + p, MarkerKind::Close));
        match (open, close) {
            (Some(o), Some(c)) => Some(if o.0 < c.0 { o } else { c }),
            (o, c) => o.or(c),
        }
    }

    fn marker_len(&self, kind: MarkerKind) -> usize {
        match kind {
            MarkerKind::Open => self.open_marker.len(),
            MarkerKind::Close => self.close_marker.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MarkerKind {
    Open,
    Close,
}

/// One `APISearch(query)->answer` occurrence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub query: String,
    pub answer: String,
    /// Byte range in the host text, open marker through close marker.
    pub span: Range<usize>,
}

impl ToolCall {
    /// A call not yet placed in any text (empty span).
    pub fn new(query: impl Into<String>, answer: impl Into<String>) -> Self {
        Self {
            query: query.into(),
            answer: answer.into(),
            span: 0..0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    Unclosed,
    StrayClose,
    Nested,
    MissingCallPrefix,
    MissingArrow,
    EmptyQuery,
    QueryTooLong,
    QueryHasNewline,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub span: Range<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParseOutput {
    pub calls: Vec<ToolCall>,
    pub diagnostics: Vec<Diagnostic>,
}

impl ParseOutput {
    pub fn has_nesting(&self) -> bool {
        self.diagnostics
            .iter()
            .any(|d| d.kind == DiagnosticKind::Nested)
    }
}

/// Locates `)` + optional blanks + arrow in the text following the call
/// prefix. Returns `(query_end, answer_start)`.
pub(crate) fn find_arrow(rest: &str, markers: &ToolCallMarkers) -> Option<(usize, usize)> {
    for (paren, _) in rest.match_indices(')') {
        let after = paren + 1;
        let tail = &rest[after..];
        let trimmed = tail.trim_start_matches([' ', '\t']);
        let arrow_at = after + (tail.len() - trimmed.len());
        if let Some(arrow) = markers.arrows.iter().find(|a| trimmed.starts_with(a.as_str())) {
            return Some((paren, arrow_at + arrow.len()));
        }
    }
    None
}

pub(crate) fn check_query(query: &str) -> Result<(), DiagnosticKind> {
    if query.is_empty() {
        Err(DiagnosticKind::EmptyQuery)
    } else if query.len() > MAX_QUERY_BYTES {
        Err(DiagnosticKind::QueryTooLong)
    } else if query.contains('\n') {
        Err(DiagnosticKind::QueryHasNewline)
    } else {
        Ok(())
    }
}

/// Parses the text between the markers of a balanced, non-nested region.
fn parse_body(
    body: &str,
    markers: &ToolCallMarkers,
) -> Result<(String, String), DiagnosticKind> {
    let rest = body
        .strip_prefix(markers.call_prefix.as_str())
        .ok_or(DiagnosticKind::MissingCallPrefix)?;
    let (query_end, answer_start) =
        find_arrow(rest, markers).ok_or(DiagnosticKind::MissingArrow)?;
    let query = &rest[..query_end];
    check_query(query)?;
    Ok((query.to_string(), rest[answer_start..].to_string()))
}

/// Finds every well-formed call, left to right. Calls never overlap.
pub fn parse_tool_calls(text: &str, markers: &ToolCallMarkers) -> ParseOutput {
    let mut out = ParseOutput::default();
    let mut pos = 0;
    while let Some((start, kind)) = markers.next_marker(text, pos) {
        if kind == MarkerKind::Close {
            let end = start + markers.close_marker.len();
            out.diagnostics.push(Diagnostic {
                kind: DiagnosticKind::StrayClose,
                span: start..end,
            });
            pos = end;
            continue;
        }

        let mut depth = 1usize;
        let mut nested = false;
        let mut cursor = start + markers.open_marker.len();
        let mut end = None;
        while let Some((at, kind)) = markers.next_marker(text, cursor) {
            cursor = at + markers.marker_len(kind);
            match kind {
                MarkerKind::Open => {
                    depth += 1;
                    nested = true;
                }
                MarkerKind::Close => {
                    depth -= 1;
                    if depth == 0 {
                        end = Some(cursor);
                        break;
                    }
                }
            }
        }

        match end {
            None => {
                out.diagnostics.push(Diagnostic {
                    kind: DiagnosticKind::Unclosed,
                    span: start..text.len(),
                });
                pos = start + markers.open_marker.len();
            }
            Some(end) if nested => {
                out.diagnostics.push(Diagnostic {
                    kind: DiagnosticKind::Nested,
                    span: start..end,
                });
                pos = end;
            }
            Some(end) => {
                let body = &text[start + markers.open_marker.len()..end - markers.close_marker.len()];
                match parse_body(body, markers) {
                    Ok((query, answer)) => out.calls.push(ToolCall {
                        query,
                        answer,
                        span: start..end,
                    }),
                    Err(kind) => out.diagnostics.push(Diagnostic {
                        kind,
                        span: start..end,
                    }),
                }
                pos = end;
            }
        }
    }
    out
}

fn strip_once(text: &str, calls: &[ToolCall]) -> String {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for call in calls {
        out.push_str(&text[last..call.span.start]);
        last = call.span.end;
    }
    out.push_str(&text[last..]);
    out
}

/// Removes every well-formed call region, keeping all other bytes in order.
///
/// Repeats until no call remains, so splicing can never leave behind a
/// freshly formed call and the function is idempotent.
pub fn strip_tool_calls(text: &str, markers: &ToolCallMarkers) -> String {
    let mut current = text.to_string();
    loop {
        let parsed = parse_tool_calls(&current, markers);
        if parsed.calls.is_empty() {
            return current;
        }
        current = strip_once(&current, &parsed.calls);
    }
}

/// Renders a call as markup. The span of `call` is ignored.
pub fn serialize_tool_call(call: &ToolCall, markers: &ToolCallMarkers) -> Result<String, GrammarError> {
    render_call(&call.query, &call.answer, markers)
}

pub fn render_call(query: &str, answer: &str, markers: &ToolCallMarkers) -> Result<String, GrammarError> {
    if query.is_empty() {
        return Err(GrammarError::EmptyQuery);
    }
    if markers.contains_marker(query) || markers.contains_marker(answer) {
        return Err(GrammarError::InvalidQuery("contains a marker".into()));
    }
    if let Err(kind) = check_query(query) {
        return Err(GrammarError::InvalidQuery(format!("{kind:?}")));
    }
    if find_arrow(query, markers).is_some() {
        return Err(GrammarError::InvalidQuery("query contains ')' followed by an arrow".into()));
    }
    Ok(format!(
        "{}{}{}){}{}{}",
        markers.open_marker, markers.call_prefix, query, markers.emit_arrow, answer, markers.close_marker
    ))
}

//! Independent reference implementations and input generators shared by the
//! property suites and the acceptance run.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toolcoder_core::eval::{pass_at_k, PassAtKMode};
use toolcoder_core::grammar::{parse_tool_calls, render_call, serialize_tool_call, strip_tool_calls, ToolCallMarkers};
use toolcoder_core::peft::{LoraAdapter, Matrix};
use toolcoder_core::search::{tokenize, DocEntry};
use toolcoder_core::{DocIndexF64, LoraAdapterF64, MatrixF64};

/// Works from any crate of the workspace.
pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

// ---------------------------------------------------------------- grammar

pub fn markers() -> ToolCallMarkers {
    ToolCallMarkers::default()
}

fn segment() -> impl Strategy<Value = String> {
    "(?s).{0,24}".prop_filter("no markers", |s| !markers().contains_marker(s))
}

fn query() -> impl Strategy<Value = String> {
    "[a-zé()][a-z é()_-]{0,40}"
}

fn answer() -> impl Strategy<Value = String> {
    "[a-zA-Z_.]{0,16}"
}

/// Segments and calls to interleave as `s0 c0 s1 c1 ... sn`.
pub fn annotated() -> impl Strategy<Value = (Vec<String>, Vec<(String, String)>)> {
    prop::collection::vec((query(), answer()), 0..5).prop_flat_map(|calls| {
        let n = calls.len();
        (prop::collection::vec(segment(), n + 1), Just(calls))
    })
}

pub fn assemble(segments: &[String], calls: &[(String, String)]) -> Option<String> {
    let mut text = segments[0].clone();
    for ((q, a), seg) in calls.iter().zip(&segments[1..]) {
        text.push_str(&render_call(q, a, &markers()).ok()?);
        text.push_str(seg);
    }
    Some(text)
}

/// Parsing recovers every rendered call, each span re-serializes to its own
/// text, and stripping leaves the segments, idempotently.
pub fn check_round_trip(segments: &[String], calls: &[(String, String)]) -> Result<(), TestCaseError> {
    let Some(text) = assemble(segments, calls) else {
        return Err(TestCaseError::reject("query not renderable"));
    };
    let parsed = parse_tool_calls(&text, &markers());
    prop_assert!(parsed.diagnostics.is_empty(), "{:?}", parsed.diagnostics);
    let got: Vec<(String, String)> = parsed.calls.iter().map(|c| (c.query.clone(), c.answer.clone())).collect();
    prop_assert_eq!(&got, calls);
    for call in &parsed.calls {
        prop_assert_eq!(&text[call.span.clone()], serialize_tool_call(call, &markers()).unwrap());
    }
    let stripped = strip_tool_calls(&text, &markers());
    prop_assert_eq!(&stripped, &segments.concat());
    prop_assert_eq!(strip_tool_calls(&stripped, &markers()), stripped);
    Ok(())
}

// ---------------------------------------------------------------- BM25

/// Scores every document from scratch with the textbook formula; ties go to
/// the lower id.
pub fn bm25_brute_force(corpus: &[DocEntry], query: &str, k1: f64, b: f64) -> Vec<(usize, f64)> {
    let docs: Vec<Vec<String>> = corpus.iter().map(|d| tokenize(&format!("{} {}", d.api_name, d.comment))).collect();
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
    let mut scored = Vec::new();
    for (id, doc) in docs.iter().enumerate() {
        let mut score = 0.0;
        let mut matched = false;
        for term in &terms {
            let tf = doc.iter().filter(|t| *t == term).count() as f64;
            if tf == 0.0 {
                continue;
            }
            matched = true;
            let df = docs.iter().filter(|d| d.contains(term)).count() as f64;
            let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
            score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * doc.len() as f64 / avgdl));
        }
        if matched {
            scored.push((id, score));
        }
    }
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored
}

pub const WORDS: &[&str] = &[
    "array", "shape", "axis", "sum", "mean", "sort", "remove", "entries", "single", "dimensional", "frame", "column",
    "index", "value", "expand_dims", "readCsv", "HTTPServer",
];

/// Up to 20 documents drawn from a small vocabulary so terms collide often.
pub fn corpus_strategy() -> impl Strategy<Value = Vec<DocEntry>> {
    prop::collection::vec(prop::collection::vec(prop::sample::select(WORDS), 0..12), 1..=20).prop_map(|docs| {
        docs.into_iter()
            .enumerate()
            .map(|(i, words)| DocEntry::new(format!("lib.f{i}"), "", words.join(" ")))
            .collect()
    })
}

/// Queries of one to eight terms.
pub fn query_strategy() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS), 1..=8).prop_map(|words| words.join(" "))
}

/// Scores match the oracle to 1e-9 and the ranked ids are identical.
pub fn check_bm25(corpus: &[DocEntry], query: &str, k1: f64, b: f64) -> Result<(), TestCaseError> {
    let index = DocIndexF64::build(corpus.to_vec(), k1, b).unwrap();
    let hits = index.search(query, usize::MAX);
    let oracle = bm25_brute_force(corpus, query, k1, b);
    let got: Vec<usize> = hits.iter().map(|h| h.entry_id).collect();
    let want: Vec<usize> = oracle.iter().map(|(i, _)| *i).collect();
    prop_assert_eq!(got, want, "ranking differs for {:?}", query);
    for (hit, (_, score)) in hits.iter().zip(&oracle) {
        prop_assert!((hit.score - score).abs() < 1e-9, "score {} vs {}", hit.score, score);
    }
    Ok(())
}

/// Random corpus of `n` entries over a 3,000-word vocabulary.
pub fn synthetic_corpus(n: usize, seed: u64) -> (Vec<DocEntry>, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab: Vec<String> = (0..3000).map(|i| format!("w{i}")).collect();
    let corpus = (0..n)
        .map(|i| {
            let words: Vec<&str> = (0..rng.random_range(5..40))
                .map(|_| vocab[rng.random_range(0..vocab.len())].as_str())
                .collect();
            DocEntry::new(format!("lib.api{i}"), "", words.join(" "))
        })
        .collect();
    (corpus, vocab)
}

/// 99th percentile search latency in milliseconds over `queries` random
/// four-term queries.
pub fn search_p99_ms(index: &DocIndexF64, vocab: &[String], queries: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut latencies: Vec<f64> = (0..queries)
        .map(|_| {
            let query: Vec<&str> = (0..4).map(|_| vocab[rng.random_range(0..vocab.len())].as_str()).collect();
            let started = Instant::now();
            let _ = index.search(&query.join(" "), 10);
            started.elapsed().as_secs_f64() * 1e3
        })
        .collect();
    latencies.sort_by(f64::total_cmp);
    latencies[(latencies.len() * 99).div_ceil(100) - 1]
}

// ---------------------------------------------------------------- LoRA

pub fn to_dense(m: &MatrixF64) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn values(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, len)
}

/// One adapter instance and its inputs.
#[derive(Debug, Clone)]
pub struct LoraCase {
    pub d: usize,
    pub r: usize,
    pub k: usize,
    pub w_down: Vec<f64>,
    pub w_up: Vec<f64>,
    pub x: Vec<f64>,
    pub h: Vec<f64>,
    pub scale: f64,
}

impl LoraCase {
    pub fn adapter(&self) -> LoraAdapterF64 {
        lora_adapter(self.d, self.r, self.k, self.w_down.clone(), self.w_up.clone(), self.scale)
    }
}

pub fn lora_adapter(d: usize, r: usize, k: usize, wd: Vec<f64>, wu: Vec<f64>, s: f64) -> LoraAdapterF64 {
    LoraAdapter::new(
        Matrix::from_row_major(d, r, wd).unwrap(),
        Matrix::from_row_major(r, k, wu).unwrap(),
        s,
    )
    .unwrap()
}

/// Shapes up to 8, rank at most `min(d, k)`, scale in `[1, 4)`.
pub fn lora_case() -> impl Strategy<Value = LoraCase> {
    (1usize..9, 1usize..9)
        .prop_flat_map(|(d, k)| (Just(d), 1..=d.min(k), Just(k)))
        .prop_flat_map(|(d, r, k)| {
            (Just(d), Just(r), Just(k), values(d * r), values(r * k), values(d), values(k), 1.0f64..4.0)
        })
        .prop_map(|(d, r, k, w_down, w_up, x, h, scale)| LoraCase {
            d,
            r,
            k,
            w_down,
            w_up,
            x,
            h,
            scale,
        })
}

/// The update agrees with a dense `h + s x W_down W_up` to 1e-12, and the
/// merged delta has rank at most `r`.
pub fn check_lora_dense(c: &LoraCase) -> Result<(), TestCaseError> {
    let a = c.adapter();
    let x = DVector::from_vec(c.x.clone()).transpose();
    let h = DVector::from_vec(c.h.clone()).transpose();
    let dense = &h + &x * (to_dense(a.w_down()) * to_dense(a.w_up())) * c.scale;
    let got = a.apply(&c.h, &c.x).unwrap();
    for (g, want) in got.iter().zip(dense.iter()) {
        prop_assert!((g - want).abs() < 1e-12, "{} vs {}", g, want);
    }
    let delta = to_dense(&a.delta());
    let via_delta = &h + &x * &delta;
    for (g, want) in got.iter().zip(via_delta.iter()) {
        prop_assert!((g - want).abs() < 1e-12);
    }
    let sv = delta.singular_values();
    let tol = 1e-9 * sv.max().max(1.0);
    prop_assert!(sv.iter().filter(|v| **v > tol).count() <= c.r);
    Ok(())
}

pub fn check_lora_zero_up(c: &LoraCase) -> Result<(), TestCaseError> {
    let a = lora_adapter(c.d, c.r, c.k, c.w_down.clone(), vec![0.0; c.r * c.k], c.scale);
    prop_assert_eq!(a.apply(&c.h, &c.x).unwrap(), c.h.clone());
    Ok(())
}

/// Central differences of `||update||^2` over every `W_down` entry agree with
/// the analytic gradient to 1e-5 relative error.
pub fn check_lora_gradient(c: &LoraCase) -> Result<(), TestCaseError> {
    let grad = c.adapter().grad_w_down_sq_norm(&c.h, &c.x).unwrap();
    let objective = |w: &[f64]| -> f64 {
        lora_adapter(c.d, c.r, c.k, w.to_vec(), c.w_up.clone(), c.scale)
            .apply(&c.h, &c.x)
            .unwrap()
            .iter()
            .map(|v| v * v)
            .sum()
    };
    let eps = 1e-6;
    for i in 0..c.d {
        for j in 0..c.r {
            let mut plus = c.w_down.clone();
            let mut minus = c.w_down.clone();
            plus[i * c.r + j] += eps;
            minus[i * c.r + j] -= eps;
            let numeric = (objective(&plus) - objective(&minus)) / (2.0 * eps);
            let analytic = grad.get(i, j);
            let rel = (numeric - analytic).abs() / analytic.abs().max(1.0);
            prop_assert!(rel < 1e-5, "({}, {}): {} vs {}", i, j, numeric, analytic);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- pass@k

/// Per-problem pass flags for `n` candidates, given the 1-based indices that pass.
pub fn pass_table(passing: &[&[usize]], n: usize) -> Vec<Vec<bool>> {
    passing
        .iter()
        .map(|set| (1..=n).map(|i| set.contains(&i)).collect())
        .collect()
}

pub fn candidate_table() -> impl Strategy<Value = Vec<Vec<bool>>> {
    prop::collection::vec(prop::collection::vec(any::<bool>(), 10), 1..30)
}

/// pass@k is non-decreasing in k and stays within [0, 1] in both modes.
pub fn check_pass_at_k_monotone(results: &[Vec<bool>]) -> Result<(), TestCaseError> {
    for mode in [PassAtKMode::FirstK, PassAtKMode::Unbiased] {
        let mut last = 0.0;
        for k in 1..=10 {
            let p = pass_at_k(results, k, mode).unwrap();
            prop_assert!(p.value >= last - 1e-12);
            prop_assert!((0.0..=1.0).contains(&p.value));
            last = p.value;
        }
    }
    let p1 = pass_at_k(results, 1, PassAtKMode::FirstK).unwrap().value;
    let p10 = pass_at_k(results, 10, PassAtKMode::FirstK).unwrap().value;
    prop_assert!(p1 <= p10);
    Ok(())
}

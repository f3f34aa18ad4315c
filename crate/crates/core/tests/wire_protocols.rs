#[path = "support/mock_http.rs"]
mod mock_http;

use std::time::Duration;

use serde_json::json;
use toolcoder_core::annotate::{AnnotationPrompt, AnnotatorClient, AnnotatorError, HttpAnnotator};
use toolcoder_core::decode::{
    DecodeConfig, GeneratorError, HttpGenerator, Orchestrator, SamplingParams, StepRequest, StepResponse,
    TokenGenerator,
};
use toolcoder_core::search::{FixtureTool, MissPolicy, SearchFixtureCache};

const PROMPT: &str = "def total(xs):\n";

/// A model that writes up to the arrow, then continues once the answer is in
/// its context.
fn model(path: &str, body: &serde_json::Value) -> (u16, String) {
    if path != "/v1/step" {
        return (404, "{}".into());
    }
    let context = body["context"].as_str().unwrap_or("");
    let generated = context.strip_prefix(PROMPT).unwrap_or("");
    let reply = if generated.is_empty() {
        StepResponse {
            text: "    return <API>APISearch(sum values)->".into(),
            done: false,
        }
    } else if generated.ends_with("->sum</API>") {
        StepResponse {
            text: "sum(xs)\n".into(),
            done: true,
        }
    } else {
        return (500, json!({"error": format!("unexpected context {generated:?}")}).to_string());
    };
    (200, serde_json::to_string(&reply).unwrap())
}

#[test]
fn step_protocol_round_trip() {
    let server = mock_http::serve(model);
    let mut generator = HttpGenerator::new(&server.base_url, 32, Duration::from_secs(5)).unwrap();
    let cache = SearchFixtureCache::new();
    cache.record("sum values", "sum", "fixture", 0.0);
    let tool = FixtureTool::new(cache, MissPolicy::Error);
    let orchestrator = Orchestrator::new(Some(&tool), DecodeConfig::default());
    let params = SamplingParams::default().with_seed(42);
    let outcome = orchestrator.infer_with_tool(&mut generator, PROMPT, &params).unwrap();
    assert_eq!(outcome.clean_code, "    return sum(xs)\n");
    assert_eq!(outcome.trace.invocation_count(), 1);
    assert!(outcome.failure().is_none());

    let requests = server.requests.lock().unwrap();
    assert_eq!(requests.len(), 2);
    for r in requests.iter() {
        let req: StepRequest = serde_json::from_value(r.body.clone()).unwrap();
        assert_eq!(req.temperature, 0.8);
        assert_eq!(req.seed, 42);
        assert_eq!(req.max_new, 32);
        let keys: Vec<&str> = r.body.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys.len(), 4);
    }
    assert!(requests[1].body["context"].as_str().unwrap().ends_with("->sum</API>"));
}

#[test]
fn step_errors_surface() {
    let server = mock_http::serve(|_, _| (503, "overloaded".into()));
    let mut generator = HttpGenerator::new(&server.base_url, 8, Duration::from_secs(5)).unwrap();
    match generator.step("x", &SamplingParams::default()) {
        Err(GeneratorError::Status { status, body }) => {
            assert_eq!(status, 503);
            assert_eq!(body, "overloaded");
        }
        other => panic!("unexpected {other:?}"),
    }
    let orchestrator = Orchestrator::new(None, DecodeConfig::default());
    let outcome = orchestrator.infer_with_tool(&mut generator, "x", &SamplingParams::default()).unwrap();
    assert!(outcome.failure().unwrap().contains("503"));

    let bad = mock_http::serve(|_, _| (200, "{\"text\": 3}".into()));
    let mut generator = HttpGenerator::new(&bad.base_url, 8, Duration::from_secs(5)).unwrap();
    assert!(matches!(generator.step("x", &SamplingParams::default()), Err(GeneratorError::Transport(_))));
}

#[test]
fn annotator_protocol_round_trip() {
    let server = mock_http::serve(|_, body| {
        let ok = body["system"].is_string() && body["messages"].as_array().is_some_and(|m| m.len() == 7);
        if ok {
            (200, json!({"text": "annotated"}).to_string())
        } else {
            (400, "{}".into())
        }
    });
    let endpoint = format!("{}/annotate", server.base_url);
    let client = HttpAnnotator::new(&endpoint, Some("secret".into()), Duration::from_secs(5)).unwrap();
    let request = AnnotationPrompt::default().render("x = np.zeros(3)\n");
    assert_eq!(client.complete("s1", &request).unwrap(), "annotated");
    let recorded = &server.requests.lock().unwrap()[0];
    assert_eq!(recorded.path, "/annotate");
    assert!(recorded.headers.iter().any(|(k, v)| k == "authorization" && v == "Bearer secret"));
    assert_eq!(recorded.body["messages"][6]["content"], "x = np.zeros(3)\n");
    assert_eq!(recorded.body["messages"][6]["role"], "user");
}

#[test]
fn annotator_failures() {
    let failing = mock_http::serve(|_, _| (500, "{}".into()));
    let client = HttpAnnotator::new(&failing.base_url, None, Duration::from_secs(5)).unwrap();
    let request = AnnotationPrompt::default().render("x");
    assert_eq!(client.complete("s", &request), Err(AnnotatorError::Status(500)));

    let slow = mock_http::serve(|_, _| {
        std::thread::sleep(Duration::from_millis(800));
        (200, json!({"text": "late"}).to_string())
    });
    let client = HttpAnnotator::new(&slow.base_url, None, Duration::from_millis(200)).unwrap();
    assert_eq!(client.complete("s", &request), Err(AnnotatorError::Timeout));
}

mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use profdenoise::denoise::{Denoiser, ProposalError};
use profdenoise::llm::mock_server::{MockReply, MockServer};
use profdenoise::llm::{
    build_prompt, ChatBackend, ChatRequest, HttpChatClient, LlmDenoiser, LlmError, PromptSpec, PromptVariant,
    RetryPolicy,
};

fn fast_retry(max_attempts: u32) -> RetryPolicy {
    RetryPolicy {
        max_attempts,
        base_delay_ms: 1,
        max_delay_ms: 4,
        timeout_secs: 10,
        jitter_seed: 5,
    }
}

#[test]
fn golden_prompts() {
    let bad = common::golden_mismatches(std::env::var_os("UPDATE_GOLDEN").is_some());
    assert!(bad.is_empty(), "{bad:?}");
}

#[test]
fn prompt_contents() {
    let ctx = common::golden_context();
    let zs = build_prompt(&PromptSpec::new(PromptVariant::ZeroShot, 1, "movie"), &ctx).unwrap();
    assert!(zs.contains("\n[Die Hard, Back to the Future, Home Alone, Toy Story] - [Lion King] - [13]\n"));
    assert!(zs.ends_with("Removal:"));
    assert!(zs.contains("remove only 1 item from the user history that would make MultiVAE rank"));
    assert!(zs.contains("The removed item must be present in the user history."));

    let recs = build_prompt(&PromptSpec::new(PromptVariant::ZeroShotRecs, 1, "movie"), &ctx).unwrap();
    let line = recs.lines().find(|l| l.starts_with("Top-10 recommendations: [")).unwrap();
    assert_eq!(line.matches(", ").count() + 1, 10);

    let two = build_prompt(&PromptSpec::new(PromptVariant::ZeroShot, 2, "book"), &ctx).unwrap();
    assert!(two.contains("remove only 2 items") && two.contains("[item1], [item2]") && two.contains("book domain"));

    let mut no_ex = ctx.clone();
    no_ex.examples = None;
    assert!(matches!(
        build_prompt(&PromptSpec::new(PromptVariant::FewShot, 1, "movie"), &no_ex),
        Err(LlmError::InvalidSpec(_))
    ));
    let mut untitled = ctx.clone();
    untitled.window[1].title = None;
    assert_eq!(
        build_prompt(&PromptSpec::new(PromptVariant::ZeroShot, 1, "movie"), &untitled),
        Err(LlmError::MissingTitle { item: 3 })
    );
}

#[test]
fn client_happy_path() {
    let seen = Arc::new(Mutex::new(None));
    let s2 = seen.clone();
    let server = MockServer::start(2, move |req| {
        *s2.lock().unwrap() = Some(req.clone());
        MockReply::Text("[Toy Story]".into())
    })
    .unwrap();
    let client = HttpChatClient::new(server.url(), Some("key".into()), fast_retry(3));
    let mut req = ChatRequest::user_prompt("m", "hello".into());
    req.overrides.insert("temperature".into(), serde_json::json!(0.0));
    let ex = client.complete(&req).unwrap();
    assert_eq!(ex.response.unwrap().text, "[Toy Story]");
    assert_eq!(ex.attempts, 1);
    let got = seen.lock().unwrap().clone().unwrap();
    assert_eq!(got.prompt(), "hello");
    assert_eq!(got.overrides["temperature"], serde_json::json!(0.0));
}

#[test]
fn client_retries_then_succeeds() {
    let n = Arc::new(AtomicUsize::new(0));
    let n2 = n.clone();
    let server = MockServer::start(1, move |_| {
        if n2.fetch_add(1, Ordering::SeqCst) < 2 {
            MockReply::Status(503)
        } else {
            MockReply::Text("[Die Hard]".into())
        }
    })
    .unwrap();
    let client = HttpChatClient::new(server.url(), None, fast_retry(4));
    let ex = client.complete(&ChatRequest::user_prompt("m", "x".into())).unwrap();
    assert_eq!(ex.attempts, 3);
    assert_eq!(ex.response.unwrap().text, "[Die Hard]");
}

#[test]
fn client_exhausts_and_rejects() {
    let server = MockServer::start(1, |_| MockReply::Status(503)).unwrap();
    let client = HttpChatClient::new(server.url(), None, fast_retry(4));
    let ex = client.complete(&ChatRequest::user_prompt("m", "x".into())).unwrap();
    assert!(ex.response.is_none());
    assert_eq!(ex.attempts, 4);
    assert_eq!(server.hits(), 4);

    let server = MockServer::start(1, |_| MockReply::Raw(200, "not json".into())).unwrap();
    let client = HttpChatClient::new(server.url(), None, fast_retry(2));
    let ex = client.complete(&ChatRequest::user_prompt("m", "x".into())).unwrap();
    assert!(ex.failure.unwrap().contains("malformed"));

    let server = MockServer::start(1, |_| MockReply::Status(401)).unwrap();
    let client = HttpChatClient::new(server.url(), None, fast_retry(4));
    assert!(matches!(
        client.complete(&ChatRequest::user_prompt("m", "x".into())),
        Err(LlmError::Endpoint(_))
    ));
    assert_eq!(server.hits(), 1);
}

#[test]
fn backoff_grows_and_stays_bounded() {
    let p = RetryPolicy {
        base_delay_ms: 100,
        max_delay_ms: 1000,
        ..Default::default()
    };
    for a in 1..8 {
        let d = p.delay(a, 3).as_secs_f64() * 1e3;
        let cap = (100.0 * 2f64.powi(a as i32 - 1)).min(1000.0);
        assert!(d >= cap * 0.5 && d < cap, "attempt {a}: {d}");
    }
    assert_eq!(p.delay(2, 3), p.delay(2, 3));
}

#[test]
fn denoiser_wraps_backend() {
    let backend = |req: &ChatRequest| -> Result<String, LlmError> {
        let (_, run) = req.meta().unwrap();
        Ok(match run {
            0 => "[Home Alone]".into(),
            1 => "[Jaws]".into(),
            _ => "no idea".into(),
        })
    };
    let d = LlmDenoiser::new("llm-zs-1", PromptSpec::new(PromptVariant::ZeroShot, 1, "movie"), "m", Box::new(backend));
    assert!(d.is_stochastic());
    assert!(d.needs().titles && !d.needs().examples);
    let ctx = common::golden_context();
    let errors: Vec<ProposalError> = (0..3).map(|r| d.propose(&ctx, 1, 0, r).error).collect();
    assert_eq!(errors, [ProposalError::None, ProposalError::Hallucination, ProposalError::Formatting]);
    let p = d.propose(&ctx, 1, 0, 0);
    assert_eq!(p.items(), Some(vec![4]));
    assert_eq!(p.source.response.as_deref(), Some("[Home Alone]"));
    let t = d.take_transcripts();
    assert_eq!(t.len(), 4);
    assert_eq!((t[0].user, t[0].run), (7, 0));
    assert!(d.fatal_error().is_none());
}

#[test]
fn transport_failure_is_formatting() {
    let server = MockServer::start(1, |_| MockReply::Status(500)).unwrap();
    let client = HttpChatClient::new(server.url(), None, fast_retry(2));
    let d = LlmDenoiser::new("llm", PromptSpec::new(PromptVariant::ZeroShot, 1, "movie"), "m", Box::new(client));
    let p = d.propose(&common::golden_context(), 1, 0, 0);
    assert_eq!(p.error, ProposalError::Formatting);
    assert!(p.source.transport_error.is_some());
    assert!(d.fatal_error().is_none());

    let server = MockServer::start(1, |_| MockReply::Status(404)).unwrap();
    let client = HttpChatClient::new(server.url(), None, fast_retry(2));
    let d = LlmDenoiser::new("llm", PromptSpec::new(PromptVariant::ZeroShot, 1, "movie"), "m", Box::new(client));
    assert_eq!(d.propose(&common::golden_context(), 1, 0, 0).error, ProposalError::Formatting);
    assert!(d.fatal_error().unwrap().contains("404"));
}

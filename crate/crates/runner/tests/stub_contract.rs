use std::sync::Arc;
use std::time::Duration;

use keymaze::prompt::FEW_SHOT;
use keymaze::verify::parse_solution;
use keymaze_runner::stub::{StubBehavior, StubServer};
use keymaze_runner::{read_responses, EndpointConfig, Job, ResponseStore, RunError, Runner};

fn config(server: &StubServer, concurrency: usize) -> EndpointConfig {
    let mut c = EndpointConfig::new(server.base_url(), "stub-model", 256);
    c.max_concurrent_requests = concurrency;
    c.retry.backoff_base_ms = 5;
    c
}

fn jobs(n: usize) -> Vec<Job> {
    (0..n)
        .map(|i| Job {
            instance_id: format!("task-{i}"),
            prompt: format!("prompt number {i}"),
        })
        .collect()
}

fn example_one_output() -> String {
    FEW_SHOT[0].split("OUTPUT:\n").nth(1).unwrap().to_string()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn echoed_example_parses_in_every_run() {
    let server = StubServer::start(StubBehavior::echo(example_one_output())).await.unwrap();
    let runner = Runner::new(config(&server, 1)).unwrap();
    let job = &jobs(1)[0];
    let out = runner.run_instance(job, 5).await.unwrap();
    assert_eq!(out.len(), 5);
    for (i, r) in out.iter().enumerate() {
        assert_eq!(r.run_index, i as u32);
        assert_eq!(r.raw_text, example_one_output());
        assert_eq!(parse_solution(&r.raw_text).unwrap().len(), 8);
        assert_eq!(r.attempts, 1);
        assert!(r.output_tokens > 0 && r.prompt_tokens == 3);
    }
    let bodies = server.stats.bodies.lock().unwrap().clone();
    assert!(bodies.windows(2).all(|w| w[0] == w[1]), "request bodies differ across runs");

    assert!(runner.run_instance(job, 0).await.unwrap().is_empty());
    assert_eq!(server.stats.requests(), 5);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn rate_limited_twice_then_success() {
    let mut b = StubBehavior::echo("Solution: []");
    b.rate_limit_first = 2;
    let server = StubServer::start(b).await.unwrap();
    let runner = Runner::new(config(&server, 1)).unwrap();
    let r = runner.complete("x", 0, "p").await.unwrap();
    assert_eq!(r.attempts, 3);
    assert!(r.is_success());
    assert_eq!(server.stats.requests(), 3);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn exhausted_retries_yield_a_failed_record() {
    let mut b = StubBehavior::echo("never");
    b.rate_limit_first = usize::MAX;
    let server = StubServer::start(b).await.unwrap();
    let mut c = config(&server, 1);
    c.retry.max_attempts = 3;
    let runner = Runner::new(c).unwrap();
    let r = runner.complete("x", 0, "p").await.unwrap();
    assert_eq!(r.attempts, 3);
    assert!(r.error.as_deref().unwrap().contains("429"));
    assert_eq!((r.output_tokens, r.raw_text.as_str()), (-1, ""));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrency_is_bounded() {
    let mut b = StubBehavior::echo("Solution: []");
    b.delay = Duration::from_millis(20);
    let server = StubServer::start(b).await.unwrap();
    let runner = Runner::new(config(&server, 4)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("responses.jsonl");
    let summary = runner.run_batch_to_file(&jobs(10), 5, &path).await.unwrap();
    assert_eq!(summary.succeeded, 50);
    assert_eq!(server.stats.requests(), 50);
    assert!(server.stats.max_in_flight() <= 4, "{}", server.stats.max_in_flight());
    assert!(server.stats.max_in_flight() >= 2);
    assert_eq!(read_responses(&path).unwrap().len(), 50);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn interrupted_batch_resumes_without_duplicates() {
    let mut b = StubBehavior::echo("Solution: []");
    b.delay = Duration::from_millis(15);
    let server = StubServer::start(b).await.unwrap();
    let runner = Runner::new(config(&server, 4)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("responses.jsonl");
    let all = jobs(10);

    let first = {
        let runner = runner.clone();
        let path = path.clone();
        let all = all.clone();
        tokio::spawn(async move { runner.run_batch_to_file(&all, 5, &path).await })
    };
    while read_responses(&path).map(|r| r.len()).unwrap_or(0) < 12 {
        tokio::time::sleep(Duration::from_millis(2)).await;
    }
    first.abort();
    let _ = first.await;
    let persisted = read_responses(&path).unwrap().len();
    assert!((12..50).contains(&persisted), "{persisted}");
    let before = server.stats.requests();

    let summary = runner.run_batch_to_file(&all, 5, &path).await.unwrap();
    assert_eq!(summary.skipped_existing, persisted);
    assert_eq!(server.stats.requests() - before, 50 - persisted);
    let records = read_responses(&path).unwrap();
    assert_eq!(records.len(), 50);
    let mut keys: Vec<_> = records.iter().map(|r| r.key()).collect();
    keys.sort();
    keys.dedup();
    assert_eq!(keys.len(), 50);

    let before = server.stats.requests();
    let again = runner.run_batch_to_file(&all, 5, &path).await.unwrap();
    assert_eq!((again.requested, again.skipped_existing), (0, 50));
    assert_eq!(server.stats.requests(), before);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn auth_rejection_aborts_the_batch() {
    let mut b = StubBehavior::echo("Solution: []");
    b.require_token = Some("letmein".into());
    let server = StubServer::start(b).await.unwrap();
    let mut c = config(&server, 2);
    c.api_key_env_var_name = Some("KEYMAZE_STUB_WRONG_TOKEN".into());
    std::env::set_var("KEYMAZE_STUB_WRONG_TOKEN", "nope");
    let runner = Runner::new(c.clone()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("responses.jsonl");
    let err = runner.run_batch_to_file(&jobs(20), 5, &path).await.unwrap_err();
    assert!(matches!(err, RunError::Auth { status: 401, .. }));
    assert!(server.stats.requests() <= 2);
    assert!(read_responses(&path).unwrap().is_empty());

    std::env::set_var("KEYMAZE_STUB_RIGHT_TOKEN", "letmein");
    c.api_key_env_var_name = Some("KEYMAZE_STUB_RIGHT_TOKEN".into());
    let ok = Runner::new(c).unwrap();
    let mut store = ResponseStore::open(&path).unwrap();
    let summary = ok.run_batch(&jobs(2), 1, &mut store).await.unwrap();
    assert_eq!(summary.succeeded, 2);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn missing_usage_is_unknown() {
    let mut b = StubBehavior::echo("x");
    b.omit_usage = true;
    b.reply = Arc::new(|p: &str| format!("  {p}\n"));
    let server = StubServer::start(b).await.unwrap();
    let runner = Runner::new(config(&server, 1)).unwrap();
    let r = runner.complete("x", 0, "verbatim").await.unwrap();
    assert_eq!((r.prompt_tokens, r.output_tokens), (-1, -1));
    assert_eq!(r.raw_text, "  verbatim\n");
}

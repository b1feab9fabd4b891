mod common;

use std::path::Path;
use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use tower::ServiceExt;

use flimsod::service::{router, AppState, ImageInfo, JobPhase, JobState, SelectionView, ServiceState, Shared};
use flimsod::PipelineConfig;
use flimsod_core::imgcore::load_saliency;
use flimsod_core::synth::{generate_suite, SynthConfig, SynthScene};

use common::{postproc_json, two_block_arch, write_dataset};

struct Fixture {
    dir: tempfile::TempDir,
    scenes: Vec<SynthScene>,
    app: Shared,
}

impl Fixture {
    fn router(&self) -> Router {
        router(self.app.clone())
    }
}

/// `n` scenes, markers for the first `marked`.
fn fixture(n: usize, marked: usize, size: usize) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        width: size,
        height: size,
        ..SynthConfig::default()
    };
    let scenes = generate_suite(n, 5, &cfg);
    let with: Vec<&str> = scenes[..marked].iter().map(|s| s.id.as_str()).collect();
    let config = write_dataset(
        dir.path(),
        &scenes,
        &with,
        &two_block_arch(),
        serde_json::json!({ "postproc": postproc_json(), "model": "work/model.json" }),
    );
    let app = AppState::open(PipelineConfig::load(&config).unwrap()).unwrap();
    Fixture { dir, scenes, app }
}

async fn send(app: Router, method: Method, uri: &str, body: impl Into<Body>) -> (StatusCode, axum::http::HeaderMap, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri).body(body.into()).unwrap();
    let resp = app.oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, headers, bytes)
}

async fn get(app: Router, uri: &str) -> (StatusCode, axum::http::HeaderMap, Vec<u8>) {
    send(app, Method::GET, uri, Body::empty()).await
}

async fn post_json(app: Router, uri: &str, value: serde_json::Value) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(Method::POST)
        .uri(uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(value.to_string()))
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

fn json<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> T {
    serde_json::from_slice(bytes).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(bytes)))
}

async fn wait_for_job(app: &Router, id: u64) -> JobState {
    for _ in 0..600 {
        let (status, _, body) = get(app.clone(), &format!("/api/jobs/{id}")).await;
        assert_eq!(status, StatusCode::OK);
        let job: JobState = json(&body);
        if matches!(job.phase, JobPhase::Done | JobPhase::Failed) {
            return job;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    panic!("job {id} did not finish");
}

fn assert_same_state(a: &ServiceState, b: &ServiceState) {
    assert_eq!(a.markers, b.markers);
    assert_eq!(a.jobs, b.jobs);
    assert_eq!(a.session, b.session);
    assert_eq!(a.model.as_ref().map(|t| &t.model), b.model.as_ref().map(|t| &t.model));
    assert_eq!(a.model.as_ref().map(|t| &t.bp), b.model.as_ref().map(|t| &t.bp));
}

#[tokio::test(flavor = "multi_thread")]
async fn lists_and_serves_images() {
    let f = fixture(3, 1, 48);
    let (status, _, body) = get(f.router(), "/api/images").await;
    assert_eq!(status, StatusCode::OK);
    let images: Vec<ImageInfo> = json(&body);
    let ids: Vec<&str> = images.iter().map(|i| i.id.as_str()).collect();
    assert_eq!(ids, ["synth_000", "synth_001", "synth_002"]);
    assert!(images.iter().all(|i| (i.width, i.height) == (48, 48)));

    let (status, headers, body) = get(f.router(), "/api/images/synth_001.png").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(headers[header::CONTENT_TYPE], "image/png");
    assert_eq!(body, std::fs::read(f.dir.path().join("images/synth_001.png")).unwrap());

    assert_eq!(get(f.router(), "/api/images/synth_009.png").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(f.router(), "/api/images/synth_001").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread")]
async fn markers_round_trip_byte_identical() {
    let f = fixture(3, 1, 48);
    let text = f.scenes[1].markers.to_text();
    assert_eq!(get(f.router(), "/api/markers/synth_001").await.0, StatusCode::NOT_FOUND);

    let (status, _, body) = send(f.router(), Method::PUT, "/api/markers/synth_001", text.clone()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, text.as_bytes());
    let (status, _, body) = get(f.router(), "/api/markers/synth_001").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, text.as_bytes());
    assert_eq!(std::fs::read_to_string(f.dir.path().join("markers/synth_001.txt")).unwrap(), text);

    // markers loaded from disk at startup are served verbatim too
    let (_, _, body) = get(f.router(), "/api/markers/synth_000").await;
    assert_eq!(body, std::fs::read(f.dir.path().join("markers/synth_000.txt")).unwrap());
}

#[tokio::test(flavor = "multi_thread")]
async fn bad_marker_uploads_leave_state_untouched() {
    let f = fixture(3, 1, 48);
    let log_before = std::fs::read_to_string(f.dir.path().join("work/mutations.jsonl")).unwrap();
    let cases = [
        ("synth_001", "not a marker file".to_string(), StatusCode::BAD_REQUEST),
        // header names another image
        ("synth_001", f.scenes[2].markers.to_text(), StatusCode::BAD_REQUEST),
        ("synth_404", f.scenes[1].markers.to_text(), StatusCode::NOT_FOUND),
    ];
    for (id, body, expected) in cases {
        let (status, _, resp) = send(f.router(), Method::PUT, &format!("/api/markers/{id}"), body).await;
        assert_eq!(status, expected, "{}", String::from_utf8_lossy(&resp));
        let err: serde_json::Value = json(&resp);
        assert!(err["error"].is_string());
    }
    let wrong_size = f.scenes[1].markers.to_text().replacen("48 48", "40 48", 1);
    assert_ne!(wrong_size, f.scenes[1].markers.to_text());
    let (status, _, _) = send(f.router(), Method::PUT, "/api/markers/synth_001", wrong_size).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    assert!(!f.dir.path().join("markers/synth_001.txt").exists());
    assert!(!f.app.snapshot().markers.contains_key("synth_001"));
    assert_eq!(std::fs::read_to_string(f.dir.path().join("work/mutations.jsonl")).unwrap(), log_before);
}

#[tokio::test(flavor = "multi_thread")]
async fn training_job_lifecycle_and_conflict() {
    let f = fixture(5, 4, 160);
    assert_eq!(post_json(f.router(), "/api/infer/synth_004", serde_json::json!({})).await.0, StatusCode::CONFLICT);

    let (status, body) = post_json(f.router(), "/api/train", serde_json::json!({})).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let job: JobState = json(&body);
    assert_eq!(job.id, 1);
    assert_eq!(job.phase, JobPhase::Queued);

    let req = Request::builder().method(Method::POST).uri("/api/train").body(Body::empty()).unwrap();
    let resp = f.router().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::CONFLICT);
    assert_eq!(resp.headers()[header::RETRY_AFTER], "5");

    let done = wait_for_job(&f.router(), 1).await;
    assert_eq!(done.phase, JobPhase::Done, "{:?}", done.error);
    assert_eq!(done.progress, 1.0);
    assert!(f.dir.path().join("work/model.json").is_file());
    assert_eq!(get(f.router(), "/api/jobs/7").await.0, StatusCode::NOT_FOUND);

    let (status, headers, png) = send(f.router(), Method::POST, "/api/infer/synth_004?decoder=lm&block=2", Body::empty()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(headers[header::CONTENT_TYPE], "image/png");
    let range: Vec<f64> = headers["x-saliency-range"]
        .to_str()
        .unwrap()
        .split(' ')
        .map(|v| v.parse().unwrap())
        .collect();
    assert!(range[0] <= range[1]);
    let path = f.dir.path().join("sal.png");
    std::fs::write(&path, png).unwrap();
    let sal = load_saliency(&path).unwrap();
    assert_eq!((sal.width(), sal.height(), sal.channels()), (160, 160, 1));

    let (status, _) = post_json(f.router(), "/api/infer/synth_004?decoder=bp", serde_json::json!({})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = post_json(f.router(), "/api/infer/synth_004?decoder=zz", serde_json::json!({})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = post_json(f.router(), "/api/infer/synth_004?block=3", serde_json::json!({})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = post_json(f.router(), "/api/infer/nope", serde_json::json!({})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    // a second job may start once the first is done
    let (status, body) = post_json(f.router(), "/api/train", serde_json::json!({})).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    assert_eq!(json::<JobState>(&body).id, 2);
    wait_for_job(&f.router(), 2).await;
}

#[tokio::test(flavor = "multi_thread")]
async fn train_without_markers_is_rejected() {
    let f = fixture(2, 0, 48);
    let (status, body) = post_json(f.router(), "/api/train", serde_json::json!({})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{}", String::from_utf8_lossy(&body));
    assert!(f.app.snapshot().jobs.is_empty());
    assert_eq!(get(f.router(), "/api/selection").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread")]
async fn selection_step_and_revert_are_visible() {
    let f = fixture(4, 4, 64);
    let (status, _, body) = get(f.router(), "/api/selection").await;
    assert_eq!(status, StatusCode::OK);
    let v: SelectionView = json(&body);
    assert_eq!(v.training.len(), 1);
    assert_eq!(v.pool.len(), 3);
    assert_eq!(v.steps, 0);
    assert_eq!(v.ranked.len(), 3);
    let x = v.x.expect("scored");
    assert!(v.ranked.windows(2).all(|w| w[0].1 <= w[1].1));

    let worst = v.ranked[0].0.clone();
    let (status, body) = post_json(
        f.router(),
        "/api/selection/step",
        serde_json::json!({ "accept": true, "candidate": worst, "x": x }),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    let v: SelectionView = json(&body);
    assert_eq!(v.training.len(), 2);
    assert_eq!(v.z_prev.as_deref(), Some(worst.as_str()));
    assert_eq!(v.x_prev, x);

    // scoring is implicit when x is omitted
    let next = {
        let (_, _, body) = get(f.router(), "/api/session").await;
        json::<SelectionView>(&body).ranked[0].0.clone()
    };
    let (status, body) = post_json(
        f.router(),
        "/api/selection/step",
        serde_json::json!({ "accept": false, "candidate": next }),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));

    let (_, _, body) = get(f.router(), "/api/session").await;
    let v: SelectionView = json(&body);
    assert_eq!(v.training.len(), 1);
    assert!(!v.training.contains(&worst));
    assert!(v.pool.contains(&worst));
    assert_eq!(v.z_prev, None);
    assert_eq!(v.steps, 2);

    let (status, _) = post_json(
        f.router(),
        "/api/selection/step",
        serde_json::json!({ "accept": true, "candidate": "not_in_pool", "x": 0.5 }),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(f.app.snapshot().session.unwrap().history.len(), 3);
}

fn marker_texts(dir: &Path, scenes: &[SynthScene]) -> ServiceState {
    let mut st = ServiceState::default();
    for s in scenes {
        let p = dir.join(format!("markers/{}.txt", s.id));
        if p.is_file() {
            st.markers.insert(s.id.clone(), std::fs::read_to_string(p).unwrap());
        }
    }
    st
}

#[tokio::test(flavor = "multi_thread")]
async fn mutation_log_replays_to_the_same_state() {
    let f = fixture(4, 2, 64);
    let initial = marker_texts(f.dir.path(), &f.scenes);

    let text = f.scenes[2].markers.to_text();
    assert_eq!(send(f.router(), Method::PUT, "/api/markers/synth_002", text).await.0, StatusCode::OK);
    let (status, body) = post_json(f.router(), "/api/train", serde_json::json!({})).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let job: JobState = json(&body);
    assert_eq!(wait_for_job(&f.router(), job.id).await.phase, JobPhase::Done);
    let (_, _, body) = get(f.router(), "/api/selection").await;
    let v: SelectionView = json(&body);
    let (status, _) = post_json(
        f.router(),
        "/api/selection/step",
        serde_json::json!({ "accept": true, "candidate": v.ranked[0].0, "x": v.x.unwrap() }),
    )
    .await;
    assert_eq!(status, StatusCode::OK);

    let live = f.app.snapshot();
    assert_eq!(live.markers.len(), 3);
    assert!(live.model.is_some());

    let log = f.app.read_log().unwrap();
    let replayed = f.app.replay(initial, &log).unwrap();
    assert_same_state(&live, &replayed);

    // a restarted service reaches the same state from disk
    let cfg = PipelineConfig::load(&f.dir.path().join("config.json")).unwrap();
    let reopened = AppState::open(cfg).unwrap();
    assert_same_state(&live, &reopened.snapshot());
    assert_eq!(reopened.read_log().unwrap(), log);
}

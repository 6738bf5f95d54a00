use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use condmeasure_cli::service::router;
use condmeasure_cli::session::{read_record, Session, SessionStore, StateView, REPLAY_TOL};
use condmeasure_cli::spec::ExperimentSpec;
use http_body_util::BodyExt;
use proptest::prelude::*;
use serde_json::{json, Value};
use tower::ServiceExt;

fn toy(max_trials: usize) -> Value {
    json!({
        "theta": ["t1", "t2"],
        "prior": { "t1": "1/2", "t2": "1/2" },
        "placements": [
            { "label": "A", "outcomes": ["0", "1"], "table": { "t1": ["0.1", "0.9"], "t2": ["0.9", "0.1"] } },
            { "label": "B", "outcomes": ["0", "1"], "table": { "t1": ["0.4", "0.6"], "t2": ["0.6", "0.4"] } },
            { "label": "C", "outcomes": ["0", "1"], "table": { "t1": ["1", "0"], "t2": ["1", "0"] } }
        ],
        "termination": { "max_trials": max_trials }
    })
}

fn binary_entropy(p: f64) -> f64 {
    -(p * p.ln() + (1.0 - p) * (1.0 - p).ln())
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, v)
}

async fn create(app: &Router, config: Value) -> String {
    let (status, v) = call(app, "POST", "/sessions", Some(json!({ "config": config }))).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["session_id"].as_str().unwrap().to_string()
}

fn app() -> Router {
    router(Arc::new(SessionStore::in_memory()))
}

fn error_code(v: &Value) -> &str {
    v["error"]["code"].as_str().unwrap()
}

fn masses(v: &Value) -> Vec<f64> {
    v["posterior"].as_array().unwrap().iter().map(|m| m["mass"].as_f64().unwrap()).collect()
}

#[tokio::test]
async fn health() {
    let (status, v) = call(&app(), "GET", "/health", None).await;
    assert_eq!((status, v["status"].as_str()), (StatusCode::OK, Some("ok")));
}

#[tokio::test]
async fn proposal_ranks_by_information_gain() {
    let app = app();
    let id = create(&app, toy(20)).await;
    let (status, v) = call(&app, "POST", &format!("/sessions/{id}/propose"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["recommended"], "A");
    assert_eq!(v["greedy"], "A");
    let gains: Vec<f64> = v["gains"].as_array().unwrap().iter().map(|g| g["gain_nats"].as_f64().unwrap()).collect();
    let ln2 = std::f64::consts::LN_2;
    assert!((gains[0] - (ln2 - binary_entropy(0.1))).abs() < 1e-12);
    assert!((gains[1] - (ln2 - binary_entropy(0.4))).abs() < 1e-12);
    assert!((gains[0] - 0.368).abs() < 5e-4 && (gains[1] - 0.0201).abs() < 5e-5);
    assert!(gains[2].abs() < 1e-15);
}

#[tokio::test]
async fn outcome_updates_and_undo_restores() {
    let app = app();
    let id = create(&app, toy(20)).await;
    let (_, initial) = call(&app, "GET", &format!("/sessions/{id}"), None).await;

    let (status, v) = call(&app, "POST", &format!("/sessions/{id}/outcomes"), Some(json!({"placement": "A", "outcome": "1"}))).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let post = masses(&v);
    assert!((post[0] - 0.9).abs() < 1e-12 && (post[1] - 0.1).abs() < 1e-12, "{post:?}");
    assert_eq!(v["trials"], 1);
    assert_eq!(v["history"][0]["placement"], "A");

    let (status, v) = call(&app, "POST", &format!("/sessions/{id}/undo"), None).await;
    assert_eq!(status, StatusCode::OK);
    for (a, b) in masses(&v).iter().zip(masses(&initial)) {
        assert!((a - b).abs() <= REPLAY_TOL);
    }
    assert!((v["entropy_nats"].as_f64().unwrap() - initial["entropy_nats"].as_f64().unwrap()).abs() <= REPLAY_TOL);
    assert_eq!(v["trials"], 0);
    assert_eq!(v["version"], 2);

    let (status, v) = call(&app, "POST", &format!("/sessions/{id}/undo"), None).await;
    assert_eq!((status, error_code(&v)), (StatusCode::CONFLICT, "nothing_to_undo"));
}

#[tokio::test]
async fn rejected_outcomes_leave_state_alone() {
    let app = app();
    let id = create(&app, toy(20)).await;
    let url = format!("/sessions/{id}/outcomes");
    let (_, before) = call(&app, "GET", &format!("/sessions/{id}"), None).await;

    let (status, v) = call(&app, "POST", &url, Some(json!({"placement": "A", "outcome": "2"}))).await;
    assert_eq!((status, error_code(&v)), (StatusCode::UNPROCESSABLE_ENTITY, "invalid_outcome"));
    let (status, v) = call(&app, "POST", &url, Some(json!({"placement": "Z", "outcome": "0"}))).await;
    assert_eq!((status, error_code(&v)), (StatusCode::UNPROCESSABLE_ENTITY, "unknown_placement"));
    let (status, v) = call(&app, "POST", &url, Some(json!({"placement": "C", "outcome": "1"}))).await;
    assert_eq!((status, error_code(&v)), (StatusCode::UNPROCESSABLE_ENTITY, "zero_evidence"));
    let (status, v) = call(&app, "POST", &url, Some(json!({"placement": "A"}))).await;
    assert_eq!((status, error_code(&v)), (StatusCode::BAD_REQUEST, "invalid_request"));

    let (_, after) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(before, after);
}

#[tokio::test]
async fn terminated_sessions_refuse_outcomes() {
    let app = app();
    let id = create(&app, toy(1)).await;
    let url = format!("/sessions/{id}/outcomes");
    let (status, v) = call(&app, "POST", &url, Some(json!({"placement": "B", "outcome": "0"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["terminated"], true);
    let (_, p) = call(&app, "POST", &format!("/sessions/{id}/propose"), None).await;
    assert_eq!(p["recommended"], Value::Null);
    let (status, v) = call(&app, "POST", &url, Some(json!({"placement": "A", "outcome": "0"}))).await;
    assert_eq!((status, error_code(&v)), (StatusCode::CONFLICT, "session_terminated"));
    // undo reopens it
    let (status, v) = call(&app, "POST", &format!("/sessions/{id}/undo"), None).await;
    assert_eq!((status, v["terminated"].as_bool()), (StatusCode::OK, Some(false)));
}

#[tokio::test]
async fn unknown_things_are_not_found() {
    let app = app();
    let (status, v) = call(&app, "GET", "/sessions/nope", None).await;
    assert_eq!((status, error_code(&v)), (StatusCode::NOT_FOUND, "unknown_session"));
    let (status, v) = call(&app, "POST", "/sessions/nope/propose", None).await;
    assert_eq!((status, error_code(&v)), (StatusCode::NOT_FOUND, "unknown_session"));
    let (status, v) = call(&app, "GET", "/elsewhere", None).await;
    assert_eq!((status, error_code(&v)), (StatusCode::NOT_FOUND, "unknown_endpoint"));
}

#[tokio::test]
async fn bad_configs_are_rejected() {
    let app = app();
    let mut cfg = toy(5);
    cfg["prior"]["t1"] = json!("0.9");
    let (status, v) = call(&app, "POST", "/sessions", Some(json!({ "config": cfg }))).await;
    assert_eq!((status, error_code(&v)), (StatusCode::BAD_REQUEST, "invalid_config"));
    let mut cfg = toy(5);
    cfg["surprise"] = json!(1);
    let (status, v) = call(&app, "POST", "/sessions", Some(json!({ "config": cfg }))).await;
    assert_eq!((status, error_code(&v)), (StatusCode::BAD_REQUEST, "invalid_config"));
    let (status, v) = call(&app, "POST", "/sessions", Some(json!({ "cfg": toy(5) }))).await;
    assert_eq!((status, error_code(&v)), (StatusCode::BAD_REQUEST, "invalid_request"));
    let req = Request::builder()
        .method("POST")
        .uri("/sessions")
        .header("content-type", "application/json")
        .body(Body::from("{not json"))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn export_replays_to_the_same_state() {
    let app = app();
    let id = create(&app, toy(20)).await;
    let url = format!("/sessions/{id}/outcomes");
    for (p, o) in [("A", "1"), ("B", "0"), ("A", "0"), ("A", "1")] {
        call(&app, "POST", &url, Some(json!({"placement": p, "outcome": o}))).await;
    }
    call(&app, "POST", &format!("/sessions/{id}/undo"), None).await;
    let (_, state) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    let (status, export) = call(&app, "GET", &format!("/sessions/{id}/export"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(export["events"].as_array().unwrap().len(), 5);
    let record = serde_json::from_value(export).unwrap();
    let replayed = Session::replay(&record).unwrap();
    let view = serde_json::to_value(replayed.view().unwrap()).unwrap();
    assert_eq!(view, state);
}

#[test]
fn sessions_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let spec: ExperimentSpec = serde_json::from_value(toy(20)).unwrap();
    let (id, before) = {
        let store = SessionStore::open(dir.path()).unwrap();
        let id = store.create(spec).unwrap().session_id;
        store.record_outcome(&id, "A", "1").unwrap();
        store.record_outcome(&id, "B", "1").unwrap();
        store.undo(&id).unwrap();
        let before = store.record_outcome(&id, "A", "0").unwrap();
        (id, before)
    };
    let store = SessionStore::open(dir.path()).unwrap();
    assert_eq!(store.len(), 1);
    let after: StateView = store.with(&id, |s| s.view()).unwrap();
    assert_eq!(after.version, before.version);
    assert_eq!(after.trials, before.trials);
    for (a, b) in after.posterior.iter().zip(&before.posterior) {
        assert!((a.mass - b.mass).abs() <= REPLAY_TOL);
    }
    let record = read_record(&dir.path().join(format!("{id}.jsonl"))).unwrap();
    assert_eq!(record.events.len(), 4);
}

#[test]
fn concurrent_writers_serialize_per_session() {
    let store = Arc::new(SessionStore::in_memory());
    let spec: ExperimentSpec = serde_json::from_value(toy(1000)).unwrap();
    let id = store.create(spec).unwrap().session_id;
    let handles: Vec<_> = (0..8)
        .map(|k| {
            let (store, id) = (store.clone(), id.clone());
            std::thread::spawn(move || {
                for i in 0..10 {
                    let outcome = if (i + k) % 2 == 0 { "0" } else { "1" };
                    store.record_outcome(&id, "B", outcome).unwrap();
                }
            })
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    let view = store.with(&id, |s| s.view()).unwrap();
    assert_eq!((view.version, view.trials), (80, 80));
    // 40 zeros and 40 ones at B cancel exactly in the likelihood ratio
    assert!((view.posterior[0].mass - 0.5).abs() < 1e-9, "{:?}", view.posterior);
    let replayed = Session::replay(&store.with(&id, |s| Ok(s.record())).unwrap()).unwrap();
    assert_eq!(replayed.view().unwrap().version, 80);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Any accepted script, exported and replayed, reproduces every
    /// intermediate posterior.
    #[test]
    fn replay_is_deterministic(script in prop::collection::vec((0usize..3, 0usize..2, any::<bool>()), 0..25)) {
        let spec: ExperimentSpec = serde_json::from_value(toy(10)).unwrap();
        let mut s = Session::new("p", spec, 0).unwrap();
        for (k, (p, o, undo)) in script.into_iter().enumerate() {
            let _ = if undo {
                s.undo(k as u64).map(|_| ())
            } else {
                s.record_outcome(["A", "B", "C"][p], ["0", "1"][o], k as u64).map(|_| ())
            };
        }
        let record = s.record();
        let r = Session::replay(&record).unwrap();
        prop_assert_eq!(r.record(), record);
        let (a, b) = (r.view().unwrap(), s.view().unwrap());
        prop_assert_eq!(a.version, b.version);
        for (x, y) in a.posterior.iter().zip(&b.posterior) {
            prop_assert!((x.mass - y.mass).abs() <= REPLAY_TOL);
        }
    }
}

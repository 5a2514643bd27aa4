use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use phonoquery::server::{router, Created, ErrorBody};
use phonoquery::session::{replay_export, QueryView, SessionExport, SessionStore, StateSummary};
use phonoquery_core::WordForm;
use serde_json::{json, Value};
use tower::ServiceExt;

fn lexicon() -> Vec<WordForm> {
    ["katipe", "tepi", "qekati", "pitaka", "kapeti", "tikepa"].iter().map(|w| w.parse().unwrap()).collect()
}

fn app() -> Router {
    router(Arc::new(SessionStore::in_memory(lexicon())), None)
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn create(app: &Router, body: Value) -> String {
    let (status, v) = call(app, Method::POST, "/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    serde_json::from_value::<Created>(v).unwrap().id.to_string()
}

#[tokio::test]
async fn a_session_runs_query_judgment_state_and_export() {
    let app = app();
    let id = create(&app, json!({"policy": "label-entropy", "seed": 3, "hyperparams": {"steps": "one"}})).await;

    let (status, first) = call(&app, Method::GET, &format!("/sessions/{id}/query"), None).await;
    assert_eq!(status, StatusCode::OK);
    let first: QueryView = serde_json::from_value(first).unwrap();
    // Asking again without judging returns the same pending word.
    let (_, again) = call(&app, Method::GET, &format!("/sessions/{id}/query"), None).await;
    assert_eq!(serde_json::from_value::<QueryView>(again).unwrap(), first);

    let (status, summary) = call(&app, Method::POST, &format!("/sessions/{id}/judgment"), Some(json!({"accept": false}))).await;
    assert_eq!(status, StatusCode::OK);
    let summary: StateSummary = serde_json::from_value(summary).unwrap();
    assert_eq!(summary.step, 1);
    assert_eq!(summary.history[0].word, first.word);
    assert!(summary.pending.is_none());
    assert_eq!(summary.probes.len(), 8);

    for accept in [true, false, true] {
        call(&app, Method::GET, &format!("/sessions/{id}/query"), None).await;
        let (status, _) = call(&app, Method::POST, &format!("/sessions/{id}/judgment"), Some(json!({ "accept": accept }))).await;
        assert_eq!(status, StatusCode::OK);
    }
    let (_, state) = call(&app, Method::GET, &format!("/sessions/{id}/state"), None).await;
    let state: StateSummary = serde_json::from_value(state).unwrap();
    assert_eq!(state.step, 4);
    assert_eq!(state.history.len(), 4);

    let (status, export) = call(&app, Method::GET, &format!("/sessions/{id}/export"), None).await;
    assert_eq!(status, StatusCode::OK);
    let export: SessionExport = serde_json::from_value(export).unwrap();
    assert_eq!(export.observations.len(), 4);
    let replayed = replay_export(&export).unwrap();
    assert!(replayed.values().iter().zip(export.posterior.values()).all(|(a, b)| a.to_bits() == b.to_bits()));

    let (status, rebuilt) = call(&app, Method::POST, &format!("/sessions/{id}/rebuild"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(serde_json::from_value::<StateSummary>(rebuilt).unwrap().step, 4);

    let (status, _) = call(&app, Method::DELETE, &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (status, body) = call(&app, Method::GET, &format!("/sessions/{id}/state"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(serde_json::from_value::<ErrorBody>(body).unwrap().code, "not_found");
}

#[tokio::test]
async fn train_sessions_fall_back_to_synthesized_words_once_the_lexicon_runs_out() {
    let app = app();
    let id = create(&app, json!({"policy": "train", "seed": 0})).await;
    let mut seen = Vec::new();
    for _ in 0..lexicon().len() {
        let (status, q) = call(&app, Method::GET, &format!("/sessions/{id}/query"), None).await;
        assert_eq!(status, StatusCode::OK);
        let q: QueryView = serde_json::from_value(q).unwrap();
        assert!(lexicon().contains(&q.word));
        assert!(!seen.contains(&q.word));
        seen.push(q.word);
        call(&app, Method::POST, &format!("/sessions/{id}/judgment"), Some(json!({"accept": true}))).await;
    }
    let (status, body) = call(&app, Method::GET, &format!("/sessions/{id}/query"), None).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let q: QueryView = serde_json::from_value(body).unwrap();
    assert!(!lexicon().contains(&q.word));
}

#[tokio::test]
async fn error_paths_map_to_statuses() {
    let app = app();
    let id = create(&app, json!({"policy": "uniform", "seed": 1})).await;

    let (status, body) = call(&app, Method::POST, &format!("/sessions/{id}/judgment"), Some(json!({"accept": true}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["code"], "no_pending_query");

    let (status, _) = call(&app, Method::GET, "/sessions/not-a-uuid/query", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, Method::GET, "/sessions/00000000-0000-0000-0000-000000000000/state", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, body) = call(&app, Method::POST, "/sessions", Some(json!({"policy": "eig", "hyperparams": {"theta_prior": 1.5}}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["code"], "invalid_hyperparams");

    let (status, _) = call(&app, Method::POST, "/sessions", Some(json!({"policy": "nonsense"}))).await;
    assert!(status.is_client_error());
    let (status, _) = call(&app, Method::POST, "/sessions", Some(json!({"policy": "train", "colour": "blue"}))).await;
    assert!(status.is_client_error());

    let empty = router(Arc::new(SessionStore::in_memory(Vec::new())), None);
    let (status, body) = call(&empty, Method::POST, "/sessions", Some(json!({"policy": "eig-mixed"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["code"], "lexicon_required");

    let (status, body) = call(&app, Method::GET, "/nowhere", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "not_found");
}

#[tokio::test]
async fn persisted_sessions_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let first = router(Arc::new(SessionStore::open(dir.path(), lexicon()).unwrap()), None);
    let id = create(&first, json!({"policy": "eig-model", "seed": 9, "hyperparams": {"k": 8, "steps": "one"}})).await;
    call(&first, Method::GET, &format!("/sessions/{id}/query"), None).await;
    call(&first, Method::POST, &format!("/sessions/{id}/judgment"), Some(json!({"accept": true}))).await;
    let (_, pending) = call(&first, Method::GET, &format!("/sessions/{id}/query"), None).await;
    let (_, before) = call(&first, Method::GET, &format!("/sessions/{id}/export"), None).await;
    drop(first);

    let second = router(Arc::new(SessionStore::open(dir.path(), lexicon()).unwrap()), None);
    let (_, after) = call(&second, Method::GET, &format!("/sessions/{id}/export"), None).await;
    assert_eq!(before, after);
    let (_, resumed) = call(&second, Method::GET, &format!("/sessions/{id}/query"), None).await;
    assert_eq!(pending, resumed);
}

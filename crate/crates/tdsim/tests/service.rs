mod common;

use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tdsim::service::{router, AppState};
use tower::ServiceExt;

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, String) {
    let builder = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => builder
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => builder.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn call_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, text) = call(app, method, uri, body).await;
    (status, serde_json::from_str(&text).unwrap_or(Value::Null))
}

fn fit_request(iters: usize, stall: usize) -> Value {
    let project = common::coarse_project();
    json!({
        "project": project,
        "data": { "text": common::synthetic_data(&project) },
        "options": { "seed": 3, "max_iterations": iters, "population": 4, "stall_window": stall }
    })
}

async fn submit(app: &Router, body: Value) -> u64 {
    let (status, v) = call_json(app, "POST", "/fit", Some(body)).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{v}");
    v["id"].as_u64().unwrap()
}

async fn wait_for(app: &Router, id: u64, done: impl Fn(&str) -> bool) -> Value {
    let start = Instant::now();
    loop {
        let (status, v) = call_json(app, "GET", &format!("/fit/{id}"), None).await;
        assert_eq!(status, StatusCode::OK);
        if done(v["status"].as_str().unwrap()) {
            return v;
        }
        assert!(start.elapsed() < Duration::from_secs(120), "job {id} stuck: {}", v["status"]);
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
}

/// (event name, data) pairs of an SSE body.
fn sse_events(body: &str) -> Vec<(String, Value)> {
    let mut out = Vec::new();
    let mut name = String::new();
    for line in body.lines() {
        if let Some(n) = line.strip_prefix("event: ") {
            name = n.to_string();
        } else if let Some(d) = line.strip_prefix("data: ") {
            out.push((name.clone(), serde_json::from_str(d).unwrap()));
        }
    }
    out
}

#[tokio::test(flavor = "multi_thread")]
async fn health_reports_ok() {
    let app = router(AppState::start());
    let (status, v) = call_json(&app, "GET", "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["status"], "ok");
}

#[tokio::test(flavor = "multi_thread")]
async fn simulate_returns_spectra() {
    let app = router(AppState::start());
    let mut project = common::coarse_project();
    project.models = vec![tdsim_core::result::ModelKind::Lattice, tdsim_core::result::ModelKind::Oriani];
    let (status, v) = call_json(&app, "POST", "/simulate", Some(json!(project))).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let spectra = v["spectra"].as_array().unwrap();
    assert_eq!(spectra.len(), 2);
    assert_eq!(spectra[0]["model"], "lattice");
    assert!(spectra[0]["mass_balance_residual"].is_null());
    assert_eq!(spectra[1]["model"], "oriani");
    assert_eq!(spectra[1]["spectrum"]["total"].as_array().unwrap().len(), 60);
    assert_eq!(spectra[1]["spectrum"]["trapped"].as_array().unwrap().len(), 2);
    assert!(spectra[1]["mass_balance_residual"].as_f64().unwrap() < 0.05);
}

#[tokio::test(flavor = "multi_thread")]
async fn simulate_rejects_invalid_project() {
    let app = router(AppState::start());
    let mut project = common::coarse_project();
    project.protocol.end_temperature = 100.0;
    let (status, v) = call_json(&app, "POST", "/simulate", Some(json!(project))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(v["error"].as_str().unwrap().contains("end temperature"));

    let (status, _) = call(&app, "POST", "/simulate", Some(json!({ "schema_version": 1 }))).await;
    assert!(status.is_client_error());
}

#[tokio::test(flavor = "multi_thread")]
async fn fit_runs_to_completion() {
    let app = router(AppState::start());
    let id = submit(&app, fit_request(2, 20)).await;
    let v = wait_for(&app, id, |s| s != "queued" && s != "running").await;
    assert_eq!(v["status"], "done", "{v}");
    let trace = v["trace"].as_array().unwrap();
    assert_eq!(trace.len(), 3);
    for (k, rec) in trace.iter().enumerate() {
        assert_eq!(rec["iteration"].as_u64().unwrap(), k as u64);
        assert_eq!(rec["best_traps"].as_array().unwrap().len(), 2);
    }
    let result = &v["result"];
    assert_eq!(result["traps"].as_array().unwrap().len(), 2);
    assert_eq!(result["objective"], trace[2]["best"]);

    // a finished job replays its history and closes with the final status
    let (status, body) = call(&app, "GET", &format!("/fit/{id}/events"), None).await;
    assert_eq!(status, StatusCode::OK);
    let events = sse_events(&body);
    assert_eq!(events.len(), 4);
    assert!(events[..3].iter().all(|(n, _)| n == "progress"));
    assert_eq!(events[3], ("status".to_string(), json!({ "status": "done" })));
}

#[tokio::test(flavor = "multi_thread")]
async fn fit_without_data_is_rejected() {
    let app = router(AppState::start());
    let body = json!({ "project": common::coarse_project() });
    let (status, v) = call_json(&app, "POST", "/fit", Some(body)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(v["error"].as_str().unwrap().contains("experimental"));
}

#[tokio::test(flavor = "multi_thread")]
async fn unknown_jobs_are_not_found() {
    let app = router(AppState::start());
    assert_eq!(call(&app, "GET", "/fit/99", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "DELETE", "/fit/99", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "GET", "/fit/99/events", None).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread")]
async fn fits_queue_and_cancel() {
    let app = router(AppState::start());
    let first = submit(&app, fit_request(100_000, 100_000)).await;
    let second = submit(&app, fit_request(2, 20)).await;
    wait_for(&app, first, |s| s == "running").await;

    // one fit at a time: the second waits, and cancelling it is immediate
    let (_, v) = call_json(&app, "GET", &format!("/fit/{second}"), None).await;
    assert_eq!(v["status"], "queued");
    let (status, v) = call_json(&app, "DELETE", &format!("/fit/{second}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["status"], "cancelled");
    assert!(v["trace"].as_array().unwrap().is_empty());

    // the running fit stops at the next iteration boundary, keeping its best so far
    let events = tokio::spawn({
        let app = app.clone();
        async move { call(&app, "GET", &format!("/fit/{first}/events"), None).await.1 }
    });
    tokio::time::sleep(Duration::from_millis(200)).await;
    let (status, _) = call_json(&app, "DELETE", &format!("/fit/{first}"), None).await;
    assert_eq!(status, StatusCode::OK);
    let v = wait_for(&app, first, |s| s == "cancelled").await;
    assert_eq!(v["result"]["termination"], "cancelled");
    let n = v["trace"].as_array().unwrap().len();
    assert!(n >= 1 && n < 100_000);

    let events = sse_events(&events.await.unwrap());
    let (last, progress) = events.split_last().unwrap();
    assert_eq!(last.1, json!({ "status": "cancelled" }));
    let iterations: Vec<u64> = progress.iter().map(|(_, d)| d["iteration"].as_u64().unwrap()).collect();
    assert_eq!(iterations, (0..n as u64).collect::<Vec<_>>());

    // the queue moves on after a cancellation
    let third = submit(&app, fit_request(1, 20)).await;
    let v = wait_for(&app, third, |s| s == "done" || s == "failed").await;
    assert_eq!(v["status"], "done");
}

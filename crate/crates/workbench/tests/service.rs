mod common;

use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use polimarket::par::Execution;
use polimarket_workbench::service::{router, AppState};
use polimarket_workbench::PipelineConfig;
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

struct Harness {
    _dir: TempDir,
    cfg: PipelineConfig,
    app: Router,
    token: Option<String>,
}

impl Harness {
    fn new(tweak: impl FnOnce(&mut PipelineConfig)) -> Harness {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = common::config(dir.path());
        tweak(&mut cfg);
        common::prepare_service(&cfg);
        let app = router(open(&cfg));
        let token = cfg.service.token.clone();
        Harness {
            _dir: dir,
            cfg,
            app,
            token,
        }
    }

    fn reopen(&mut self) {
        self.app = router(open(&self.cfg));
    }

    async fn call(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(t) = &self.token {
            req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
        }
        let req = match body {
            Some(b) => req
                .header(header::CONTENT_TYPE, "application/json")
                .body(Body::from(b.to_string())),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let value = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap_or(Value::String(String::from_utf8_lossy(&bytes).into()))
        };
        (status, value)
    }

    async fn get(&self, uri: &str) -> Value {
        let (s, v) = self.call(Method::GET, uri, None).await;
        assert_eq!(s, StatusCode::OK, "{uri}: {v}");
        v
    }

    async fn verdict(&self, body: Value) -> (StatusCode, Value) {
        self.call(Method::POST, "/api/verdicts", Some(body)).await
    }

    /// Products without a seed label, most confident first.
    async fn unlabeled(&self, n: usize) -> Vec<String> {
        let mut out = Vec::new();
        for stratum in ["conservative", "liberal", "ambiguous"] {
            let v = self.get(&format!("/api/candidates?stratum={stratum}&limit=50")).await;
            for it in v["items"].as_array().unwrap() {
                let node = it["node"].as_str().unwrap().to_string();
                if it["provenance"].is_null() && !out.contains(&node) {
                    out.push(node);
                }
            }
        }
        assert!(out.len() >= n, "only {} unlabeled candidates", out.len());
        out.truncate(n);
        out
    }

    async fn wait_idle(&self) -> Value {
        for _ in 0..300 {
            let s = self.get("/api/status").await;
            if s["state"] == "idle" {
                return s;
            }
            tokio::time::sleep(Duration::from_millis(50)).await;
        }
        panic!("retrain did not finish");
    }
}

fn open(cfg: &PipelineConfig) -> Arc<AppState> {
    AppState::open(cfg, Execution::Parallel).unwrap()
}

fn labels(status: &Value) -> (u64, u64, u64) {
    let l = &status["labels"];
    (
        l["conservative"].as_u64().unwrap(),
        l["liberal"].as_u64().unwrap(),
        l["nonpolitical"].as_u64().unwrap(),
    )
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn three_verdicts_and_a_retrain_add_three_labels() {
    let h = Harness::new(|_| {});
    let session = h.get("/api/session").await;
    assert_eq!(session["iteration"], 0);
    let before = h.get("/api/status").await;
    assert_eq!(labels(&before), (8, 8, 0));

    let nodes = h.unlabeled(3).await;
    for (i, (node, class)) in nodes
        .iter()
        .zip(["conservative", "liberal", "nonpolitical"])
        .enumerate()
    {
        let (s, v) = h
            .verdict(json!({ "node": node, "class": class, "verdict_id": format!("v{i}"), "model_version": 0 }))
            .await;
        assert_eq!(s, StatusCode::OK, "{v}");
        assert_eq!(v["status"], "applied");
    }
    assert_eq!(h.get("/api/status").await["pending_verdicts"], 3);

    let (s, v) = h.call(Method::POST, "/api/retrain?wait=true", None).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let after = h.get("/api/status").await;
    assert_eq!(after["iteration"], 1);
    assert_eq!(after["model_version"], 1);
    assert_eq!(after["pending_verdicts"], 0);
    assert_eq!(labels(&after), (9, 9, 1));
    assert_eq!(h.get("/api/session").await["classes"], 3);
    assert_eq!(after["yields"].as_array().unwrap().len(), 1);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn verdicts_are_idempotent_and_checked() {
    let h = Harness::new(|_| {});
    let node = h.unlabeled(1).await.remove(0);
    let body = json!({ "node": node, "class": "liberal", "verdict_id": "same" });
    assert_eq!(h.verdict(body.clone()).await.1["status"], "applied");
    let (s, v) = h.verdict(body).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "already-applied");
    assert_eq!(v["pending"], 1);
    assert_eq!(h.get("/api/audit").await["entries"].as_array().unwrap().len(), 1);

    let (s, v) = h
        .verdict(json!({ "node": node, "class": "liberal", "verdict_id": "old", "model_version": 7 }))
        .await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"], "stale-model");
    assert_eq!(v["current_version"], 0);

    let (s, v) = h
        .verdict(json!({ "node": "B0NOTTHERE", "class": "liberal", "verdict_id": "x" }))
        .await;
    assert_eq!((s, v["error"].as_str()), (StatusCode::NOT_FOUND, Some("unknown-node")));

    let (s, _) = h
        .verdict(json!({ "node": node, "class": "liberal", "verdict_id": " " }))
        .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);

    // B000000001 is a conservative seed.
    let (s, v) = h
        .verdict(json!({ "node": "B000000001", "class": "liberal", "verdict_id": "flip" }))
        .await;
    assert_eq!(
        (s, v["error"].as_str()),
        (StatusCode::UNPROCESSABLE_ENTITY, Some("precedence"))
    );
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn writes_are_refused_while_retraining() {
    let h = Harness::new(|_| {});
    let node = h.unlabeled(1).await.remove(0);
    let (s, v) = h.call(Method::POST, "/api/retrain", None).await;
    assert_eq!(s, StatusCode::ACCEPTED, "{v}");
    assert_eq!(v["iteration"], 1);

    let (s, v) = h.call(Method::POST, "/api/retrain", None).await;
    assert_eq!(
        (s, v["error"].as_str()),
        (StatusCode::SERVICE_UNAVAILABLE, Some("busy"))
    );
    let status = h.get("/api/status").await;
    if status["state"] == "retraining" {
        let (s, _) = h
            .verdict(json!({ "node": node, "class": "liberal", "verdict_id": "late" }))
            .await;
        assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);
    }
    let done = h.wait_idle().await;
    assert_eq!(done["iteration"], 1);
    let (s, _) = h
        .verdict(json!({ "node": node, "class": "liberal", "verdict_id": "late2" }))
        .await;
    assert_eq!(s, StatusCode::OK);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn session_survives_a_restart() {
    let mut h = Harness::new(|_| {});
    let nodes = h.unlabeled(3).await;
    h.verdict(json!({ "node": nodes[0], "class": "conservative", "verdict_id": "a" }))
        .await;
    h.verdict(json!({ "node": nodes[1], "class": "nonpolitical", "verdict_id": "b" }))
        .await;
    let (s, _) = h.call(Method::POST, "/api/retrain?wait=true", None).await;
    assert_eq!(s, StatusCode::OK);
    h.verdict(json!({ "node": nodes[2], "class": "liberal", "verdict_id": "c" }))
        .await;
    let status = h.get("/api/status").await;
    let curves = h.get("/api/curves").await;
    let audit = h.get("/api/audit").await;
    let session = h.get("/api/session").await;

    h.reopen();
    let again = h.get("/api/status").await;
    for key in [
        "iteration",
        "model_version",
        "labels",
        "pending_verdicts",
        "yields",
        "last_report",
    ] {
        assert_eq!(again[key], status[key], "{key}");
    }
    assert_eq!(h.get("/api/curves").await, curves);
    assert_eq!(h.get("/api/audit").await, audit);
    assert_eq!(h.get("/api/session").await["session_id"], session["session_id"]);
    let (_, v) = h
        .verdict(json!({ "node": nodes[0], "class": "conservative", "verdict_id": "a" }))
        .await;
    assert_eq!(v["status"], "already-applied");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn bearer_token_is_required_when_configured() {
    let mut h = Harness::new(|c| c.service.token = Some("s3cret".into()));
    assert_eq!(h.get("/api/session").await["iteration"], 0);
    h.token = None;
    let (s, v) = h.call(Method::GET, "/api/session", None).await;
    assert_eq!(
        (s, v["error"].as_str()),
        (StatusCode::UNAUTHORIZED, Some("unauthorized"))
    );
    h.token = Some("wrong".into());
    assert_eq!(
        h.call(Method::GET, "/api/status", None).await.0,
        StatusCode::UNAUTHORIZED
    );
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn agreement_needs_matching_operators() {
    let h = Harness::new(|c| c.service.agreement = 2);
    let node = h.unlabeled(1).await.remove(0);
    let (s, _) = h
        .verdict(json!({ "node": node, "class": "liberal", "verdict_id": "anon" }))
        .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let vote =
        |id: &str, op: &str, class: &str| json!({ "node": node, "class": class, "verdict_id": id, "operator": op });
    assert_eq!(
        h.verdict(vote("1", "ana", "liberal")).await.1["status"],
        "awaiting-agreement"
    );
    assert_eq!(
        h.verdict(vote("2", "bo", "conservative")).await.1["status"],
        "awaiting-agreement"
    );
    assert_eq!(h.verdict(vote("3", "cy", "liberal")).await.1["status"], "applied");
    let (s, _) = h.call(Method::POST, "/api/retrain?wait=true", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(labels(&h.get("/api/status").await), (8, 9, 0));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn curves_are_non_increasing_per_iteration() {
    let h = Harness::new(|_| {});
    let node = h.unlabeled(1).await.remove(0);
    h.verdict(json!({ "node": node, "class": "nonpolitical", "verdict_id": "n" }))
        .await;
    h.call(Method::POST, "/api/retrain?wait=true", None).await;
    let curves = h.get("/api/curves").await;
    assert_eq!(curves["threshold"], h.cfg.accept_threshold);
    let iterations = curves["iterations"].as_array().unwrap();
    assert_eq!(iterations.len(), 2);
    for (i, it) in iterations.iter().enumerate() {
        assert_eq!(it["iteration"], i);
        let fractions: Vec<f64> = it["points"]
            .as_array()
            .unwrap()
            .iter()
            .map(|p| p["accepted_fraction"].as_f64().unwrap())
            .collect();
        assert_eq!(fractions.len(), 51);
        assert!(fractions.windows(2).all(|w| w[0] >= w[1]), "{fractions:?}");
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn segment_metrics_by_name() {
    let h = Harness::new(|_| {});
    let v = h.get("/api/metrics/books").await;
    assert_eq!(v["model_version"], 0);
    let r = &v["report"];
    assert_eq!(r["segment"], "Books");
    let rel = r["relevance"].as_f64().unwrap();
    assert!(rel > 0.0 && rel < 1.0);
    assert_eq!(h.get("/api/metrics/Culture").await["report"]["segment"], "Culture");
    assert_eq!(h.get("/api/metrics/books").await, v);
    let (s, _) = h.call(Method::GET, "/api/metrics/nowhere", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn static_fallback_without_bundle() {
    let h = Harness::new(|_| {});
    let (s, _) = h.call(Method::GET, "/index.html", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

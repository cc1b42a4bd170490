//! HTTP labeling service.
//!
//! All session mutations go through one async mutex, so verdicts and
//! retrain transitions are applied in a single order. Every acknowledged
//! verdict is appended and synced to `session/wal.jsonl` before the
//! response is sent; on boot the log is replayed over the pipeline's
//! trained model, together with the per-version model and label files
//! written at each retrain.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use axum::extract::{Path as UrlPath, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use polimarket::hetgraph::{LabelMerge, LabelStore, PoliticalClass, PoliticalLabel, Provenance};
use polimarket::par::Execution;
use polimarket::polmetrics::{segment_report, CategoryLevel, PoliticalColors, PoliticsReport};
use polimarket::rgcn::{
    accept_labels, candidates, hitl_iterate, load_checkpoint, predict_products, save_checkpoint, threshold_curve,
    ClassScore, IterationReport, RelationalView, RgcnConfig, RgcnModel, Verdict,
};
use polimarket::HeteroGraph;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Mutex;

use crate::config::ServiceSettings;
use crate::pipeline::{self, level_totals, metrics_config, threshold_grid, Workdir};
use crate::PipelineConfig;

const DEFAULT_OPERATOR: &str = "operator";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratum {
    Conservative,
    Liberal,
    Ambiguous,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerdictRequest {
    pub node: String,
    pub class: PoliticalClass,
    pub verdict_id: String,
    #[serde(default)]
    pub model_version: Option<u64>,
    #[serde(default)]
    pub operator: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum WalEvent {
    Verdict {
        seq: u64,
        at: u64,
        verdict_id: String,
        node: String,
        class: PoliticalClass,
        operator: String,
        model_version: u64,
    },
    Retrained {
        seq: u64,
        at: u64,
        iteration: u32,
        model_version: u64,
        consumed_through: u64,
        shown: usize,
        report: Value,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditEntry {
    pub seq: u64,
    pub at: u64,
    pub who: String,
    pub what: String,
    pub node: Option<String>,
    pub class: Option<PoliticalClass>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationYield {
    pub iteration: u32,
    pub candidates_shown: usize,
    pub labels_accepted: usize,
    pub yield_rate: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub accepted_fraction: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Curve {
    pub iteration: u32,
    pub model_version: u64,
    pub points: Vec<CurvePoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CandidateCard {
    pub node: String,
    pub title: Option<String>,
    pub category: Vec<String>,
    pub probabilities: BTreeMap<String, f64>,
    pub stratum: Stratum,
    pub provenance: Option<Provenance>,
    pub entropy: f64,
}

struct Pending {
    seq: u64,
    node: String,
    /// Vote per operator.
    votes: BTreeMap<String, PoliticalClass>,
}

/// Mutable session state; guarded by [`AppState::session`].
struct Session {
    id: String,
    iteration: u32,
    model_version: u64,
    labels: LabelStore,
    model: RgcnModel,
    scores: Vec<ClassScore>,
    pending: BTreeMap<String, Pending>,
    seen_ids: HashMap<String, &'static str>,
    shown: BTreeSet<String>,
    audit: Vec<AuditEntry>,
    yields: Vec<IterationYield>,
    curves: Vec<Curve>,
    last_report: Option<Value>,
    last_error: Option<String>,
    retraining: bool,
    next_seq: u64,
    wal: File,
    metrics_cache: HashMap<(String, u64), PoliticsReport>,
}

/// Immutable service context.
pub struct AppState {
    graph: HeteroGraph,
    view: Arc<RelationalView>,
    base_config: RgcnConfig,
    settings: ServiceSettings,
    pipeline: PipelineConfig,
    threshold: f64,
    dir: PathBuf,
    exec: Execution,
    session: Mutex<Session>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn curve_for(scores: &[ClassScore], iteration: u32, model_version: u64) -> Curve {
    let points = threshold_curve(scores, &threshold_grid())
        .unwrap_or_default()
        .into_iter()
        .map(|(threshold, accepted_fraction)| CurvePoint {
            threshold,
            accepted_fraction,
        })
        .collect();
    Curve {
        iteration,
        model_version,
        points,
    }
}

fn human_and_seed(labels: &LabelStore) -> LabelStore {
    let mut out = labels.clone();
    out.remove_model_labels();
    out
}

fn append(wal: &mut File, event: &WalEvent) -> std::io::Result<()> {
    let mut line = serde_json::to_vec(event).expect("event serializes");
    line.push(b'\n');
    wal.write_all(&line)?;
    wal.sync_data()
}

impl AppState {
    /// Loads the pipeline's labeled graph and model, then replays the
    /// session log in `workdir/session`.
    pub fn open(cfg: &PipelineConfig, exec: Execution) -> Result<Arc<AppState>> {
        let wd = Workdir::create(cfg)?;
        let (graph, labels) = snapshot(&wd)?;
        let model = load_checkpoint(&wd.input(pipeline::MODEL, "train")?)?;
        let view = RelationalView::from_graph(&graph, cfg.model.max_wave);
        let dir = wd.path("session");
        fs::create_dir_all(&dir)?;
        let id_path = dir.join("session_id");
        let id = match fs::read_to_string(&id_path) {
            Ok(s) => s.trim().to_string(),
            Err(_) => {
                let nanos = SystemTime::now().duration_since(UNIX_EPOCH)?.as_nanos();
                let id = format!("s{nanos:x}");
                fs::write(&id_path, &id)?;
                id
            }
        };
        let scores = predict_products(&model, &view, exec)?;
        let wal_path = dir.join("wal.jsonl");
        let events = read_wal(&wal_path)?;
        let wal = OpenOptions::new().create(true).append(true).open(&wal_path)?;
        let session = Session {
            id,
            iteration: 0,
            model_version: 0,
            labels: human_and_seed(&labels),
            curves: vec![curve_for(&scores, 0, 0)],
            model,
            scores,
            pending: BTreeMap::new(),
            seen_ids: HashMap::new(),
            shown: BTreeSet::new(),
            audit: Vec::new(),
            yields: Vec::new(),
            last_report: None,
            last_error: None,
            retraining: false,
            next_seq: 1,
            wal,
            metrics_cache: HashMap::new(),
        };
        let session = replay(session, events, &dir, &view, exec)?;
        let state = AppState {
            graph,
            view: Arc::new(view),
            base_config: RgcnConfig {
                seed: cfg.seed,
                ..cfg.model.rgcn.clone()
            },
            settings: cfg.service.clone(),
            pipeline: cfg.clone(),
            threshold: cfg.accept_threshold,
            dir,
            exec,
            session: Mutex::new(session),
        };
        Ok(Arc::new(state))
    }

    fn version_file(&self, stem: &str, version: u64, ext: &str) -> PathBuf {
        self.dir.join(format!("{stem}_v{version}.{ext}"))
    }
}

fn snapshot(wd: &Workdir) -> Result<(HeteroGraph, LabelStore)> {
    let p = wd.input(pipeline::LABELED, "classify")?;
    polimarket::hetgraph::snapshot_load(&p).with_context(|| format!("loading {}", p.display()))
}

fn read_wal(path: &Path) -> Result<Vec<WalEvent>> {
    let Ok(f) = File::open(path) else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(e) => out.push(e),
            // A torn final line from a crash mid-append was never acknowledged.
            Err(_) => log::warn!("ignoring unreadable WAL line {}", i + 1),
        }
    }
    Ok(out)
}

/// Rebuilds the session from the log. Retrain events restore the model and
/// labels saved for that version.
fn replay(
    mut out: Session,
    events: Vec<WalEvent>,
    dir: &Path,
    view: &RelationalView,
    exec: Execution,
) -> Result<Session> {
    for e in events {
        match e {
            WalEvent::Verdict {
                seq,
                at,
                verdict_id,
                node,
                class,
                operator,
                ..
            } => {
                out.next_seq = seq + 1;
                out.seen_ids.insert(verdict_id, "already-applied");
                out.pending
                    .entry(node.clone())
                    .or_insert_with(|| Pending {
                        seq,
                        node: node.clone(),
                        votes: BTreeMap::new(),
                    })
                    .votes
                    .insert(operator.clone(), class);
                out.audit.push(AuditEntry {
                    seq,
                    at,
                    who: operator,
                    what: "verdict".into(),
                    node: Some(node),
                    class: Some(class),
                });
            }
            WalEvent::Retrained {
                seq,
                at,
                iteration,
                model_version,
                consumed_through,
                shown,
                report,
            } => {
                out.next_seq = seq + 1;
                let model = load_checkpoint(&dir.join(format!("model_v{model_version}.ckpt")))?;
                let labels = LabelStore::read_csv(File::open(dir.join(format!("labels_v{model_version}.csv")))?)
                    .map_err(anyhow::Error::msg)?;
                let accepted = report["verdicts_applied"].as_u64().unwrap_or(0) as usize;
                out.pending.retain(|_, p| p.seq > consumed_through);
                out.finish_retrain(
                    view,
                    model,
                    labels,
                    iteration,
                    model_version,
                    shown,
                    accepted,
                    report,
                    exec,
                )?;
                out.audit.push(AuditEntry {
                    seq,
                    at,
                    who: "system".into(),
                    what: format!("retrained to iteration {iteration}"),
                    node: None,
                    class: None,
                });
            }
        }
    }
    Ok(out)
}

impl Session {
    #[allow(clippy::too_many_arguments)]
    fn finish_retrain(
        &mut self,
        view: &RelationalView,
        model: RgcnModel,
        labels: LabelStore,
        iteration: u32,
        model_version: u64,
        shown: usize,
        accepted: usize,
        report: Value,
        exec: Execution,
    ) -> Result<()> {
        let view_scores = predict_products(&model, view, exec)?;
        self.yields.push(IterationYield {
            iteration: self.iteration,
            candidates_shown: shown,
            labels_accepted: accepted,
            yield_rate: (shown > 0).then(|| accepted as f64 / shown as f64),
        });
        self.iteration = iteration;
        self.model_version = model_version;
        self.labels = labels;
        self.model = model;
        self.curves.push(curve_for(&view_scores, iteration, model_version));
        self.scores = view_scores;
        self.shown.clear();
        self.last_report = Some(report);
        self.last_error = None;
        self.metrics_cache.clear();
        Ok(())
    }

    fn class_counts(&self) -> BTreeMap<String, usize> {
        let mut out: BTreeMap<String, usize> = PoliticalClass::ALL
            .iter()
            .map(|c| (c.as_str().to_string(), 0))
            .collect();
        for (c, n) in self.labels.class_counts() {
            out.insert(c.as_str().to_string(), n);
        }
        out
    }

    /// Verdicts ready for the next retrain under the agreement rule.
    fn agreed(&self, agreement: usize) -> (Vec<Verdict>, u64) {
        let mut out = Vec::new();
        let mut through = 0;
        for p in self.pending.values() {
            let mut tally: BTreeMap<PoliticalClass, usize> = BTreeMap::new();
            for c in p.votes.values() {
                *tally.entry(*c).or_insert(0) += 1;
            }
            if let Some((&class, _)) = tally.iter().find(|(_, &n)| n >= agreement) {
                out.push(Verdict {
                    asin: p.node.clone(),
                    class,
                });
                through = through.max(p.seq);
            }
        }
        (out, through)
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    extra: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            extra: Value::Null,
        }
    }

    fn with(mut self, extra: Value) -> Self {
        self.extra = extra;
        self
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.code, "message": self.message });
        if let Value::Object(m) = self.extra {
            body.as_object_mut().unwrap().extend(m);
        }
        let mut resp = (self.status, Json(body)).into_response();
        if self.status == StatusCode::SERVICE_UNAVAILABLE {
            resp.headers_mut()
                .insert(header::RETRY_AFTER, header::HeaderValue::from_static("2"));
        }
        resp
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn busy() -> ApiError {
    ApiError::new(
        StatusCode::SERVICE_UNAVAILABLE,
        "busy",
        "retraining in progress; the session is read-only until it completes",
    )
}

async fn session_info(State(st): State<Arc<AppState>>) -> ApiResult<Value> {
    let s = st.session.lock().await;
    Ok(Json(json!({
        "session_id": s.id,
        "iteration": s.iteration,
        "model_version": s.model_version,
        "retraining": s.retraining,
        "classes": s.model.config.classes,
        "threshold": st.threshold,
        "batch_size": st.settings.batch_size,
        "agreement": st.settings.agreement,
        "strata": ["conservative", "liberal", "ambiguous"],
    })))
}

#[derive(Debug, Deserialize)]
struct CandidateQuery {
    stratum: Stratum,
    limit: Option<usize>,
}

async fn candidate_list(State(st): State<Arc<AppState>>, Query(q): Query<CandidateQuery>) -> ApiResult<Value> {
    let mut s = st.session.lock().await;
    let limit = q.limit.unwrap_or(st.settings.batch_size);
    let pool = candidates(&s.scores, limit + s.pending.len(), &s.labels);
    let list = match q.stratum {
        Stratum::Conservative => pool.conservative,
        Stratum::Liberal => pool.liberal,
        Stratum::Ambiguous => pool.ambiguous,
    };
    let items: Vec<CandidateCard> = list
        .into_iter()
        .filter(|c| !s.pending.contains_key(&c.key))
        .take(limit)
        .map(|c| card(&st.graph, &s.labels, &c, q.stratum))
        .collect();
    for it in &items {
        s.shown.insert(it.node.clone());
    }
    Ok(Json(json!({
        "model_version": s.model_version,
        "iteration": s.iteration,
        "stratum": q.stratum,
        "items": items,
    })))
}

fn card(g: &HeteroGraph, labels: &LabelStore, c: &ClassScore, stratum: Stratum) -> CandidateCard {
    let node = g.node(c.node);
    let mut category: Vec<String> = node.attrs.big_category.iter().cloned().collect();
    category.extend(node.attrs.main_category.iter().cloned());
    CandidateCard {
        node: c.key.clone(),
        title: node.attrs.name.clone(),
        category,
        probabilities: PoliticalClass::ALL
            .iter()
            .take(c.probs.len())
            .map(|cl| (cl.as_str().to_string(), c.prob(*cl)))
            .collect(),
        stratum,
        provenance: labels.get(&c.key).map(|l| l.provenance),
        entropy: c.entropy(),
    }
}

async fn post_verdict(State(st): State<Arc<AppState>>, Json(v): Json<VerdictRequest>) -> ApiResult<Value> {
    let mut s = st.session.lock().await;
    if let Some(status) = s.seen_ids.get(&v.verdict_id) {
        return Ok(Json(
            json!({ "status": status, "verdict_id": v.verdict_id, "pending": s.pending.len() }),
        ));
    }
    if s.retraining {
        return Err(busy());
    }
    if let Some(mv) = v.model_version {
        if mv != s.model_version {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "stale-model",
                "the model changed since this candidate was served; refresh the queue",
            )
            .with(json!({ "current_version": s.model_version })));
        }
    }
    if v.verdict_id.trim().is_empty() {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid",
            "verdict_id is required",
        ));
    }
    if st.view.product(&v.node).is_none() {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            "unknown-node",
            format!("no product {:?}", v.node),
        ));
    }
    let mut probe = s.labels.clone();
    if let LabelMerge::Rejected(p) = probe.offer(PoliticalLabel::human(&v.node, v.class, s.iteration)) {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "precedence",
            format!("{} carries a {} label", v.node, p.as_str()),
        ));
    }
    let operator = v.operator.clone().unwrap_or_else(|| DEFAULT_OPERATOR.to_string());
    if st.settings.agreement > 1 && v.operator.is_none() {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid",
            "operator is required when agreement is above 1",
        ));
    }
    let seq = s.next_seq;
    let at = now();
    let event = WalEvent::Verdict {
        seq,
        at,
        verdict_id: v.verdict_id.clone(),
        node: v.node.clone(),
        class: v.class,
        operator: operator.clone(),
        model_version: s.model_version,
    };
    append(&mut s.wal, &event).map_err(ApiError::internal)?;
    s.next_seq += 1;
    s.seen_ids.insert(v.verdict_id.clone(), "already-applied");
    s.pending
        .entry(v.node.clone())
        .or_insert_with(|| Pending {
            seq,
            node: v.node.clone(),
            votes: BTreeMap::new(),
        })
        .votes
        .insert(operator.clone(), v.class);
    s.audit.push(AuditEntry {
        seq,
        at,
        who: operator,
        what: "verdict".into(),
        node: Some(v.node.clone()),
        class: Some(v.class),
    });
    let (agreed, _) = s.agreed(st.settings.agreement);
    let status = if agreed.iter().any(|a| a.asin == v.node) {
        "applied"
    } else {
        "awaiting-agreement"
    };
    Ok(Json(
        json!({ "status": status, "verdict_id": v.verdict_id, "pending": s.pending.len() }),
    ))
}

#[derive(Debug, Deserialize)]
struct RetrainQuery {
    #[serde(default)]
    wait: bool,
}

async fn post_retrain(State(st): State<Arc<AppState>>, Query(q): Query<RetrainQuery>) -> Result<Response, ApiError> {
    let (labels, verdicts, through, iteration, previous) = {
        let mut s = st.session.lock().await;
        if s.retraining {
            return Err(busy());
        }
        s.retraining = true;
        let (verdicts, through) = s.agreed(st.settings.agreement);
        (s.labels.clone(), verdicts, through, s.iteration + 1, s.scores.clone())
    };
    let task = {
        let st = st.clone();
        tokio::task::spawn_blocking(move || retrain(&st, &labels, &verdicts, through, iteration, &previous))
    };
    if q.wait {
        let res = task.await.map_err(ApiError::internal)?;
        return match res {
            Ok(report) => {
                Ok((StatusCode::OK, Json(json!({ "status": "completed", "report": report }))).into_response())
            }
            Err(e) => Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "retrain-failed",
                e.to_string(),
            )),
        };
    }
    tokio::spawn(async move {
        let _ = task.await;
    });
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({ "status": "started", "iteration": iteration })),
    )
        .into_response())
}

/// Background half of a retrain: trains, persists the version files, logs
/// the transition and swaps the new model in.
fn retrain(
    st: &AppState,
    labels: &LabelStore,
    verdicts: &[Verdict],
    through: u64,
    iteration: u32,
    previous: &[ClassScore],
) -> Result<IterationReport> {
    let outcome = hitl_iterate(
        &st.view,
        labels,
        verdicts,
        &st.base_config,
        iteration,
        Some(previous),
        st.exec,
    );
    let rt = tokio::runtime::Handle::current();
    let mut s = rt.block_on(st.session.lock());
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            s.retraining = false;
            s.last_error = Some(e.to_string());
            return Err(e.into());
        }
    };
    let result = (|| -> Result<IterationReport> {
        let version = s.model_version + 1;
        save_checkpoint(&st.version_file("model", version, "ckpt"), &outcome.model)?;
        let mut f = File::create(st.version_file("labels", version, "csv"))?;
        outcome.labels.write_csv(&mut f)?;
        f.sync_all()?;
        let report = serde_json::to_value(&outcome.report)?;
        let shown = s.shown.len();
        let seq = s.next_seq;
        append(
            &mut s.wal,
            &WalEvent::Retrained {
                seq,
                at: now(),
                iteration,
                model_version: version,
                consumed_through: through,
                shown,
                report: report.clone(),
            },
        )?;
        s.next_seq += 1;
        s.pending.retain(|_, p| p.seq > through);
        s.audit.push(AuditEntry {
            seq,
            at: now(),
            who: "system".into(),
            what: format!("retrained to iteration {iteration}"),
            node: None,
            class: None,
        });
        s.finish_retrain(
            &st.view,
            outcome.model.clone(),
            outcome.labels.clone(),
            iteration,
            version,
            shown,
            outcome.report.verdicts_applied,
            report,
            st.exec,
        )?;
        Ok(outcome.report.clone())
    })();
    s.retraining = false;
    if let Err(e) = &result {
        s.last_error = Some(e.to_string());
    }
    result
}

async fn status(State(st): State<Arc<AppState>>) -> ApiResult<Value> {
    let s = st.session.lock().await;
    let accepted = accept_labels(
        &s.scores,
        st.threshold,
        s.model.config.class_list(),
        &s.labels,
        s.iteration,
    );
    let pending_votes: usize = s.pending.values().map(|p| p.votes.len()).sum();
    Ok(Json(json!({
        "session_id": s.id,
        "iteration": s.iteration,
        "model_version": s.model_version,
        "state": if s.retraining { "retraining" } else { "idle" },
        "retraining": s.retraining,
        "labels": s.class_counts(),
        "labels_total": s.labels.len(),
        "pending_verdicts": s.pending.len(),
        "pending_votes": pending_votes,
        "model_labels_at_threshold": accepted.len(),
        "yields": s.yields,
        "last_report": s.last_report,
        "last_error": s.last_error,
        "audit_entries": s.audit.len(),
    })))
}

async fn curves(State(st): State<Arc<AppState>>) -> ApiResult<Value> {
    let s = st.session.lock().await;
    Ok(Json(json!({ "threshold": st.threshold, "iterations": s.curves })))
}

async fn audit(State(st): State<Arc<AppState>>) -> ApiResult<Value> {
    let s = st.session.lock().await;
    Ok(Json(json!({ "entries": s.audit })))
}

async fn segment_metrics(State(st): State<Arc<AppState>>, UrlPath(segment): UrlPath<String>) -> ApiResult<Value> {
    let (labels, version) = {
        let s = st.session.lock().await;
        if let Some(r) = s.metrics_cache.get(&(segment.clone(), s.model_version)) {
            return Ok(Json(json!({ "model_version": s.model_version, "report": r })));
        }
        let mut labels = s.labels.clone();
        let classes = s.model.config.class_list();
        for l in accept_labels(&s.scores, st.threshold, classes, &s.labels, s.iteration) {
            labels.offer(l);
        }
        (labels, s.model_version)
    };
    let st2 = st.clone();
    let seg = segment.clone();
    let report = tokio::task::spawn_blocking(move || compute_segment(&st2, &labels, &seg))
        .await
        .map_err(ApiError::internal)??;
    let mut s = st.session.lock().await;
    s.metrics_cache.insert((segment, version), report.clone());
    Ok(Json(json!({ "model_version": version, "report": report })))
}

fn compute_segment(st: &AppState, labels: &LabelStore, segment: &str) -> Result<PoliticsReport, ApiError> {
    let g = &st.graph;
    let colors = PoliticalColors::from_labels(g, labels);
    let mc = metrics_config(&st.pipeline);
    for level in [CategoryLevel::Main, CategoryLevel::Big] {
        let (segments, totals) = level_totals(g, &colors, &mc, level);
        if let Some((name, products)) = segments.iter().find(|(n, _)| n.eq_ignore_ascii_case(segment)) {
            return segment_report(g, &colors, name, products, &totals, &mc, st.exec)
                .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "metrics", e.to_string()));
        }
    }
    Err(ApiError::new(
        StatusCode::NOT_FOUND,
        "unknown-segment",
        format!("no main or big category named {segment:?}"),
    ))
}

async fn require_token(State(st): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    if let Some(token) = &st.settings.token {
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|t| t == token);
        if !ok {
            return ApiError::new(
                StatusCode::UNAUTHORIZED,
                "unauthorized",
                "missing or wrong bearer token",
            )
            .into_response();
        }
    }
    next.run(req).await
}

async fn static_file(State(st): State<Arc<AppState>>, req: Request) -> Response {
    let Some(root) = &st.settings.static_dir else {
        return (StatusCode::NOT_FOUND, "no UI bundle configured").into_response();
    };
    let rel = req.uri().path().trim_start_matches('/');
    let rel = if rel.is_empty() { "index.html" } else { rel };
    let rel = Path::new(rel);
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return StatusCode::BAD_REQUEST.into_response();
    }
    match fs::read(root.join(rel)) {
        Ok(bytes) => {
            let mime = match rel.extension().and_then(|e| e.to_str()) {
                Some("html") => "text/html; charset=utf-8",
                Some("js") => "text/javascript",
                Some("css") => "text/css",
                Some("json") => "application/json",
                Some("svg") => "image/svg+xml",
                _ => "application/octet-stream",
            };
            ([(header::CONTENT_TYPE, mime)], bytes).into_response()
        }
        Err(_) => StatusCode::NOT_FOUND.into_response(),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/api/session", get(session_info))
        .route("/api/candidates", get(candidate_list))
        .route("/api/verdicts", post(post_verdict))
        .route("/api/retrain", post(post_retrain))
        .route("/api/status", get(status))
        .route("/api/curves", get(curves))
        .route("/api/audit", get(audit))
        .route("/api/metrics/:segment", get(segment_metrics))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    api.fallback(static_file).with_state(state)
}

/// Binds the configured address and serves until interrupted.
pub async fn serve(cfg: &PipelineConfig, exec: Execution) -> Result<()> {
    let state = tokio::task::block_in_place(|| AppState::open(cfg, exec))?;
    let listener = tokio::net::TcpListener::bind(&cfg.service.bind)
        .await
        .with_context(|| format!("binding {}", cfg.service.bind))?;
    log::info!("labeling service listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

//! Pipeline stages. Each stage reads and writes fixed file names inside the
//! configured work directory, so rerunning a stage with the same inputs and
//! seed reproduces its artifacts byte for byte.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use polimarket::hetgraph::{
    augment_coreview, k_core, snapshot_load, snapshot_save, write_edge_list, write_node_table, LabelStore,
    PoliticalClass, PoliticalLabel, Provenance,
};
use polimarket::ingest::{
    attach_moral_scores, load_moral_scores, match_seeds, parse_corpus, read_seeds_csv, CategoryMap, OTHER,
};
use polimarket::par::Execution;
use polimarket::polmetrics::{
    partition_by_category, segment_reports, write_reports_csv, CategoryLevel, MetricsConfig, PoliticalColors,
};
use polimarket::rgcn::{
    accept_labels, hyperparameter_search, lifestyle_score, load_checkpoint, predict_products, save_checkpoint,
    targets_from_labels, threshold_curve, train as train_model, write_curve_csv, write_scores_csv, RelationalView,
    RgcnConfig, RgcnError, SearchSpace,
};
use polimarket::sampler::{bipartite_baseline, run_plan, InMemoryCorpus};
use polimarket::statlab::{
    beta_fit, build_feature_table, coefficient_report, write_coefficients_csv, FeatureTable, Formula, StatError,
};
use polimarket::{EdgeKind, GlobalPoliticalTotals, HeteroGraph, NodeKind};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::{Invalid, PipelineConfig};

pub const SEED_MATCHES: &str = "seed_matches.csv";
pub const INGEST_REPORT: &str = "ingest_report.json";
pub const GRAPH: &str = "graph.snap";
pub const SAMPLING_REPORT: &str = "sampling_report.json";
pub const AUGMENTED: &str = "augmented.snap";
pub const AUGMENT_REPORT: &str = "augment_report.json";
pub const MODEL: &str = "model.ckpt";
pub const TRAINING: &str = "training.csv";
pub const TRAINING_REPORT: &str = "training.json";
pub const SEARCH: &str = "search.csv";
pub const BEST_CONFIG: &str = "best_config.json";
pub const SCORES: &str = "scores.csv";
pub const CURVE: &str = "curve.csv";
pub const LABELS: &str = "labels.csv";
pub const LABELED: &str = "labeled.snap";
pub const CLASSIFY_REPORT: &str = "classify.json";
pub const LIFESTYLE: &str = "lifestyle.csv";
pub const LIFESTYLE_BY_CATEGORY: &str = "lifestyle_by_category.csv";
pub const FEATURES_RAW: &str = "features_raw.csv";
pub const FEATURES: &str = "features.csv";
pub const FEATURES_REPORT: &str = "features.json";
pub const COEFFICIENTS: &str = "coefficients.csv";
pub const FIT_REPORT: &str = "fit.json";
pub const EDGES: &str = "edges.csv";
pub const NODES: &str = "nodes.csv";
pub const REPORT: &str = "report.md";

pub fn core_snapshot(k: usize) -> String {
    format!("core_{k}.snap")
}

pub fn core_report(k: usize) -> String {
    format!("core_{k}.json")
}

pub fn metrics_csv(level: CategoryLevel) -> &'static str {
    match level {
        CategoryLevel::Main => "metrics_main.csv",
        CategoryLevel::Big => "metrics_big.csv",
    }
}

fn totals_json(level: CategoryLevel) -> &'static str {
    match level {
        CategoryLevel::Main => "totals_main.json",
        CategoryLevel::Big => "totals_big.json",
    }
}

/// Probability thresholds for the acceptance curve.
pub fn threshold_grid() -> Vec<f64> {
    (50..=100).map(|i| i as f64 / 100.0).collect()
}

/// Artifact directory.
#[derive(Debug, Clone)]
pub struct Workdir(PathBuf);

impl Workdir {
    pub fn create(cfg: &PipelineConfig) -> Result<Workdir> {
        let dir = cfg.paths.workdir.clone();
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Workdir(dir))
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }

    /// Path of an artifact an earlier stage must have produced.
    pub fn input(&self, name: &str, stage: &str) -> Result<PathBuf> {
        let p = self.path(name);
        if !p.exists() {
            return Err(Invalid(format!("{name} is missing; run `{stage}` first")).into());
        }
        Ok(p)
    }

    fn create_file(&self, name: &str) -> Result<BufWriter<File>> {
        let p = self.path(name);
        Ok(BufWriter::new(
            File::create(&p).with_context(|| format!("creating {}", p.display()))?,
        ))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut w = self.create_file(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    fn read_json<T: for<'de> Deserialize<'de>>(&self, name: &str, stage: &str) -> Result<T> {
        let text = fs::read_to_string(self.input(name, stage)?)?;
        serde_json::from_str(&text).with_context(|| format!("parsing {name}"))
    }

    fn load(&self, name: &str, stage: &str) -> Result<(HeteroGraph, LabelStore)> {
        let p = self.input(name, stage)?;
        snapshot_load(&p).with_context(|| format!("loading {name}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphSummary {
    pub nodes: usize,
    pub edges: usize,
    pub nodes_by_kind: BTreeMap<String, usize>,
    pub edges_by_kind: BTreeMap<String, usize>,
}

pub fn graph_summary(g: &HeteroGraph) -> GraphSummary {
    GraphSummary {
        nodes: g.node_count(),
        edges: g.total_edge_count(),
        nodes_by_kind: NodeKind::ALL
            .iter()
            .map(|&k| (k.as_str().to_string(), g.nodes_of_kind(k).count()))
            .collect(),
        edges_by_kind: EdgeKind::ALL
            .iter()
            .map(|&k| (k.as_str().to_string(), g.edge_count(k)))
            .collect(),
    }
}

fn categories(cfg: &PipelineConfig) -> Result<CategoryMap> {
    match &cfg.paths.categories {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(CategoryMap::from_json(&text).map_err(|e| Invalid(format!("{}: {e}", p.display())))?)
        }
        None => Ok(CategoryMap::default()),
    }
}

/// Parses the corpus and matches seed titles.
pub fn ingest(cfg: &PipelineConfig, exec: Execution) -> Result<String> {
    cfg.require_inputs()?;
    let wd = Workdir::create(cfg)?;
    let corpus = parse_corpus(&cfg.paths.reviews, &cfg.paths.metadata, exec)?;
    let seeds = read_seeds_csv(File::open(&cfg.paths.seeds)?)
        .map_err(|e| Invalid(format!("{}: {e}", cfg.paths.seeds.display())))?;
    let report = match_seeds(&seeds, &corpus.products, cfg.ingest.seed_threshold, exec);

    let mut w = csv::Writer::from_writer(wd.create_file(SEED_MATCHES)?);
    for m in &report.matches {
        w.serialize(m)?;
    }
    w.flush()?;
    let needs_review = report.matches.iter().filter(|m| m.needs_review).count();
    wd.write_json(
        INGEST_REPORT,
        &json!({
            "parse": corpus.report,
            "seeds": seeds.len(),
            "matched": report.matches.len(),
            "needs_review": needs_review,
            "unmatched": report.unmatched.iter().map(|s| &s.title).collect::<Vec<_>>(),
            "duplicates": report.duplicates,
            "class_conflicts": report.class_conflicts,
        }),
    )?;
    Ok(format!(
        "{} reviews, {} products; {}/{} seeds matched ({} need review)",
        corpus.reviews.len(),
        corpus.products.len(),
        report.matches.len(),
        seeds.len(),
        needs_review
    ))
}

#[derive(Debug, Deserialize)]
struct MatchRow {
    asin: String,
    class: PoliticalClass,
}

/// Runs the sampling waves from the matched seeds and stores the graph with
/// seed labels.
pub fn sample(cfg: &PipelineConfig, exec: Execution) -> Result<String> {
    cfg.require_inputs()?;
    let wd = Workdir::create(cfg)?;
    let mut matches = Vec::new();
    for row in csv::Reader::from_path(wd.input(SEED_MATCHES, "ingest")?)?.deserialize() {
        let row: MatchRow = row?;
        matches.push(row);
    }
    let corpus = parse_corpus(&cfg.paths.reviews, &cfg.paths.metadata, exec)?;
    let access = InMemoryCorpus::new(&corpus);
    let asins: Vec<String> = matches.iter().map(|m| m.asin.clone()).collect();
    let (mut g, report) = run_plan(&access, &asins, &cfg.sampler, &categories(cfg)?, exec);
    let mut moral_unmatched = None;
    if let Some(p) = &cfg.paths.moral {
        let scores = load_moral_scores(p)?;
        let (with_moral, unmatched) = attach_moral_scores(&g, &scores);
        g = with_moral;
        moral_unmatched = Some(unmatched);
    }
    let baseline = bipartite_baseline(&access, &asins, cfg.sampler.waves, exec).len();

    let mut labels = LabelStore::new();
    for m in &matches {
        if g.node_id(NodeKind::Product, &m.asin).is_some() {
            labels.offer(PoliticalLabel::seed(&m.asin, m.class));
        }
    }
    snapshot_save(&wd.path(GRAPH), &g, &labels)?;
    let products = g.nodes_of_kind(NodeKind::Product).count();
    wd.write_json(
        SAMPLING_REPORT,
        &json!({
            "sampling": report,
            "graph": graph_summary(&g),
            "seed_labels": labels.len(),
            "bipartite_products": baseline,
            "moral_rows_unmatched": moral_unmatched,
        }),
    )?;
    Ok(format!(
        "{} nodes, {} edges; {products} products vs {baseline} from co-purchase walks",
        g.node_count(),
        g.total_edge_count()
    ))
}

/// k-core of the sampled graph (or `input`). Without `k`, every configured
/// order is computed.
pub fn kcore(cfg: &PipelineConfig, k: Option<usize>, input: Option<&Path>, exec: Execution) -> Result<String> {
    let wd = Workdir::create(cfg)?;
    let (g, labels) = match input {
        Some(p) => snapshot_load(p).with_context(|| format!("loading {}", p.display()))?,
        None => wd.load(GRAPH, "sample")?,
    };
    let orders = match k {
        Some(k) => vec![k],
        None => cfg.kcore.values.clone(),
    };
    let mut lines = Vec::new();
    for k in orders {
        let core = k_core(&g, k, exec);
        snapshot_save(&wd.path(&core_snapshot(k)), &core, &labels)?;
        let mut w = wd.create_file(&format!("core_{k}_nodes.txt"))?;
        for n in core.nodes() {
            writeln!(w, "{}\t{}", n.kind.as_str(), n.key)?;
        }
        w.flush()?;
        wd.write_json(&core_report(k), &json!({ "k": k, "graph": graph_summary(&core) }))?;
        lines.push(format!(
            "{k}-core: {} nodes, {} edges",
            core.node_count(),
            core.total_edge_count()
        ));
    }
    Ok(lines.join("\n"))
}

/// Adds co-review edges to the innermost configured core (or `input`).
pub fn augment(cfg: &PipelineConfig, input: Option<&Path>, exec: Execution) -> Result<String> {
    let wd = Workdir::create(cfg)?;
    let (g, labels) = match input {
        Some(p) => snapshot_load(p).with_context(|| format!("loading {}", p.display()))?,
        None => {
            let k = *cfg.kcore.values.last().expect("validated non-empty");
            wd.load(&core_snapshot(k), "kcore")?
        }
    };
    let (out, report) = augment_coreview(&g, cfg.kcore.max_reviewer_degree, exec);
    snapshot_save(&wd.path(AUGMENTED), &out, &labels)?;
    wd.write_json(
        AUGMENT_REPORT,
        &json!({ "augment": report, "before": graph_summary(&g), "after": graph_summary(&out) }),
    )?;
    Ok(format!(
        "{} co-review edges added ({} -> {} edges)",
        report.edges_added,
        g.total_edge_count(),
        out.total_edge_count()
    ))
}

fn model_config(cfg: &PipelineConfig, wd: &Workdir, tuned: bool) -> Result<RgcnConfig> {
    let mut rc = if tuned {
        wd.read_json(BEST_CONFIG, "search")?
    } else {
        cfg.model.rgcn.clone()
    };
    rc.seed = cfg.seed;
    rc.validate().map_err(|e| Invalid(e.to_string()))?;
    Ok(rc)
}

fn rgcn_failure(e: RgcnError) -> anyhow::Error {
    match e {
        RgcnError::Split(m) | RgcnError::InvalidConfig(m) => Invalid(m).into(),
        other => other.into(),
    }
}

#[derive(Serialize)]
struct HistoryRow {
    epoch: usize,
    train_loss: f64,
    train_acc: f64,
    val_loss: Option<f64>,
    val_acc: Option<f64>,
    test_loss: Option<f64>,
    test_acc: Option<f64>,
    grad_norm: f64,
}

/// Trains the classifier on seed and human labels of the augmented graph.
pub fn train(cfg: &PipelineConfig, tuned: bool, exec: Execution) -> Result<String> {
    let wd = Workdir::create(cfg)?;
    let rc = model_config(cfg, &wd, tuned)?;
    let (g, labels) = wd.load(AUGMENTED, "augment")?;
    let view = RelationalView::from_graph(&g, cfg.model.max_wave);
    let targets = targets_from_labels(&view, &labels, rc.class_list(), false);
    let out = train_model(&view, &targets, &rc, exec).map_err(rgcn_failure)?;
    save_checkpoint(&wd.path(MODEL), &out.model)?;

    let mut w = csv::Writer::from_writer(wd.create_file(TRAINING)?);
    for h in &out.model.history {
        w.serialize(HistoryRow {
            epoch: h.epoch,
            train_loss: h.train_loss,
            train_acc: h.train_acc,
            val_loss: h.val_loss,
            val_acc: h.val_acc,
            test_loss: h.test_loss,
            test_acc: h.test_acc,
            grad_norm: h.grad_norm,
        })?;
    }
    w.flush()?;
    let best = out.best();
    wd.write_json(
        TRAINING_REPORT,
        &json!({
            "config": rc,
            "view_nodes": view.len(),
            "targets": targets.len(),
            "split": [out.split.train.len(), out.split.val.len(), out.split.test.len()],
            "best_epoch": out.best_epoch,
            "best": best,
        }),
    )?;
    Ok(format!(
        "best epoch {}: val acc {}, test acc {}",
        out.best_epoch,
        fmt_opt(best.val_acc),
        fmt_opt(best.test_acc)
    ))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or("n/a".into(), |v| format!("{v:.4}"))
}

/// Seeded random hyperparameter search; writes the trials and best config.
pub fn search(cfg: &PipelineConfig, budget: Option<usize>, exec: Execution) -> Result<String> {
    let wd = Workdir::create(cfg)?;
    let base = model_config(cfg, &wd, false)?;
    let (g, labels) = wd.load(AUGMENTED, "augment")?;
    let view = RelationalView::from_graph(&g, cfg.model.max_wave);
    let targets = targets_from_labels(&view, &labels, base.class_list(), false);
    let budget = budget.unwrap_or(cfg.model.search_budget);
    let (best, trials) = hyperparameter_search(&view, &targets, &SearchSpace::default(), &base, budget, cfg.seed, exec)
        .map_err(rgcn_failure)?;

    let mut w = csv::Writer::from_writer(wd.create_file(SEARCH)?);
    w.write_record([
        "trial", "val_acc", "val_loss", "test_acc", "diverged", "epochs", "layers", "hidden", "lr", "clip", "l2",
        "dropout",
    ])?;
    for t in &trials {
        let c = &t.config;
        w.write_record([
            t.index.to_string(),
            t.val_acc.to_string(),
            t.val_loss.to_string(),
            t.test_acc.map_or(String::new(), |v| v.to_string()),
            t.diverged.to_string(),
            c.epochs.to_string(),
            c.layers.to_string(),
            c.hidden.to_string(),
            c.lr.to_string(),
            c.clip.to_string(),
            c.l2.to_string(),
            c.dropout.to_string(),
        ])?;
    }
    w.flush()?;
    wd.write_json(BEST_CONFIG, &best)?;
    Ok(format!(
        "{} trials; best: {} layers, {} hidden, lr {}, dropout {}",
        trials.len(),
        best.layers,
        best.hidden,
        best.lr,
        best.dropout
    ))
}

/// Scores every product, writes the acceptance curve and merges confident
/// model labels.
pub fn classify(cfg: &PipelineConfig, exec: Execution) -> Result<String> {
    let wd = Workdir::create(cfg)?;
    let (g, labels) = wd.load(AUGMENTED, "augment")?;
    let model = load_checkpoint(&wd.input(MODEL, "train")?)?;
    let view = RelationalView::from_graph(&g, cfg.model.max_wave);
    let scores = predict_products(&model, &view, exec).map_err(rgcn_failure)?;
    let mut w = wd.create_file(SCORES)?;
    write_scores_csv(&mut w, &scores)?;
    w.flush()?;
    let curve = threshold_curve(&scores, &threshold_grid()).map_err(rgcn_failure)?;
    let mut w = wd.create_file(CURVE)?;
    write_curve_csv(&mut w, &curve)?;
    w.flush()?;

    let accepted = accept_labels(&scores, cfg.accept_threshold, model.config.class_list(), &labels, 0);
    let mut merged = labels.clone();
    for l in &accepted {
        merged.offer(l.clone());
    }
    let mut w = wd.create_file(LABELS)?;
    merged.write_csv(&mut w)?;
    w.flush()?;
    snapshot_save(&wd.path(LABELED), &g, &merged)?;
    let counts: BTreeMap<String, usize> = merged
        .class_counts()
        .into_iter()
        .map(|(c, n)| (c.as_str().to_string(), n))
        .collect();
    wd.write_json(
        CLASSIFY_REPORT,
        &json!({
            "scored": scores.len(),
            "threshold": cfg.accept_threshold,
            "accepted": accepted.len(),
            "labels": counts,
        }),
    )?;
    Ok(format!(
        "{} products scored; {} model labels accepted at {}",
        scores.len(),
        accepted.len(),
        cfg.accept_threshold
    ))
}

pub fn metrics_config(cfg: &PipelineConfig) -> MetricsConfig {
    MetricsConfig {
        scope: cfg.edge_scope().expect("validated edge preset"),
        replicates: cfg.metrics.replicates,
        seed: cfg.seed,
        mode: cfg.metrics.mode,
    }
}

/// Totals for `level`, with `d` averaged over that level's segments.
pub fn level_totals(
    g: &HeteroGraph,
    colors: &PoliticalColors,
    mc: &MetricsConfig,
    level: CategoryLevel,
) -> (Vec<(String, Vec<polimarket::NodeId>)>, GlobalPoliticalTotals) {
    let segments: Vec<(String, Vec<_>)> = partition_by_category(g, level).into_iter().collect();
    let parts: Vec<Vec<_>> = segments.iter().map(|(_, v)| v.clone()).collect();
    let totals = GlobalPoliticalTotals::from_graph(g, colors, &mc.scope, &parts);
    (segments, totals)
}

/// Relevance, alignment and polarization per big and main category.
pub fn metrics(cfg: &PipelineConfig, levels: &[CategoryLevel], exec: Execution) -> Result<String> {
    let wd = Workdir::create(cfg)?;
    let (g, labels) = wd.load(LABELED, "classify")?;
    let colors = PoliticalColors::from_labels(&g, &labels);
    let mc = metrics_config(cfg);
    let mut lines = Vec::new();
    for &level in levels {
        let (segments, totals) = level_totals(&g, &colors, &mc, level);
        totals.validate().map_err(|e| Invalid(e.to_string()))?;
        let reports = segment_reports(&g, &colors, &segments, &totals, &mc, exec)?;
        let mut w = wd.create_file(metrics_csv(level))?;
        write_reports_csv(&mut w, &reports)?;
        w.flush()?;
        wd.write_json(totals_json(level), &totals)?;
        lines.push(format!("{} {:?} segments", reports.len(), level));
    }
    Ok(lines.join(", "))
}

#[derive(Debug, Deserialize)]
struct ScoreRow {
    asin: String,
    class: String,
    p_conservative: f64,
    p_liberal: f64,
}

/// Lifestyle scores per product and their category means over products
/// without seed or human labels.
pub fn lifestyle(cfg: &PipelineConfig) -> Result<String> {
    let wd = Workdir::create(cfg)?;
    let (g, labels) = wd.load(LABELED, "classify")?;
    let mut out = csv::Writer::from_writer(wd.create_file(LIFESTYLE)?);
    out.write_record([
        "asin",
        "main_category",
        "class",
        "provenance",
        "conservative_share",
        "lifestyle",
    ])?;
    let mut by_cat: BTreeMap<String, (usize, f64, f64)> = BTreeMap::new();
    let mut n = 0;
    for row in csv::Reader::from_path(wd.input(SCORES, "classify")?)?.deserialize() {
        let r: ScoreRow = row?;
        let denom = r.p_conservative + r.p_liberal;
        let share = if denom > 0.0 { r.p_conservative / denom } else { 0.5 };
        let score = lifestyle_score(share);
        let cat = g
            .node_id(NodeKind::Product, &r.asin)
            .and_then(|v| g.node(v).attrs.main_category.clone())
            .unwrap_or_else(|| OTHER.to_string());
        let prov = labels.get(&r.asin).map(|l| l.provenance);
        out.write_record([
            r.asin.as_str(),
            cat.as_str(),
            r.class.as_str(),
            prov.map_or("none", Provenance::as_str),
            &share.to_string(),
            &score.to_string(),
        ])?;
        if matches!(prov, None | Some(Provenance::Model)) {
            let e = by_cat.entry(cat).or_insert((0, 0.0, 0.0));
            e.0 += 1;
            e.1 += score;
            e.2 += (score - 0.5).abs();
        }
        n += 1;
    }
    out.flush()?;
    let mut w = csv::Writer::from_writer(wd.create_file(LIFESTYLE_BY_CATEGORY)?);
    w.write_record([
        "main_category",
        "products",
        "mean_lifestyle",
        "mean_distance_from_neutral",
    ])?;
    for (cat, (k, s, d)) in &by_cat {
        w.write_record([
            cat.clone(),
            k.to_string(),
            (s / *k as f64).to_string(),
            (d / *k as f64).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(format!("{n} products scored across {} categories", by_cat.len()))
}

fn read_lifestyle(path: &Path) -> Result<HashMap<String, f64>> {
    #[derive(Deserialize)]
    struct Row {
        asin: String,
        lifestyle: f64,
    }
    let mut map = HashMap::new();
    for row in csv::Reader::from_path(path)?.deserialize() {
        let r: Row = row?;
        map.insert(r.asin, r.lifestyle);
    }
    Ok(map)
}

/// Review-level covariates, raw and transformed.
pub fn features(cfg: &PipelineConfig, exec: Execution) -> Result<String> {
    let wd = Workdir::create(cfg)?;
    let (g, labels) = wd.load(LABELED, "classify")?;
    let lifestyle = read_lifestyle(&wd.input(LIFESTYLE, "lifestyle")?)?;
    let colors = PoliticalColors::from_labels(&g, &labels);
    let mc = metrics_config(cfg);
    let (_, totals) = level_totals(&g, &colors, &mc, CategoryLevel::Main);
    totals.validate().map_err(|e| Invalid(e.to_string()))?;
    let (mut raw, report) = build_feature_table(&g, &colors, &lifestyle, &totals, cfg.fit.min_reviews)?;
    if raw.len() < 3 {
        return Err(Invalid(format!(
            "only {} reviews pass the {}-review filter",
            raw.len(),
            cfg.fit.min_reviews
        ))
        .into());
    }
    let dropped = raw.drop_constant();
    raw.write_csv(wd.create_file(FEATURES_RAW)?)?;
    let prepared = raw.prepare(exec)?;
    prepared.write_csv(wd.create_file(FEATURES)?)?;
    wd.write_json(
        FEATURES_REPORT,
        &json!({
            "report": report,
            "dropped_constant": dropped,
            "columns": prepared.manifest,
            "diagnostics": prepared.diagnostics,
        }),
    )?;
    Ok(format!(
        "{} rows, {} columns ({} constant dropped)",
        prepared.len(),
        prepared.manifest.len(),
        dropped.len()
    ))
}

/// Beta regression of lifestyle scores on the prepared covariates.
pub fn fit(cfg: &PipelineConfig, exec: Execution) -> Result<String> {
    let wd = Workdir::create(cfg)?;
    let table = FeatureTable::read_csv(File::open(wd.input(FEATURES, "features")?)?)?;
    let mut formula = if cfg.fit.formula.trim().is_empty() {
        default_formula(&table)
    } else {
        Formula::parse(&cfg.fit.formula, &table).map_err(|e| Invalid(e.to_string()))?
    };
    let groups = cfg.fit.cluster_by_reviewer.then_some(table.reviewers.as_slice());
    let mut dropped = Vec::new();
    let fit = loop {
        let design = formula.design(&table).map_err(|e| Invalid(e.to_string()))?;
        match beta_fit(&design, &table.response, groups, exec) {
            Err(StatError::RankDeficient(cols)) if dropped.is_empty() && !cols.iter().any(|c| c == "(Intercept)") => {
                formula.terms.retain(|t| !cols.contains(&t.join(":")));
                dropped = cols;
            }
            other => break other?,
        }
    };
    let interpret: Vec<&str> = fit.names.iter().skip(1).map(String::as_str).collect();
    let rows = coefficient_report(&fit, &interpret);
    let mut w = wd.create_file(COEFFICIENTS)?;
    write_coefficients_csv(&mut w, &rows)?;
    w.flush()?;
    wd.write_json(
        FIT_REPORT,
        &json!({
            "formula": formula.terms.iter().map(|t| t.join(":")).collect::<Vec<_>>(),
            "dropped_collinear": dropped,
            "fit": fit,
        }),
    )?;
    Ok(format!(
        "n = {}, {} coefficients, phi = {:.4}, loglik {:.3} ({} iterations)",
        fit.n,
        fit.beta.len(),
        fit.phi,
        fit.loglik,
        fit.iterations
    ))
}

fn default_formula(table: &FeatureTable) -> Formula {
    let has = |n: &str| table.column(n).is_some();
    if has("product_alignment") && has("product_relevance") {
        Formula::default_for(table)
    } else {
        Formula::parse(".", table).expect("table has columns")
    }
}

/// Edge list and node table of the labeled graph (or `input`).
pub fn export(cfg: &PipelineConfig, input: Option<&Path>) -> Result<String> {
    let wd = Workdir::create(cfg)?;
    let (g, labels) = match input {
        Some(p) => snapshot_load(p).with_context(|| format!("loading {}", p.display()))?,
        None => wd.load(LABELED, "classify")?,
    };
    let mut w = wd.create_file(EDGES)?;
    write_edge_list(&g, &mut w)?;
    w.flush()?;
    let mut w = wd.create_file(NODES)?;
    write_node_table(&g, &labels, &mut w)?;
    w.flush()?;
    Ok(format!(
        "{} nodes, {} edges exported",
        g.node_count(),
        g.total_edge_count()
    ))
}

fn md_row<I: IntoIterator<Item = String>>(cells: I) -> String {
    format!("| {} |", cells.into_iter().collect::<Vec<_>>().join(" | "))
}

fn summary_table(out: &mut String, title: &str, v: &serde_json::Value) {
    out.push_str(&format!("\n### {title}\n\n| kind | count |\n| --- | ---: |\n"));
    if let Some(map) = v.as_object() {
        for (k, n) in map {
            out.push_str(&md_row([k.clone(), n.to_string()]));
            out.push('\n');
        }
    }
}

fn metrics_table(out: &mut String, path: &Path) -> Result<()> {
    let mut rdr = csv::Reader::from_path(path)?;
    let h = rdr.headers()?.clone();
    let col = |name: &str| h.iter().position(|c| c == name);
    let keep: Vec<(&str, Option<usize>)> = ["segment", "products", "relevance", "alignment", "z", "observed_overlap"]
        .into_iter()
        .map(|n| (n, col(n)))
        .collect();
    out.push_str(&md_row(keep.iter().map(|(n, _)| n.to_string())));
    out.push('\n');
    out.push_str(&md_row(keep.iter().map(|_| "---".to_string())));
    out.push('\n');
    for rec in rdr.records() {
        let rec = rec?;
        let cells = keep.iter().map(|(n, i)| {
            let raw = i.and_then(|i| rec.get(i)).unwrap_or("");
            match (*n, raw.parse::<f64>()) {
                ("relevance" | "alignment", Ok(v)) => format!("{v:.4}"),
                ("z", Ok(v)) => format!("{v:.2}"),
                _ => raw.to_string(),
            }
        });
        out.push_str(&md_row(cells));
        out.push('\n');
    }
    Ok(())
}

/// Sampling counts and the per-category politics tables as Markdown.
pub fn report(cfg: &PipelineConfig) -> Result<String> {
    let wd = Workdir::create(cfg)?;
    let sampling: serde_json::Value = wd.read_json(SAMPLING_REPORT, "sample")?;
    let mut out = String::from("# Market politics report\n\n## Sampling\n\n");
    out.push_str(
        "| wave | step-1 co-purchases | step-1 reviewers | step-2 reviewers | step-2 products | products | authors |\n",
    );
    out.push_str("| ---: | ---: | ---: | ---: | ---: | ---: | ---: |\n");
    if let Some(waves) = sampling["sampling"]["waves"].as_array() {
        for (i, w) in waves.iter().enumerate() {
            let f = |k: &str| w[k].to_string();
            out.push_str(&md_row([
                (i + 1).to_string(),
                f("step1_co_purchases"),
                f("step1_reviewers"),
                f("step2_reviewers"),
                f("step2_products"),
                f("products_total"),
                f("authors_total"),
            ]));
            out.push('\n');
        }
    }
    summary_table(&mut out, "Nodes", &sampling["graph"]["nodes_by_kind"]);
    summary_table(&mut out, "Edges", &sampling["graph"]["edges_by_kind"]);
    out.push_str(&format!(
        "\nSeed labels: {}. Products reached by co-purchase walks alone: {}.\n",
        sampling["seed_labels"], sampling["bipartite_products"]
    ));

    out.push_str("\n## Cores\n\n| k | nodes | edges |\n| ---: | ---: | ---: |\n");
    for &k in &cfg.kcore.values {
        if let Ok(v) = wd.read_json::<serde_json::Value>(&core_report(k), "kcore") {
            out.push_str(&md_row([
                k.to_string(),
                v["graph"]["nodes"].to_string(),
                v["graph"]["edges"].to_string(),
            ]));
            out.push('\n');
        }
    }
    if let Ok(v) = wd.read_json::<serde_json::Value>(AUGMENT_REPORT, "augment") {
        out.push_str(&format!(
            "\nCo-review augmentation added {} edges ({} -> {}).\n",
            v["augment"]["edges_added"], v["before"]["edges"], v["after"]["edges"]
        ));
    }
    if let Ok(v) = wd.read_json::<serde_json::Value>(CLASSIFY_REPORT, "classify") {
        out.push_str(&format!(
            "\n## Labels\n\n{} products scored, {} model labels accepted at {}.\n",
            v["scored"], v["accepted"], v["threshold"]
        ));
        summary_table(&mut out, "Labels by class", &v["labels"]);
    }
    for (title, level) in [
        ("Big categories", CategoryLevel::Big),
        ("Main categories", CategoryLevel::Main),
    ] {
        let p = wd.path(metrics_csv(level));
        if p.exists() {
            out.push_str(&format!("\n## {title}\n\n"));
            metrics_table(&mut out, &p)?;
        }
    }
    fs::write(wd.path(REPORT), &out)?;
    Ok(out)
}

/// Every stage in order except `search` and `serve`.
pub fn run_all(cfg: &PipelineConfig, exec: Execution) -> Result<Vec<String>> {
    cfg.validate()?;
    Ok(vec![
        ingest(cfg, exec)?,
        sample(cfg, exec)?,
        kcore(cfg, None, None, exec)?,
        augment(cfg, None, exec)?,
        train(cfg, false, exec)?,
        classify(cfg, exec)?,
        metrics(cfg, &[CategoryLevel::Big, CategoryLevel::Main], exec)?,
        lifestyle(cfg)?,
        features(cfg, exec)?,
        fit(cfg, exec)?,
        export(cfg, None)?,
        report(cfg).map(|_| "report written".to_string())?,
    ])
}

/// Artifacts written by [`run_all`], for hashing.
pub fn pipeline_artifacts(cfg: &PipelineConfig) -> Vec<String> {
    let mut names: Vec<String> = [
        SEED_MATCHES,
        INGEST_REPORT,
        GRAPH,
        SAMPLING_REPORT,
        AUGMENTED,
        AUGMENT_REPORT,
        MODEL,
        TRAINING,
        TRAINING_REPORT,
        SCORES,
        CURVE,
        LABELS,
        LABELED,
        CLASSIFY_REPORT,
        "metrics_big.csv",
        "metrics_main.csv",
        "totals_big.json",
        "totals_main.json",
        LIFESTYLE,
        LIFESTYLE_BY_CATEGORY,
        FEATURES_RAW,
        FEATURES,
        FEATURES_REPORT,
        COEFFICIENTS,
        FIT_REPORT,
        EDGES,
        NODES,
        REPORT,
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for &k in &cfg.kcore.values {
        names.push(core_snapshot(k));
        names.push(core_report(k));
        names.push(format!("core_{k}_nodes.txt"));
    }
    names.sort();
    names
}

//! Political relevance, alignment and polarization of market segments.
//!
//! Relevance and alignment are beta-binomial posterior means shrunk toward
//! global rates. Polarization compares the observed number of segment
//! products touching both political colors with its distribution under a
//! null model that keeps every product's count of political edges fixed and
//! redraws the colors of those edges, without replacement, from the global
//! pool of red and blue edge endpoints.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hetgraph::{EdgeKind, HeteroGraph, LabelStore, NodeId, NodeKind, PoliticalClass};
use crate::par::{self, Execution};

/// Largest number of colored endpoints the exact mode will enumerate.
pub const EXACT_MAX_DRAWS: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum PolError {
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("segment {0:?} has no products")]
    EmptySegment(String),
    #[error("the global pool needs at least one red and one blue endpoint")]
    NoColorPool,
    #[error("exact mode supports at most {max} colored endpoints, segment has {draws}")]
    TooManyDraws { draws: usize, max: usize },
    #[error("segment draws {draws} endpoints from a pool of {pool}")]
    PoolTooSmall { draws: usize, pool: u64 },
    #[error("monte carlo mode needs at least 2 replicates")]
    TooFewReplicates,
    #[error("node {0} is not an author with reviews")]
    IsolatedAuthor(NodeId),
}

/// Counts feeding the estimators. `k_p` equals `x` when computed from a graph.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentCounts {
    pub x: u64,
    pub k: u64,
    pub x_red: u64,
    pub k_p: u64,
    pub o: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalPoliticalTotals {
    pub d: f64,
    pub k_political: u64,
    pub m: u64,
    pub k_red: u64,
    pub k_blue: u64,
}

impl GlobalPoliticalTotals {
    /// Constants reported for the 20-core of the full corpus.
    pub const PAPER: GlobalPoliticalTotals = GlobalPoliticalTotals {
        d: 302.3,
        k_political: 2_796_590,
        m: 212_929_627,
        k_red: 1_818_415,
        k_blue: 978_175,
    };

    /// Totals over every product in `g`; `d` is the mean political-edge count
    /// over the segments of `partition`.
    pub fn from_graph(
        g: &HeteroGraph,
        colors: &PoliticalColors,
        scope: &EdgeScope,
        partition: &[Vec<NodeId>],
    ) -> GlobalPoliticalTotals {
        let mut m = 0;
        let mut k_red = 0;
        let mut k_blue = 0;
        for p in g.nodes_of_kind(NodeKind::Product) {
            let deg = scope.degree(g, p) as u64;
            m += deg;
            match colors.get(p) {
                Some(PoliticalClass::Conservative) => k_red += deg,
                Some(PoliticalClass::Liberal) => k_blue += deg,
                _ => {}
            }
        }
        let d = if partition.is_empty() {
            0.0
        } else {
            let total: u64 = partition.iter().map(|seg| count_segment(g, colors, scope, seg).x).sum();
            total as f64 / partition.len() as f64
        };
        GlobalPoliticalTotals {
            d,
            k_political: k_red + k_blue,
            m,
            k_red,
            k_blue,
        }
    }

    pub fn with_d(mut self, d: f64) -> Self {
        self.d = d;
        self
    }

    pub fn validate(&self) -> Result<(), PolError> {
        if !(self.d > 0.0 && self.d.is_finite()) {
            return Err(PolError::InvalidPrior(format!("d must be positive, got {}", self.d)));
        }
        if self.k_red + self.k_blue != self.k_political {
            return Err(PolError::InvalidPrior("k_red + k_blue must equal k_political".into()));
        }
        if self.m == 0 || self.m < self.k_political {
            return Err(PolError::InvalidPrior("m must be at least k_political".into()));
        }
        Ok(())
    }

    pub fn relevance_prior(&self) -> f64 {
        self.k_political as f64 / self.m as f64
    }

    pub fn alignment_prior(&self) -> f64 {
        self.k_red as f64 / (self.k_red + self.k_blue) as f64
    }
}

pub fn relevance(c: &SegmentCounts, g: &GlobalPoliticalTotals) -> Result<f64, PolError> {
    g.validate()?;
    Ok((c.x as f64 + g.d * g.relevance_prior()) / (c.k as f64 + g.d))
}

pub fn alignment(c: &SegmentCounts, g: &GlobalPoliticalTotals) -> Result<f64, PolError> {
    g.validate()?;
    Ok((c.x_red as f64 + g.d * g.alignment_prior()) / (c.k_p as f64 + g.d))
}

/// Political class per node; only conservative and liberal products are set.
#[derive(Debug, Clone)]
pub struct PoliticalColors(Vec<Option<PoliticalClass>>);

impl PoliticalColors {
    pub fn from_labels(g: &HeteroGraph, labels: &LabelStore) -> Self {
        let mut v = vec![None; g.node_count()];
        for l in labels.iter().filter(|l| l.class.is_political()) {
            if let Some(id) = g.node_id(NodeKind::Product, &l.product) {
                v[id as usize] = Some(l.class);
            }
        }
        PoliticalColors(v)
    }

    pub fn get(&self, v: NodeId) -> Option<PoliticalClass> {
        self.0.get(v as usize).copied().flatten()
    }
}

/// Edge kinds that count toward segment totals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeScope {
    pub kinds: Vec<EdgeKind>,
}

impl Default for EdgeScope {
    fn default() -> Self {
        EdgeScope::all()
    }
}

impl EdgeScope {
    pub fn all() -> Self {
        EdgeScope {
            kinds: EdgeKind::ALL.to_vec(),
        }
    }

    pub fn co_purchase() -> Self {
        EdgeScope {
            kinds: EdgeKind::CO_PURCHASE.to_vec(),
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "all" => Some(EdgeScope::all()),
            "co_purchase" | "co-purchase" => Some(EdgeScope::co_purchase()),
            _ => None,
        }
    }

    fn degree(&self, g: &HeteroGraph, v: NodeId) -> usize {
        self.kinds.iter().map(|&k| g.degree(v, k)).sum()
    }

    fn neighbors<'g>(&'g self, g: &'g HeteroGraph, v: NodeId) -> impl Iterator<Item = NodeId> + 'g {
        self.kinds.iter().flat_map(move |&k| g.neighbors(v, k).iter().copied())
    }
}

/// Per-product political endpoint counts: (red, blue).
fn political_endpoints(g: &HeteroGraph, colors: &PoliticalColors, scope: &EdgeScope, p: NodeId) -> (u64, u64) {
    let mut red = 0;
    let mut blue = 0;
    for q in scope.neighbors(g, p) {
        match colors.get(q) {
            Some(PoliticalClass::Conservative) => red += 1,
            Some(PoliticalClass::Liberal) => blue += 1,
            _ => {}
        }
    }
    (red, blue)
}

pub fn count_segment(
    g: &HeteroGraph,
    colors: &PoliticalColors,
    scope: &EdgeScope,
    products: &[NodeId],
) -> SegmentCounts {
    let mut c = SegmentCounts::default();
    for &p in products {
        let (red, blue) = political_endpoints(g, colors, scope, p);
        c.k += scope.degree(g, p) as u64;
        c.x += red + blue;
        c.x_red += red;
        if red > 0 && blue > 0 {
            c.o += 1;
        }
    }
    c.k_p = c.x;
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullMode {
    #[default]
    MonteCarlo,
    Exact,
}

impl fmt::Display for NullMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NullMode::MonteCarlo => "montecarlo",
            NullMode::Exact => "exact",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    pub scope: EdgeScope,
    pub replicates: usize,
    pub seed: u64,
    pub mode: NullMode,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            scope: EdgeScope::all(),
            replicates: 1000,
            seed: 0,
            mode: NullMode::MonteCarlo,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Polarization {
    pub expected: f64,
    pub variance: f64,
    pub observed: u64,
    /// `None` when the null variance is zero.
    pub z: Option<f64>,
    pub replicates: usize,
    pub seed: u64,
    pub mode: NullMode,
}

impl Polarization {
    pub fn is_degenerate(&self) -> bool {
        self.z.is_none()
    }
}

fn finish(expected: f64, variance: f64, observed: u64) -> Option<f64> {
    (variance > 0.0).then(|| (expected - observed as f64) / variance.sqrt())
}

/// Null distribution of the overlap for products with the given political
/// endpoint counts, drawn from a pool of `red` + `blue` endpoints.
pub fn overlap_null(
    draws_per_product: &[u64],
    red: u64,
    blue: u64,
    mode: NullMode,
    replicates: usize,
    seed: u64,
    exec: Execution,
) -> Result<(f64, f64), PolError> {
    if red == 0 || blue == 0 {
        return Err(PolError::NoColorPool);
    }
    let n: u64 = draws_per_product.iter().sum();
    if n > red + blue {
        return Err(PolError::PoolTooSmall {
            draws: n as usize,
            pool: red + blue,
        });
    }
    match mode {
        NullMode::Exact => exact_overlap(draws_per_product, red, blue),
        NullMode::MonteCarlo => {
            if replicates < 2 {
                return Err(PolError::TooFewReplicates);
            }
            Ok(monte_carlo_overlap(
                draws_per_product,
                red,
                blue,
                replicates,
                seed,
                exec,
            ))
        }
    }
}

fn falling(x: u64, k: u64) -> f64 {
    (0..k).map(|i| x.saturating_sub(i) as f64).product()
}

/// Enumerates all 2^n color sequences over the n endpoint slots. Population
/// variance, since this is the full distribution.
fn exact_overlap(draws: &[u64], red: u64, blue: u64) -> Result<(f64, f64), PolError> {
    let n: u64 = draws.iter().sum();
    if n as usize > EXACT_MAX_DRAWS {
        return Err(PolError::TooManyDraws {
            draws: n as usize,
            max: EXACT_MAX_DRAWS,
        });
    }
    let denom = falling(red + blue, n);
    let weight: Vec<f64> = (0..=n)
        .map(|r| falling(red, r) * falling(blue, n - r) / denom)
        .collect();
    let mut ranges = Vec::new();
    let mut start = 0u32;
    for &c in draws {
        if c >= 2 {
            ranges.push((start, (1u32 << c) - 1));
        }
        start += c as u32;
    }
    let (mut e1, mut e2) = (0.0, 0.0);
    for mask in 0u32..(1u32 << n) {
        let w = weight[mask.count_ones() as usize];
        if w == 0.0 {
            continue;
        }
        let o = ranges
            .iter()
            .filter(|&&(s, full)| {
                let bits = (mask >> s) & full;
                bits != 0 && bits != full
            })
            .count() as f64;
        e1 += w * o;
        e2 += w * o * o;
    }
    Ok((e1, (e2 - e1 * e1).max(0.0)))
}

/// Replicate `i` uses its own ChaCha stream, so results do not depend on
/// scheduling. Unbiased sample variance.
fn monte_carlo_overlap(
    draws: &[u64],
    red: u64,
    blue: u64,
    replicates: usize,
    seed: u64,
    exec: Execution,
) -> (f64, f64) {
    let active: Vec<u64> = draws.iter().copied().filter(|&c| c > 0).collect();
    let overlaps = par::map_range(exec, replicates, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let (mut r_left, mut left) = (red, red + blue);
        let mut o = 0u64;
        for &c in &active {
            let mut got_red = 0;
            for _ in 0..c {
                if rng.gen_range(0..left) < r_left {
                    r_left -= 1;
                    got_red += 1;
                }
                left -= 1;
            }
            if got_red > 0 && got_red < c {
                o += 1;
            }
        }
        o
    });
    let n = overlaps.len() as f64;
    let mean = overlaps.iter().sum::<u64>() as f64 / n;
    let ss: f64 = overlaps.iter().map(|&o| (o as f64 - mean).powi(2)).sum();
    (mean, ss / (n - 1.0))
}

pub fn polarization(
    g: &HeteroGraph,
    colors: &PoliticalColors,
    products: &[NodeId],
    totals: &GlobalPoliticalTotals,
    cfg: &MetricsConfig,
    exec: Execution,
) -> Result<Polarization, PolError> {
    let mut draws = Vec::with_capacity(products.len());
    let mut observed = 0;
    for &p in products {
        let (red, blue) = political_endpoints(g, colors, &cfg.scope, p);
        draws.push(red + blue);
        if red > 0 && blue > 0 {
            observed += 1;
        }
    }
    let (expected, variance) = overlap_null(
        &draws,
        totals.k_red,
        totals.k_blue,
        cfg.mode,
        cfg.replicates,
        cfg.seed,
        exec,
    )?;
    Ok(Polarization {
        expected,
        variance,
        observed,
        z: finish(expected, variance, observed),
        replicates: if cfg.mode == NullMode::Exact { 0 } else { cfg.replicates },
        seed: cfg.seed,
        mode: cfg.mode,
    })
}

/// How a segment's products are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    MainCategory(String),
    BigCategory(String),
    Products(Vec<String>),
    /// Whole-word, case-insensitive title match on any keyword.
    Keywords(Vec<String>),
}

impl Segment {
    pub fn label(&self) -> String {
        match self {
            Segment::MainCategory(c) => format!("main:{c}"),
            Segment::BigCategory(c) => format!("big:{c}"),
            Segment::Products(p) => format!("products:{}", p.len()),
            Segment::Keywords(k) => format!("keywords:{}", k.join("|")),
        }
    }

    pub fn resolve(&self, g: &HeteroGraph) -> Vec<NodeId> {
        let products = g.nodes_of_kind(NodeKind::Product);
        match self {
            Segment::MainCategory(c) => products
                .filter(|&p| g.node(p).attrs.main_category.as_deref() == Some(c))
                .collect(),
            Segment::BigCategory(c) => products
                .filter(|&p| g.node(p).attrs.big_category.as_deref() == Some(c))
                .collect(),
            Segment::Products(keys) => {
                let mut ids: Vec<NodeId> = keys.iter().filter_map(|k| g.node_id(NodeKind::Product, k)).collect();
                ids.sort_unstable();
                ids.dedup();
                ids
            }
            Segment::Keywords(words) => {
                let res: Vec<Regex> = words
                    .iter()
                    .map(|w| Regex::new(&format!(r"(?i)\b{}\b", regex::escape(w.trim()))).unwrap())
                    .collect();
                products
                    .filter(|&p| {
                        g.node(p)
                            .attrs
                            .name
                            .as_deref()
                            .is_some_and(|t| res.iter().any(|re| re.is_match(t)))
                    })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoryLevel {
    Main,
    Big,
}

/// Products grouped by category; products without one fall under "Other".
pub fn partition_by_category(g: &HeteroGraph, level: CategoryLevel) -> BTreeMap<String, Vec<NodeId>> {
    let mut out: BTreeMap<String, Vec<NodeId>> = BTreeMap::new();
    for p in g.nodes_of_kind(NodeKind::Product) {
        let a = &g.node(p).attrs;
        let cat = match level {
            CategoryLevel::Main => a.main_category.as_deref(),
            CategoryLevel::Big => a.big_category.as_deref(),
        };
        out.entry(cat.unwrap_or(crate::ingest::OTHER).to_string())
            .or_default()
            .push(p);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoliticsReport {
    pub segment: String,
    pub products: usize,
    pub counts: SegmentCounts,
    pub relevance: f64,
    pub alignment: f64,
    pub polarization: Polarization,
}

pub fn segment_report(
    g: &HeteroGraph,
    colors: &PoliticalColors,
    name: &str,
    products: &[NodeId],
    totals: &GlobalPoliticalTotals,
    cfg: &MetricsConfig,
    exec: Execution,
) -> Result<PoliticsReport, PolError> {
    if products.is_empty() {
        return Err(PolError::EmptySegment(name.to_string()));
    }
    let counts = count_segment(g, colors, &cfg.scope, products);
    Ok(PoliticsReport {
        segment: name.to_string(),
        products: products.len(),
        relevance: relevance(&counts, totals)?,
        alignment: alignment(&counts, totals)?,
        polarization: polarization(g, colors, products, totals, cfg, exec)?,
        counts,
    })
}

/// Reports for every named segment, evaluated in parallel, in input order.
pub fn segment_reports(
    g: &HeteroGraph,
    colors: &PoliticalColors,
    segments: &[(String, Vec<NodeId>)],
    totals: &GlobalPoliticalTotals,
    cfg: &MetricsConfig,
    exec: Execution,
) -> Result<Vec<PoliticsReport>, PolError> {
    par::map_slice(exec, segments, |(name, products)| {
        segment_report(g, colors, name, products, totals, cfg, exec)
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuthorPolitics {
    pub counts: SegmentCounts,
    pub relevance: f64,
    pub alignment: f64,
}

/// Relevance and alignment of an author's reviewing behavior.
pub fn author_politics(
    author: NodeId,
    g: &HeteroGraph,
    colors: &PoliticalColors,
    totals: &GlobalPoliticalTotals,
) -> Result<AuthorPolitics, PolError> {
    if (author as usize) >= g.node_count() || g.kind(author) != NodeKind::Author {
        return Err(PolError::IsolatedAuthor(author));
    }
    let reviewed = g.neighbors(author, EdgeKind::Reviews);
    if reviewed.is_empty() {
        return Err(PolError::IsolatedAuthor(author));
    }
    let mut c = SegmentCounts {
        k: reviewed.len() as u64,
        ..Default::default()
    };
    for &p in reviewed {
        match colors.get(p) {
            Some(PoliticalClass::Conservative) => {
                c.x += 1;
                c.x_red += 1;
            }
            Some(PoliticalClass::Liberal) => c.x += 1,
            _ => {}
        }
    }
    c.k_p = c.x;
    Ok(AuthorPolitics {
        counts: c,
        relevance: relevance(&c, totals)?,
        alignment: alignment(&c, totals)?,
    })
}

#[derive(Serialize)]
struct ReportRow<'a> {
    segment: &'a str,
    products: usize,
    x: u64,
    k: u64,
    x_red: u64,
    k_p: u64,
    relevance: f64,
    alignment: f64,
    z: Option<f64>,
    expected_overlap: f64,
    var_overlap: f64,
    observed_overlap: u64,
    mode: String,
    replicates: usize,
    seed: u64,
}

pub fn write_reports_csv<W: Write>(w: W, reports: &[PoliticsReport]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in reports {
        out.serialize(ReportRow {
            segment: &r.segment,
            products: r.products,
            x: r.counts.x,
            k: r.counts.k,
            x_red: r.counts.x_red,
            k_p: r.counts.k_p,
            relevance: r.relevance,
            alignment: r.alignment,
            z: r.polarization.z,
            expected_overlap: r.polarization.expected,
            var_overlap: r.polarization.variance,
            observed_overlap: r.polarization.observed,
            mode: r.polarization.mode.to_string(),
            replicates: r.polarization.replicates,
            seed: r.polarization.seed,
        })?;
    }
    out.flush()?;
    Ok(())
}

impl fmt::Display for PoliticsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = &self.polarization;
        let z = p.z.map_or("degenerate".to_string(), |z| format!("{z:.4}"));
        write!(
            f,
            "{:<28} relevance {:.4}  alignment {:.4}  polarization {}  (E[O] {:.3}, var {:.3}, o {})",
            self.segment, self.relevance, self.alignment, z, p.expected, p.variance, p.observed
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hetgraph::{GraphBuilder, PoliticalLabel};

    const P: GlobalPoliticalTotals = GlobalPoliticalTotals::PAPER;

    fn counts(x: u64, k: u64, x_red: u64) -> SegmentCounts {
        SegmentCounts {
            x,
            k,
            x_red,
            k_p: x,
            o: 0,
        }
    }

    #[test]
    fn priors_at_zero_counts() {
        let c = SegmentCounts::default();
        assert!((relevance(&c, &P).unwrap() - 0.013134).abs() < 1e-6);
        assert!((alignment(&c, &P).unwrap() - 0.65023).abs() < 1e-5);
    }

    #[test]
    fn hand_arithmetic() {
        let prior = 2_796_590.0 / 212_929_627.0;
        let want = (100.0 + 302.3 * prior) / 1302.3;
        let got = relevance(&counts(100, 1000, 0), &P).unwrap();
        assert!((got - want).abs() < 1e-12);
        assert!((got - 0.07984).abs() < 1e-5);
    }

    #[test]
    fn symmetric_pool_balanced_alignment() {
        let g = GlobalPoliticalTotals {
            d: 10.0,
            k_political: 20,
            m: 100,
            k_red: 10,
            k_blue: 10,
        };
        assert_eq!(alignment(&counts(8, 50, 4), &g).unwrap(), 0.5);
    }

    #[test]
    fn nonpositive_prior_rejected() {
        let g = P.with_d(0.0);
        assert!(matches!(
            relevance(&SegmentCounts::default(), &g),
            Err(PolError::InvalidPrior(_))
        ));
    }

    #[test]
    fn shrinkage_limit() {
        let g = P.with_d(1e12);
        let c = counts(900, 1000, 10);
        assert!((relevance(&c, &g).unwrap() - g.relevance_prior()).abs() < 1e-8);
        assert!((alignment(&c, &g).unwrap() - g.alignment_prior()).abs() < 1e-8);
    }

    /// A–r1, A–r2, B–b1, B–b2.
    fn fixture() -> (HeteroGraph, PoliticalColors) {
        let mut b = GraphBuilder::new();
        let ids: Vec<_> = ["A", "B", "r1", "r2", "b1", "b2"]
            .iter()
            .map(|k| b.add_node(NodeKind::Product, k))
            .collect();
        for (u, v) in [(0, 2), (0, 3), (1, 4), (1, 5)] {
            b.add_edge(ids[u], ids[v], EdgeKind::AlsoBought, None).unwrap();
        }
        let g = b.freeze();
        let mut labels = LabelStore::new();
        for k in ["r1", "r2"] {
            labels.offer(PoliticalLabel::seed(k, PoliticalClass::Conservative));
        }
        for k in ["b1", "b2"] {
            labels.offer(PoliticalLabel::seed(k, PoliticalClass::Liberal));
        }
        let colors = PoliticalColors::from_labels(&g, &labels);
        (g, colors)
    }

    #[test]
    fn exact_fixture() {
        let (g, colors) = fixture();
        let seg = vec![0, 1];
        let totals = GlobalPoliticalTotals::from_graph(&g, &colors, &EdgeScope::all(), std::slice::from_ref(&seg));
        assert_eq!((totals.k_red, totals.k_blue), (2, 2));
        let cfg = MetricsConfig {
            mode: NullMode::Exact,
            ..Default::default()
        };
        let p = polarization(&g, &colors, &seg, &totals, &cfg, Execution::Sequential).unwrap();
        assert_eq!(p.observed, 0);
        assert!((p.expected - 4.0 / 3.0).abs() < 1e-12);
        assert!((p.variance - 8.0 / 9.0).abs() < 1e-12);
        assert!((p.z.unwrap() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn exact_mode_rejects_large_segments() {
        let draws = vec![3; 7];
        assert!(matches!(
            overlap_null(&draws, 30, 30, NullMode::Exact, 0, 0, Execution::Sequential),
            Err(PolError::TooManyDraws { draws: 21, .. })
        ));
    }

    #[test]
    fn single_endpoint_products_are_degenerate() {
        let (e, v) = overlap_null(&[1, 1, 1], 5, 5, NullMode::Exact, 0, 0, Execution::Sequential).unwrap();
        assert_eq!((e, v), (0.0, 0.0));
        assert_eq!(finish(e, v, 0), None);
    }

    #[test]
    fn monte_carlo_is_thread_independent() {
        let draws = [3, 2, 5, 1, 4];
        let a = overlap_null(&draws, 20, 15, NullMode::MonteCarlo, 500, 7, Execution::Sequential).unwrap();
        let b = overlap_null(&draws, 20, 15, NullMode::MonteCarlo, 500, 7, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn author_example() {
        let mut b = GraphBuilder::new();
        let a = b.add_node(NodeKind::Author, "a");
        let mut labels = LabelStore::new();
        for i in 0..10 {
            let p = b.add_node(NodeKind::Product, &format!("p{i}"));
            b.add_edge(a, p, EdgeKind::Reviews, None).ok();
            let class = match i {
                0..=2 => Some(PoliticalClass::Conservative),
                3 => Some(PoliticalClass::Liberal),
                _ => None,
            };
            if let Some(c) = class {
                labels.offer(PoliticalLabel::seed(&format!("p{i}"), c));
            }
        }
        let g = b.freeze();
        let colors = PoliticalColors::from_labels(&g, &labels);
        let r = author_politics(a, &g, &colors, &P).unwrap();
        assert_eq!((r.counts.x, r.counts.k, r.counts.x_red), (4, 10, 3));
        let want_rel = (4.0 + 302.3 * P.relevance_prior()) / 312.3;
        let want_ali = (3.0 + 302.3 * P.alignment_prior()) / 306.3;
        assert!((r.relevance - want_rel).abs() < 1e-12);
        assert!((r.alignment - want_ali).abs() < 1e-12);
        assert!(author_politics(1, &g, &colors, &P).is_err());
    }

    #[test]
    fn keyword_segments_match_whole_words() {
        let mut b = GraphBuilder::new();
        for (k, t) in [("a", "Gun Safety Handbook"), ("b", "Shotgun Wedding"), ("c", "GUN oil")] {
            let id = b.add_node(NodeKind::Product, k);
            b.attrs_mut(id).unwrap().name = Some(t.into());
        }
        let g = b.freeze();
        assert_eq!(Segment::Keywords(vec!["gun".into()]).resolve(&g), vec![0, 2]);
    }
}

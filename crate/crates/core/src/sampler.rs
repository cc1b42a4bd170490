//! Two-step breadth-first network sampling from political seed products,
//! and a co-purchase-only baseline for comparison.
//!
//! One wave from a frontier of products:
//!
//! * step 1: co-purchases of the frontier, then every reviewer of those
//!   co-purchased products;
//! * step 2: every reviewer of the frontier, the products those reviewers
//!   reviewed, and the co-purchases of those products.
//!
//! Later waves start from the products found so far.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::hetgraph::{EdgeKind, GraphBuilder, HeteroGraph, NodeKind, ReviewAttrs};
use crate::ingest::{CategoryMap, Corpus, ProductMeta, ReviewRecord};
use crate::par::{self, Execution};

/// Read access to a local review/metadata corpus.
pub trait CorpusAccess: Sync {
    /// Co-purchase neighbors over all four relations.
    fn co_purchases(&self, asin: &str) -> &[String];
    fn reviewers_of(&self, asin: &str) -> &[String];
    fn products_of(&self, reviewer: &str) -> &[String];
    fn meta(&self, asin: &str) -> Option<&ProductMeta>;
    fn review(&self, reviewer: &str, asin: &str) -> Option<&ReviewRecord>;
    fn contains_product(&self, asin: &str) -> bool;
}

/// Hash-indexed view over a parsed [`Corpus`]. Neighbor lists are sorted,
/// so traversal results do not depend on corpus line order.
pub struct InMemoryCorpus<'a> {
    corpus: &'a Corpus,
    meta: HashMap<&'a str, usize>,
    co_purchases: HashMap<&'a str, Vec<String>>,
    reviewers: HashMap<&'a str, Vec<String>>,
    products: HashMap<&'a str, Vec<String>>,
    reviews: HashMap<(&'a str, &'a str), usize>,
}

impl<'a> InMemoryCorpus<'a> {
    pub fn new(corpus: &'a Corpus) -> Self {
        let mut meta = HashMap::new();
        let mut co_purchases = HashMap::new();
        for (i, m) in corpus.products.iter().enumerate() {
            meta.insert(m.asin.as_str(), i);
            let mut list: Vec<String> = m.co_purchases().into_iter().map(String::from).collect();
            list.sort();
            co_purchases.insert(m.asin.as_str(), list);
        }
        let mut reviewers: HashMap<&str, Vec<String>> = HashMap::new();
        let mut products: HashMap<&str, Vec<String>> = HashMap::new();
        let mut reviews = HashMap::new();
        for (i, r) in corpus.reviews.iter().enumerate() {
            reviewers
                .entry(r.asin.as_str())
                .or_default()
                .push(r.reviewer_id.clone());
            products.entry(r.reviewer_id.as_str()).or_default().push(r.asin.clone());
            reviews.insert((r.reviewer_id.as_str(), r.asin.as_str()), i);
        }
        reviewers.values_mut().for_each(|v| v.sort());
        products.values_mut().for_each(|v| v.sort());
        InMemoryCorpus {
            corpus,
            meta,
            co_purchases,
            reviewers,
            products,
            reviews,
        }
    }
}

impl CorpusAccess for InMemoryCorpus<'_> {
    fn co_purchases(&self, asin: &str) -> &[String] {
        self.co_purchases.get(asin).map_or(&[], Vec::as_slice)
    }
    fn reviewers_of(&self, asin: &str) -> &[String] {
        self.reviewers.get(asin).map_or(&[], Vec::as_slice)
    }
    fn products_of(&self, reviewer: &str) -> &[String] {
        self.products.get(reviewer).map_or(&[], Vec::as_slice)
    }
    fn meta(&self, asin: &str) -> Option<&ProductMeta> {
        self.meta.get(asin).map(|&i| &self.corpus.products[i])
    }
    fn review(&self, reviewer: &str, asin: &str) -> Option<&ReviewRecord> {
        self.reviews.get(&(reviewer, asin)).map(|&i| &self.corpus.reviews[i])
    }
    fn contains_product(&self, asin: &str) -> bool {
        self.meta.contains_key(asin) || self.reviewers.contains_key(asin)
    }
}

/// Which products' co-purchases step 2 collects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step2Source {
    /// Products reviewed by the frontier's reviewers.
    #[default]
    ReviewedProducts,
    /// The frontier products themselves.
    FrontierProducts,
}

/// Products that seed the next wave.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NextFrontier {
    /// Every product discovered so far.
    #[default]
    Cumulative,
    /// Only products first discovered in the previous wave.
    NewOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleWavePlan {
    pub waves: u8,
    pub step2: Step2Source,
    pub next_frontier: NextFrontier,
}

impl Default for SampleWavePlan {
    fn default() -> Self {
        SampleWavePlan {
            waves: 2,
            step2: Step2Source::default(),
            next_frontier: NextFrontier::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct WaveCounts {
    pub step1_co_purchases: usize,
    pub step1_reviewers: usize,
    pub step2_reviewers: usize,
    pub step2_products: usize,
    pub products_total: usize,
    pub authors_total: usize,
    pub dangling_co_purchases: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WaveResult {
    pub products: BTreeSet<String>,
    pub authors: BTreeSet<String>,
    pub counts: WaveCounts,
}

fn union_lists<'c, F>(exec: Execution, keys: &[&str], f: F) -> BTreeSet<String>
where
    F: Fn(&str) -> &'c [String] + Sync + Send,
{
    par::map_slice(exec, keys, |k| f(k))
        .into_iter()
        .flatten()
        .cloned()
        .collect()
}

/// Expands one wave from `frontier`.
pub fn run_wave<C: CorpusAccess>(
    corpus: &C,
    frontier: &BTreeSet<String>,
    step2: Step2Source,
    exec: Execution,
) -> WaveResult {
    let front: Vec<&str> = frontier.iter().map(String::as_str).collect();

    let step1_products = union_lists(exec, &front, |a| corpus.co_purchases(a));
    let step1_keys: Vec<&str> = step1_products.iter().map(String::as_str).collect();
    let step1_reviewers = union_lists(exec, &step1_keys, |a| corpus.reviewers_of(a));

    let step2_reviewers = union_lists(exec, &front, |a| corpus.reviewers_of(a));
    let step2_products = match step2 {
        Step2Source::ReviewedProducts => {
            let rev_keys: Vec<&str> = step2_reviewers.iter().map(String::as_str).collect();
            let reviewed = union_lists(exec, &rev_keys, |r| corpus.products_of(r));
            let reviewed_keys: Vec<&str> = reviewed.iter().map(String::as_str).collect();
            let mut out = union_lists(exec, &reviewed_keys, |a| corpus.co_purchases(a));
            out.extend(reviewed);
            out
        }
        Step2Source::FrontierProducts => step1_products.clone(),
    };

    let mut products: BTreeSet<String> = frontier.clone();
    products.extend(step1_products.iter().cloned());
    products.extend(step2_products.iter().cloned());
    let mut authors = step1_reviewers.clone();
    authors.extend(step2_reviewers.iter().cloned());

    let dangling = products.iter().filter(|a| corpus.meta(a).is_none()).count();

    WaveResult {
        counts: WaveCounts {
            step1_co_purchases: step1_products.len(),
            step1_reviewers: step1_reviewers.len(),
            step2_reviewers: step2_reviewers.len(),
            step2_products: step2_products.len(),
            products_total: products.len(),
            authors_total: authors.len(),
            dangling_co_purchases: dangling,
        },
        products,
        authors,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SamplingReport {
    pub seeds_requested: usize,
    pub seeds_found: usize,
    pub waves: Vec<WaveCounts>,
    pub nodes: BTreeMap<String, usize>,
    pub edges: BTreeMap<String, usize>,
    pub products_without_metadata: usize,
    pub unknown_category_roots: usize,
    pub warnings: Vec<String>,
}

/// Runs every wave from `seeds` and materializes the sample as a graph with
/// metadata, brand and category nodes joined in.
pub fn run_plan<C: CorpusAccess>(
    corpus: &C,
    seeds: &[String],
    plan: &SampleWavePlan,
    categories: &CategoryMap,
    exec: Execution,
) -> (HeteroGraph, SamplingReport) {
    let mut report = SamplingReport {
        seeds_requested: seeds.len(),
        ..Default::default()
    };
    let seeds: BTreeSet<String> = seeds.iter().filter(|s| corpus.contains_product(s)).cloned().collect();
    report.seeds_found = seeds.len();
    if seeds.is_empty() {
        let msg = "no seed product found in corpus; sample is empty".to_string();
        log::warn!("{msg}");
        report.warnings.push(msg);
        return (GraphBuilder::new().freeze(), report);
    }

    let mut product_wave: BTreeMap<String, u8> = seeds.iter().map(|s| (s.clone(), 0)).collect();
    let mut author_wave: BTreeMap<String, u8> = BTreeMap::new();
    let mut frontier = seeds;
    for wave in 1..=plan.waves.max(1) {
        let result = run_wave(corpus, &frontier, plan.step2, exec);
        let mut fresh = BTreeSet::new();
        for p in &result.products {
            if !product_wave.contains_key(p) {
                product_wave.insert(p.clone(), wave);
                fresh.insert(p.clone());
            }
        }
        for a in &result.authors {
            author_wave.entry(a.clone()).or_insert(wave);
        }
        report.waves.push(result.counts);
        frontier = match plan.next_frontier {
            NextFrontier::Cumulative => product_wave.keys().cloned().collect(),
            NextFrontier::NewOnly => fresh,
        };
        if frontier.is_empty() {
            break;
        }
    }

    let g = materialize(corpus, &product_wave, &author_wave, categories, &mut report);
    (g, report)
}

fn materialize<C: CorpusAccess>(
    corpus: &C,
    product_wave: &BTreeMap<String, u8>,
    author_wave: &BTreeMap<String, u8>,
    categories: &CategoryMap,
    report: &mut SamplingReport,
) -> HeteroGraph {
    let mut b = GraphBuilder::new();
    let mut order: Vec<(u8, &str)> = product_wave.iter().map(|(k, &w)| (w, k.as_str())).collect();
    order.sort();
    for (wave, asin) in &order {
        let id = b.add_node(NodeKind::Product, asin);
        let attrs = b.attrs_mut(id).unwrap();
        attrs.wave = Some(*wave);
        match corpus.meta(asin) {
            Some(m) => {
                if !m.title.is_empty() {
                    attrs.name = Some(m.title.clone());
                }
                attrs.price = m.price;
                attrs.sales_rank = m.sales_rank.values().min().copied();
                let r = categories.regroup(&m.categories);
                if !r.known {
                    report.unknown_category_roots += 1;
                }
                attrs.main_category = Some(r.main);
                attrs.big_category = Some(r.big);
            }
            None => report.products_without_metadata += 1,
        }
    }
    let mut authors: Vec<(u8, &str)> = author_wave.iter().map(|(k, &w)| (w, k.as_str())).collect();
    authors.sort();
    for (wave, key) in &authors {
        let id = b.add_node(NodeKind::Author, key);
        b.attrs_mut(id).unwrap().wave = Some(*wave);
    }

    for (_, reviewer) in &authors {
        let a = b.node_id(NodeKind::Author, reviewer).unwrap();
        for asin in corpus.products_of(reviewer) {
            let Some(p) = b.node_id(NodeKind::Product, asin) else {
                continue;
            };
            let r = corpus.review(reviewer, asin).expect("indexed review");
            let attrs = ReviewAttrs {
                rating: r.overall,
                helpful_up: r.helpful.0,
                helpful_total: r.helpful.1,
                unix_time: r.unix_time,
                moral: None,
            };
            b.add_edge(a, p, EdgeKind::Reviews, Some(attrs))
                .expect("author-product review edge");
        }
    }

    for (_, asin) in &order {
        let Some(m) = corpus.meta(asin) else { continue };
        let p = b.node_id(NodeKind::Product, asin).unwrap();
        for (kind, list) in &m.related {
            for other in list {
                if let Some(q) = b.node_id(NodeKind::Product, other) {
                    b.add_edge(p, q, kind.edge_kind(), None).expect("product-product edge");
                }
            }
        }
        if let Some(brand) = &m.brand {
            let br = b.add_node(NodeKind::Brand, brand);
            b.attrs_mut(br).unwrap().name = Some(brand.clone());
            b.add_edge(p, br, EdgeKind::HasBrand, None).unwrap();
        }
        for path in &m.categories {
            let key = path.join(" > ");
            let c = b.add_node(NodeKind::Category, &key);
            b.attrs_mut(c).unwrap().name = path.last().cloned();
            b.add_edge(p, c, EdgeKind::InCategory, None).unwrap();
        }
    }

    // Average rating over sampled reviews.
    let g = b.freeze();
    let mut b = g.thaw();
    for p in g.nodes_of_kind(NodeKind::Product) {
        let ratings: Vec<f64> = g
            .neighbors(p, EdgeKind::Reviews)
            .iter()
            .filter_map(|&a| g.review(a, p))
            .map(|r| r.rating as f64)
            .collect();
        if !ratings.is_empty() {
            b.attrs_mut(p).unwrap().avg_rating = Some(ratings.iter().sum::<f64>() / ratings.len() as f64);
        }
    }
    let g = b.freeze();
    for kind in NodeKind::ALL {
        report
            .nodes
            .insert(kind.as_str().to_string(), g.nodes_of_kind(kind).count());
    }
    for kind in EdgeKind::ALL {
        report.edges.insert(kind.as_str().to_string(), g.edge_count(kind));
    }
    g
}

/// Breadth-first search over co-purchase links only; each wave is one hop.
pub fn bipartite_baseline<C: CorpusAccess>(
    corpus: &C,
    seeds: &[String],
    waves: u8,
    exec: Execution,
) -> BTreeSet<String> {
    let mut reached: BTreeSet<String> = seeds.iter().filter(|s| corpus.contains_product(s)).cloned().collect();
    let mut frontier = reached.clone();
    for _ in 0..waves.max(1) {
        let keys: Vec<&str> = frontier.iter().map(String::as_str).collect();
        let next = union_lists(exec, &keys, |a| corpus.co_purchases(a));
        frontier = next.difference(&reached).cloned().collect();
        if frontier.is_empty() {
            break;
        }
        reached.extend(frontier.iter().cloned());
    }
    reached
}

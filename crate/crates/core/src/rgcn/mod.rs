//! Relational graph convolutional classifier over the author/product
//! subgraph.
//!
//! Three relations carry messages: author to reviewed product, product to
//! reviewing author, and product to related product (co-purchase and
//! co-review links). Each layer computes
//!
//! ```text
//! h'_i = act( sum_r mean_{j in N_r(i)} h_j W_r  +  h_i W_0 )
//! ```
//!
//! with leaky-ReLU on hidden layers and a softmax head. Nodes have no input
//! features; every node owns a learned embedding row.

mod checkpoint;
mod review;
mod train;

use std::collections::HashMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hetgraph::{EdgeKind, HeteroGraph, NodeId, NodeKind, PoliticalClass};
use crate::par::{self, Execution};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use review::{
    accept_labels, candidates, hitl_iterate, lifestyle_logit, lifestyle_probability, lifestyle_score, threshold_curve,
    write_curve_csv, write_scores_csv, Candidates, HitlOutcome, IterationReport, Verdict, VerdictRejection,
};
pub use train::{
    hyperparameter_search, stratified_split, targets_from_labels, train, EpochMetrics, Range, SearchSpace, Split,
    Target, TrainOutcome, Trial,
};

pub const RELATIONS: usize = 3;

#[derive(Debug, Error)]
pub enum RgcnError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("node {0:?} is not in the training graph")]
    UnknownNode(String),
    #[error("model was trained on a different graph view")]
    ViewMismatch,
    #[error("split error: {0}")]
    Split(String),
    #[error("loss became non-finite at epoch {epoch}")]
    Diverged { epoch: usize, last_good: Box<RgcnModel> },
    #[error("no scores to evaluate")]
    EmptyScores,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Gd,
    /// Heavy-ball momentum, coefficient 0.9.
    #[default]
    Momentum,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RgcnConfig {
    pub layers: usize,
    pub hidden: usize,
    pub dropout: f64,
    pub lr: f64,
    pub clip: f64,
    pub l2: f64,
    pub epochs: usize,
    pub leaky_slope: f64,
    pub classes: usize,
    /// Train, validation and test fractions.
    pub split: [f64; 3],
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for RgcnConfig {
    fn default() -> Self {
        RgcnConfig::paper_preset()
    }
}

impl RgcnConfig {
    pub fn paper_preset() -> Self {
        RgcnConfig {
            layers: 3,
            hidden: 19,
            dropout: 0.68,
            lr: 0.05,
            clip: 3.358,
            l2: 1.66e-7,
            epochs: 100,
            leaky_slope: 0.01,
            classes: 2,
            split: [0.8, 0.1, 0.1],
            seed: 0,
            optimizer: Optimizer::Momentum,
        }
    }

    pub fn validate(&self) -> Result<(), RgcnError> {
        let bad = |m: &str| Err(RgcnError::InvalidConfig(m.to_string()));
        if self.layers == 0 {
            return bad("layers must be at least 1");
        }
        if self.hidden == 0 {
            return bad("hidden units must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if !(self.lr > 0.0) || !(self.clip > 0.0) || !(self.l2 >= 0.0) {
            return bad("lr and clip must be positive, l2 non-negative");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(2..=3).contains(&self.classes) {
            return bad("classes must be 2 or 3");
        }
        let s: f64 = self.split.iter().sum();
        if self.split.iter().any(|&f| f < 0.0) || (s - 1.0).abs() > 1e-9 || self.split[0] <= 0.0 {
            return bad("split fractions must be non-negative and sum to 1");
        }
        Ok(())
    }

    pub fn class_list(&self) -> &'static [PoliticalClass] {
        &PoliticalClass::ALL[..self.classes]
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        (0..self.layers)
            .map(|l| {
                let out = if l + 1 == self.layers {
                    self.classes
                } else {
                    self.hidden
                };
                (self.hidden, out)
            })
            .collect()
    }
}

/// In-neighbor lists per target node.
#[derive(Debug, Clone, Default)]
struct Adjacency {
    offsets: Vec<usize>,
    sources: Vec<u32>,
}

impl Adjacency {
    fn from_lists(lists: Vec<Vec<u32>>) -> Self {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        offsets.push(0);
        let mut sources = Vec::new();
        for l in lists {
            sources.extend(l);
            offsets.push(sources.len());
        }
        Adjacency { offsets, sources }
    }

    fn row(&self, i: usize) -> &[u32] {
        &self.sources[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Transpose carrying the mean-normalization weight of each message.
    fn transpose(&self) -> WeightedAdjacency {
        let n = self.offsets.len() - 1;
        let mut lists: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        for i in 0..n {
            let row = self.row(i);
            let w = 1.0 / row.len().max(1) as f64;
            for &j in row {
                lists[j as usize].push((i as u32, w));
            }
        }
        let mut offsets = vec![0];
        let mut entries = Vec::new();
        for l in lists {
            entries.extend(l);
            offsets.push(entries.len());
        }
        WeightedAdjacency { offsets, entries }
    }
}

#[derive(Debug, Clone, Default)]
struct WeightedAdjacency {
    offsets: Vec<usize>,
    entries: Vec<(u32, f64)>,
}

/// Author and product nodes of a graph with the three message relations.
#[derive(Debug, Clone)]
pub struct RelationalView {
    nodes: Vec<NodeId>,
    keys: Vec<(NodeKind, String)>,
    local: HashMap<NodeId, u32>,
    product_index: HashMap<String, u32>,
    rel: [Adjacency; RELATIONS],
    rel_t: [WeightedAdjacency; RELATIONS],
}

impl RelationalView {
    /// Authors and products, optionally only those sampled in waves up to
    /// `max_wave` (nodes without a wave are kept).
    pub fn from_graph(g: &HeteroGraph, max_wave: Option<u8>) -> Self {
        let keep = |v: NodeId| {
            let n = g.node(v);
            matches!(n.kind, NodeKind::Author | NodeKind::Product)
                && match (max_wave, n.attrs.wave) {
                    (Some(m), Some(w)) => w <= m,
                    _ => true,
                }
        };
        let nodes: Vec<NodeId> = (0..g.node_count() as NodeId).filter(|&v| keep(v)).collect();
        let local: HashMap<NodeId, u32> = nodes.iter().enumerate().map(|(i, &v)| (v, i as u32)).collect();
        let keys: Vec<(NodeKind, String)> = nodes.iter().map(|&v| (g.kind(v), g.key(v).to_string())).collect();
        let product_index = keys
            .iter()
            .enumerate()
            .filter(|(_, (k, _))| *k == NodeKind::Product)
            .map(|(i, (_, key))| (key.clone(), i as u32))
            .collect();
        let map = |v: NodeId, kinds: &[EdgeKind], want: NodeKind| -> Vec<u32> {
            if g.kind(v) != want {
                return Vec::new();
            }
            let mut out: Vec<u32> = kinds
                .iter()
                .flat_map(|&k| g.neighbors(v, k).iter())
                .filter_map(|u| local.get(u).copied())
                .collect();
            out.sort_unstable();
            out.dedup();
            out
        };
        let related: Vec<EdgeKind> = EdgeKind::ALL.into_iter().filter(|k| k.is_product_relation()).collect();
        let author_to_product = Adjacency::from_lists(
            nodes
                .iter()
                .map(|&v| map(v, &[EdgeKind::Reviews], NodeKind::Product))
                .collect(),
        );
        let product_to_author = Adjacency::from_lists(
            nodes
                .iter()
                .map(|&v| map(v, &[EdgeKind::Reviews], NodeKind::Author))
                .collect(),
        );
        let product_to_product =
            Adjacency::from_lists(nodes.iter().map(|&v| map(v, &related, NodeKind::Product)).collect());
        let rel = [author_to_product, product_to_author, product_to_product];
        let rel_t = [rel[0].transpose(), rel[1].transpose(), rel[2].transpose()];
        RelationalView {
            nodes,
            keys,
            local,
            product_index,
            rel,
            rel_t,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn local(&self, v: NodeId) -> Option<u32> {
        self.local.get(&v).copied()
    }

    pub fn graph_id(&self, i: u32) -> NodeId {
        self.nodes[i as usize]
    }

    pub fn key(&self, i: u32) -> &str {
        &self.keys[i as usize].1
    }

    pub fn kind(&self, i: u32) -> NodeKind {
        self.keys[i as usize].0
    }

    pub fn products(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.len() as u32).filter(|&i| self.kind(i) == NodeKind::Product)
    }

    pub fn product(&self, asin: &str) -> Option<u32> {
        self.product_index.get(asin).copied()
    }

    fn aggregate(&self, r: usize, h: &Array2<f64>, exec: Execution) -> Array2<f64> {
        let (n, w) = h.dim();
        let h = h.as_standard_layout();
        let hs = h.as_slice().unwrap();
        let adj = &self.rel[r];
        let mut out = vec![0.0; n * w];
        par::for_each_row_mut(exec, &mut out, w, |i, row| {
            let src = adj.row(i);
            if src.is_empty() {
                return;
            }
            for &j in src {
                let hj = &hs[j as usize * w..(j as usize + 1) * w];
                row.iter_mut().zip(hj).for_each(|(o, x)| *o += x);
            }
            let s = 1.0 / src.len() as f64;
            row.iter_mut().for_each(|o| *o *= s);
        });
        Array2::from_shape_vec((n, w), out).unwrap()
    }

    /// Adjoint of [`Self::aggregate`].
    fn scatter(&self, r: usize, g: &Array2<f64>, exec: Execution) -> Array2<f64> {
        let (n, w) = g.dim();
        let g = g.as_standard_layout();
        let gs = g.as_slice().unwrap();
        let adj = &self.rel_t[r];
        let mut out = vec![0.0; n * w];
        par::for_each_row_mut(exec, &mut out, w, |j, row| {
            for &(i, wt) in &adj.entries[adj.offsets[j]..adj.offsets[j + 1]] {
                let gi = &gs[i as usize * w..(i as usize + 1) * w];
                row.iter_mut().zip(gi).for_each(|(o, x)| *o += wt * x);
            }
        });
        Array2::from_shape_vec((n, w), out).unwrap()
    }
}

/// Embeddings plus per-layer self and relation weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub embedding: Array2<f64>,
    pub self_w: Vec<Array2<f64>>,
    pub rel_w: Vec<[Array2<f64>; RELATIONS]>,
}

impl Params {
    pub fn init(n: usize, cfg: &RgcnConfig, rng: &mut ChaCha8Rng) -> Params {
        let e = 1.0 / (cfg.hidden as f64).sqrt();
        let embedding = Array2::from_shape_fn((n, cfg.hidden), |_| rng.gen_range(-e..=e));
        let mut glorot = |(i, o): (usize, usize)| {
            let a = (6.0 / (i + o) as f64).sqrt();
            Array2::from_shape_fn((i, o), |_| rng.gen_range(-a..=a))
        };
        let dims = cfg.layer_dims();
        let self_w = dims.iter().map(|&d| glorot(d)).collect();
        let rel_w = dims.iter().map(|&d| [glorot(d), glorot(d), glorot(d)]).collect();
        Params {
            embedding,
            self_w,
            rel_w,
        }
    }

    pub fn zeros_like(&self) -> Params {
        let z = |a: &Array2<f64>| Array2::zeros(a.dim());
        Params {
            embedding: z(&self.embedding),
            self_w: self.self_w.iter().map(z).collect(),
            rel_w: self.rel_w.iter().map(|r| [z(&r[0]), z(&r[1]), z(&r[2])]).collect(),
        }
    }

    /// Embedding first, then per layer: self weight and the three relations.
    pub fn tensors(&self) -> Vec<&Array2<f64>> {
        let mut v = vec![&self.embedding];
        for (s, r) in self.self_w.iter().zip(&self.rel_w) {
            v.push(s);
            v.extend(r.iter());
        }
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut v = vec![&mut self.embedding];
        for (s, r) in self.self_w.iter_mut().zip(self.rel_w.iter_mut()) {
            v.push(s);
            v.extend(r.iter_mut());
        }
        v
    }

    pub fn sq_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .map(|t| t.iter().map(|x| x * x).sum::<f64>())
            .sum()
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RgcnModel {
    pub config: RgcnConfig,
    pub params: Params,
    /// Node keys of the view the model was trained on, in local order.
    pub keys: Vec<(NodeKind, String)>,
    pub history: Vec<EpochMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassScore {
    pub node: NodeId,
    pub key: String,
    /// Indexed by class order: conservative, liberal, nonpolitical.
    pub probs: Vec<f64>,
    pub class: PoliticalClass,
    pub max_prob: f64,
}

impl ClassScore {
    pub fn prob(&self, c: PoliticalClass) -> f64 {
        self.probs.get(c.index()).copied().unwrap_or(0.0)
    }

    /// P(conservative) relative to P(conservative) + P(liberal).
    pub fn conservative_share(&self) -> f64 {
        let (c, l) = (
            self.prob(PoliticalClass::Conservative),
            self.prob(PoliticalClass::Liberal),
        );
        if c + l > 0.0 {
            c / (c + l)
        } else {
            0.5
        }
    }

    /// Shannon entropy of the class distribution.
    pub fn entropy(&self) -> f64 {
        -self.probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }
}

pub(crate) struct Cache {
    inputs: Vec<Array2<f64>>,
    aggs: Vec<[Array2<f64>; RELATIONS]>,
    pre: Vec<Array2<f64>>,
    masks: Vec<Option<Array2<f64>>>,
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

pub(crate) fn forward_pass(
    params: &Params,
    view: &RelationalView,
    cfg: &RgcnConfig,
    mut dropout: Option<&mut ChaCha8Rng>,
    exec: Execution,
) -> (Array2<f64>, Cache) {
    let layers = params.self_w.len();
    let mut cache = Cache {
        inputs: Vec::with_capacity(layers),
        aggs: Vec::with_capacity(layers),
        pre: Vec::with_capacity(layers),
        masks: Vec::with_capacity(layers),
    };
    let mut h = params.embedding.clone();
    for l in 0..layers {
        let aggs = [0, 1, 2].map(|r| view.aggregate(r, &h, exec));
        let mut z = h.dot(&params.self_w[l]);
        for r in 0..RELATIONS {
            z += &aggs[r].dot(&params.rel_w[l][r]);
        }
        cache.inputs.push(h);
        cache.aggs.push(aggs);
        if l + 1 == layers {
            cache.pre.push(z.clone());
            cache.masks.push(None);
            return (z, cache);
        }
        let mut a = z.mapv(|x| leaky(x, cfg.leaky_slope));
        let mask = match (dropout.as_deref_mut(), cfg.dropout > 0.0) {
            (Some(rng), true) => {
                let keep = 1.0 - cfg.dropout;
                let m = Array2::from_shape_fn(a.dim(), |_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 });
                a *= &m;
                Some(m)
            }
            _ => None,
        };
        cache.pre.push(z);
        cache.masks.push(mask);
        h = a;
    }
    unreachable!("at least one layer")
}

pub(crate) fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|x| (x - m).exp());
        let s = row.sum();
        row.mapv_inplace(|x| x / s);
    }
    p
}

/// Mean cross-entropy over `targets` plus `l2 * |params|^2`.
pub fn objective(params: &Params, view: &RelationalView, targets: &[Target], cfg: &RgcnConfig, exec: Execution) -> f64 {
    let (logits, _) = forward_pass(params, view, cfg, None, exec);
    cross_entropy(&logits, targets) + cfg.l2 * params.sq_norm()
}

pub(crate) fn cross_entropy(logits: &Array2<f64>, targets: &[Target]) -> f64 {
    if targets.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for t in targets {
        let row = logits.row(t.node as usize);
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        total += lse - row[t.class];
    }
    total / targets.len() as f64
}

/// Objective value and its analytic gradient. With `dropout` set, a fresh
/// mask is drawn from the generator.
pub fn gradient(
    params: &Params,
    view: &RelationalView,
    targets: &[Target],
    cfg: &RgcnConfig,
    dropout: Option<&mut ChaCha8Rng>,
    exec: Execution,
) -> (f64, Params) {
    let (logits, cache) = forward_pass(params, view, cfg, dropout, exec);
    let loss = cross_entropy(&logits, targets) + cfg.l2 * params.sq_norm();
    let probs = softmax_rows(&logits);
    let mut dz = Array2::<f64>::zeros(logits.dim());
    let scale = 1.0 / targets.len().max(1) as f64;
    for t in targets {
        let i = t.node as usize;
        for c in 0..dz.ncols() {
            let y = if c == t.class { 1.0 } else { 0.0 };
            dz[[i, c]] += (probs[[i, c]] - y) * scale;
        }
    }

    let mut grad = params.zeros_like();
    let layers = params.self_w.len();
    for l in (0..layers).rev() {
        let h = &cache.inputs[l];
        grad.self_w[l] = h.t().dot(&dz);
        let mut dh = dz.dot(&params.self_w[l].t());
        for r in 0..RELATIONS {
            grad.rel_w[l][r] = cache.aggs[l][r].t().dot(&dz);
            let g = dz.dot(&params.rel_w[l][r].t());
            dh += &view.scatter(r, &g, exec);
        }
        if l == 0 {
            grad.embedding = dh;
        } else {
            if let Some(m) = &cache.masks[l - 1] {
                dh *= m;
            }
            let z = &cache.pre[l - 1];
            ndarray::Zip::from(&mut dh)
                .and(z)
                .for_each(|d, &x| *d *= if x > 0.0 { 1.0 } else { cfg.leaky_slope });
            dz = dh;
        }
    }
    if cfg.l2 > 0.0 {
        for (g, p) in grad.tensors_mut().into_iter().zip(params.tensors()) {
            g.scaled_add(2.0 * cfg.l2, p);
        }
    }
    (loss, grad)
}

fn check_view(model: &RgcnModel, view: &RelationalView) -> Result<(), RgcnError> {
    if model.keys.len() != view.len() || model.keys != view.keys {
        return Err(RgcnError::ViewMismatch);
    }
    Ok(())
}

fn scores_from(
    view: &RelationalView,
    probs: &Array2<f64>,
    rows: &[u32],
    classes: &[PoliticalClass],
) -> Vec<ClassScore> {
    rows.iter()
        .map(|&i| {
            let p: Vec<f64> = probs.row(i as usize).to_vec();
            let (arg, &max_prob) =
                p.iter().enumerate().fold(
                    (0, &f64::NEG_INFINITY),
                    |best, (k, v)| if *v > *best.1 { (k, v) } else { best },
                );
            ClassScore {
                node: view.graph_id(i),
                key: view.key(i).to_string(),
                probs: p,
                class: classes[arg],
                max_prob,
            }
        })
        .collect()
}

/// Class scores for the given graph nodes, dropout off.
pub fn forward(
    model: &RgcnModel,
    view: &RelationalView,
    nodes: &[NodeId],
    exec: Execution,
) -> Result<Vec<ClassScore>, RgcnError> {
    check_view(model, view)?;
    let rows = nodes
        .iter()
        .map(|&v| view.local(v).ok_or_else(|| RgcnError::UnknownNode(v.to_string())))
        .collect::<Result<Vec<u32>, _>>()?;
    let (logits, _) = forward_pass(&model.params, view, &model.config, None, exec);
    Ok(scores_from(
        view,
        &softmax_rows(&logits),
        &rows,
        model.config.class_list(),
    ))
}

/// Class scores for every product in the view.
pub fn predict_products(
    model: &RgcnModel,
    view: &RelationalView,
    exec: Execution,
) -> Result<Vec<ClassScore>, RgcnError> {
    check_view(model, view)?;
    let (logits, _) = forward_pass(&model.params, view, &model.config, None, exec);
    let rows: Vec<u32> = view.products().collect();
    Ok(scores_from(
        view,
        &softmax_rows(&logits),
        &rows,
        model.config.class_list(),
    ))
}

pub(crate) fn new_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::hetgraph::GraphBuilder;

    pub(crate) fn tiny_graph() -> HeteroGraph {
        // Authors a0..a2, products p0..p6; a few reviews and related links.
        let mut b = GraphBuilder::new();
        let a: Vec<_> = (0..3).map(|i| b.add_node(NodeKind::Author, &format!("a{i}"))).collect();
        let p: Vec<_> = (0..7)
            .map(|i| b.add_node(NodeKind::Product, &format!("p{i}")))
            .collect();
        for (ai, pi) in [(0, 0), (0, 1), (1, 1), (1, 2), (2, 3), (2, 5), (0, 6)] {
            b.add_edge(a[ai], p[pi], EdgeKind::Reviews, None).unwrap();
        }
        for (x, y, k) in [
            (0, 1, EdgeKind::AlsoBought),
            (1, 2, EdgeKind::BoughtTogether),
            (3, 4, EdgeKind::CoReview),
            (4, 5, EdgeKind::AlsoViewed),
            (0, 1, EdgeKind::AlsoViewed),
        ] {
            b.add_edge(p[x], p[y], k, None).unwrap();
        }
        let brand = b.add_node(NodeKind::Brand, "acme");
        b.add_edge(p[0], brand, EdgeKind::HasBrand, None).unwrap();
        b.freeze()
    }

    #[test]
    fn view_excludes_brands_and_dedups_relations() {
        let g = tiny_graph();
        let v = RelationalView::from_graph(&g, None);
        assert_eq!(v.len(), 10);
        let p0 = v.local(g.node_id(NodeKind::Product, "p0").unwrap()).unwrap();
        let p1 = v.local(g.node_id(NodeKind::Product, "p1").unwrap()).unwrap();
        assert_eq!(v.rel[2].row(p0 as usize), &[p1]);
        assert_eq!(v.rel[0].row(p1 as usize).len(), 2);
        assert!(v.rel[1].row(p1 as usize).is_empty());
    }

    #[test]
    fn zero_weights_give_uniform_probabilities() {
        let g = tiny_graph();
        let v = RelationalView::from_graph(&g, None);
        let cfg = RgcnConfig {
            hidden: 4,
            ..RgcnConfig::paper_preset()
        };
        let mut params = Params::init(v.len(), &cfg, &mut new_rng(1, 0));
        for t in params.tensors_mut().into_iter().skip(1) {
            t.fill(0.0);
        }
        let (logits, _) = forward_pass(&params, &v, &cfg, None, Execution::Sequential);
        let p = softmax_rows(&logits);
        assert!(p.iter().all(|&x| (x - 0.5).abs() < 1e-15));
    }

    #[test]
    fn hand_computed_two_node_forward() {
        // a0 reviews p0; one layer, 1-d embeddings, 2 classes.
        let mut b = GraphBuilder::new();
        let a = b.add_node(NodeKind::Author, "a");
        let p = b.add_node(NodeKind::Product, "p");
        b.add_edge(a, p, EdgeKind::Reviews, None).unwrap();
        let g = b.freeze();
        let v = RelationalView::from_graph(&g, None);
        let cfg = RgcnConfig {
            layers: 1,
            hidden: 1,
            dropout: 0.0,
            ..RgcnConfig::paper_preset()
        };
        let w = |x: f64, y: f64| Array2::from_shape_vec((1, 2), vec![x, y]).unwrap();
        let params = Params {
            embedding: Array2::from_shape_vec((2, 1), vec![2.0, 3.0]).unwrap(),
            self_w: vec![w(1.0, 0.0)],
            rel_w: vec![[w(0.0, 1.0), w(0.5, 0.5), w(9.0, 9.0)]],
        };
        let (z, _) = forward_pass(&params, &v, &cfg, None, Execution::Sequential);
        // author: self 2*(1,0) + product->author 3*(0.5,0.5) = (3.5, 1.5)
        // product: self 3*(1,0) + author->product 2*(0,1) = (3, 2)
        assert_eq!(z.row(0).to_vec(), vec![3.5, 1.5]);
        assert_eq!(z.row(1).to_vec(), vec![3.0, 2.0]);
    }

    #[test]
    fn isolated_node_sees_only_itself() {
        let mut b = GraphBuilder::new();
        b.add_node(NodeKind::Product, "solo");
        let g = b.freeze();
        let v = RelationalView::from_graph(&g, None);
        let cfg = RgcnConfig {
            hidden: 3,
            dropout: 0.0,
            ..RgcnConfig::paper_preset()
        };
        let params = Params::init(1, &cfg, &mut new_rng(3, 0));
        let mut changed = params.clone();
        for r in changed.rel_w.iter_mut().flat_map(|r| r.iter_mut()) {
            r.mapv_inplace(|x| x * 7.0 + 1.0);
        }
        let (a, _) = forward_pass(&params, &v, &cfg, None, Execution::Sequential);
        let (b, _) = forward_pass(&changed, &v, &cfg, None, Execution::Sequential);
        assert_eq!(a, b);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let g = tiny_graph();
        let v = RelationalView::from_graph(&g, None);
        let cfg = RgcnConfig {
            hidden: 4,
            dropout: 0.0,
            l2: 1e-3,
            ..RgcnConfig::paper_preset()
        };
        let params = Params::init(v.len(), &cfg, &mut new_rng(11, 0));
        let targets: Vec<Target> = [(3, 0), (4, 1), (8, 0), (9, 1)]
            .iter()
            .map(|&(node, class)| Target { node, class })
            .collect();
        let (_, grad) = gradient(&params, &v, &targets, &cfg, None, Execution::Parallel);
        let eps = 1e-6;
        let mut worst: f64 = 0.0;
        let n_tensors = params.tensors().len();
        for t in 0..n_tensors {
            let len = params.tensors()[t].len();
            for k in 0..len {
                let mut plus = params.clone();
                let mut minus = params.clone();
                plus.tensors_mut()[t].as_slice_mut().unwrap()[k] += eps;
                minus.tensors_mut()[t].as_slice_mut().unwrap()[k] -= eps;
                let fd = (objective(&plus, &v, &targets, &cfg, Execution::Sequential)
                    - objective(&minus, &v, &targets, &cfg, Execution::Sequential))
                    / (2.0 * eps);
                let an = grad.tensors()[t].as_slice().unwrap()[k];
                let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn config_validation() {
        assert!(RgcnConfig::paper_preset().validate().is_ok());
        for bad in [
            RgcnConfig {
                layers: 0,
                ..Default::default()
            },
            RgcnConfig {
                dropout: 1.0,
                ..Default::default()
            },
            RgcnConfig {
                classes: 4,
                ..Default::default()
            },
            RgcnConfig {
                split: [0.5, 0.1, 0.1],
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}

//! Typed heterogeneous market graph.
//!
//! Nodes are authors, products, brands and categories; edges are undirected
//! and typed by [`EdgeKind`]. Graphs are assembled through a [`GraphBuilder`]
//! (single writer) and then frozen into a [`HeteroGraph`] whose per-kind
//! adjacency is stored as sorted CSR neighbor lists.

mod augment;
mod export;
mod kcore;
mod labels;
mod snapshot;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::MoralVector;

pub use augment::{augment_coreview, AugmentReport};
pub use export::{write_edge_list, write_node_table};
pub use kcore::{k_core, k_core_mask};
pub use labels::{LabelMerge, LabelStore, PoliticalClass, PoliticalLabel, Provenance};
pub use snapshot::{snapshot_load, snapshot_save, SnapshotError, SNAPSHOT_VERSION};

pub type NodeId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    Author,
    Product,
    Brand,
    Category,
}

impl NodeKind {
    pub const ALL: [NodeKind; 4] = [NodeKind::Author, NodeKind::Product, NodeKind::Brand, NodeKind::Category];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Author => "author",
            NodeKind::Product => "product",
            NodeKind::Brand => "brand",
            NodeKind::Category => "category",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<NodeKind> {
        NodeKind::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeKind {
    Reviews,
    BoughtTogether,
    AlsoBought,
    BoughtAfterViewing,
    AlsoViewed,
    CoReview,
    HasBrand,
    InCategory,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 8] = [
        EdgeKind::Reviews,
        EdgeKind::BoughtTogether,
        EdgeKind::AlsoBought,
        EdgeKind::BoughtAfterViewing,
        EdgeKind::AlsoViewed,
        EdgeKind::CoReview,
        EdgeKind::HasBrand,
        EdgeKind::InCategory,
    ];

    /// The four platform recommendation relations.
    pub const CO_PURCHASE: [EdgeKind; 4] = [
        EdgeKind::BoughtTogether,
        EdgeKind::AlsoBought,
        EdgeKind::BoughtAfterViewing,
        EdgeKind::AlsoViewed,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Legal endpoint kinds, as an unordered pair.
    pub fn endpoints(self) -> (NodeKind, NodeKind) {
        match self {
            EdgeKind::Reviews => (NodeKind::Author, NodeKind::Product),
            EdgeKind::HasBrand => (NodeKind::Product, NodeKind::Brand),
            EdgeKind::InCategory => (NodeKind::Product, NodeKind::Category),
            _ => (NodeKind::Product, NodeKind::Product),
        }
    }

    pub fn is_co_purchase(self) -> bool {
        EdgeKind::CO_PURCHASE.contains(&self)
    }

    /// Product–product relations (co-purchase kinds plus co-review).
    pub fn is_product_relation(self) -> bool {
        self.is_co_purchase() || self == EdgeKind::CoReview
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Reviews => "reviews",
            EdgeKind::BoughtTogether => "bought_together",
            EdgeKind::AlsoBought => "also_bought",
            EdgeKind::BoughtAfterViewing => "buy_after_viewing",
            EdgeKind::AlsoViewed => "also_viewed",
            EdgeKind::CoReview => "co_review",
            EdgeKind::HasBrand => "has_brand",
            EdgeKind::InCategory => "in_category",
        }
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EdgeKind {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EdgeKind::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| GraphError::UnknownEdgeKind(s.to_string()))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
    #[error("{kind} edge cannot join {left} and {right}")]
    EndpointMismatch {
        kind: EdgeKind,
        left: NodeKind,
        right: NodeKind,
    },
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("review attributes are only valid on reviews edges")]
    AttrsOnNonReview,
    #[error("invalid review attributes: {0}")]
    InvalidReview(String),
    #[error("unknown edge kind {0:?}")]
    UnknownEdgeKind(String),
}

/// Node attributes. Everything is optional because authors carry almost
/// nothing and brand/category nodes carry only a name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeAttrs {
    pub name: Option<String>,
    pub main_category: Option<String>,
    pub big_category: Option<String>,
    pub avg_rating: Option<f64>,
    pub sales_rank: Option<u64>,
    pub price: Option<f64>,
    /// Sampling wave in which the node was first reached (0 = seed).
    pub wave: Option<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub kind: NodeKind,
    pub key: String,
    pub attrs: NodeAttrs,
}

/// Attributes carried by a `Reviews` edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewAttrs {
    pub rating: u8,
    pub helpful_up: u32,
    pub helpful_total: u32,
    pub unix_time: i64,
    pub moral: Option<MoralVector>,
}

impl ReviewAttrs {
    fn validate(&self) -> Result<(), GraphError> {
        if !(1..=5).contains(&self.rating) {
            return Err(GraphError::InvalidReview(format!("rating {}", self.rating)));
        }
        if self.helpful_up > self.helpful_total {
            return Err(GraphError::InvalidReview(format!(
                "helpful {}/{}",
                self.helpful_up, self.helpful_total
            )));
        }
        Ok(())
    }
}

/// Outcome of [`GraphBuilder::add_edge`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeInsert {
    Inserted,
    Duplicate,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct Csr {
    pub(crate) offsets: Vec<usize>,
    pub(crate) targets: Vec<NodeId>,
}

impl Csr {
    fn from_lists(lists: &[Vec<NodeId>]) -> Csr {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        let mut targets = Vec::with_capacity(lists.iter().map(Vec::len).sum());
        offsets.push(0);
        for list in lists {
            targets.extend_from_slice(list);
            offsets.push(targets.len());
        }
        Csr { offsets, targets }
    }

    fn neighbors(&self, v: NodeId) -> &[NodeId] {
        let v = v as usize;
        if v + 1 >= self.offsets.len() {
            return &[];
        }
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }
}

/// Mutable construction side of the graph.
#[derive(Debug, Clone, Default)]
pub struct GraphBuilder {
    nodes: Vec<Node>,
    index: HashMap<(NodeKind, String), NodeId>,
    lists: Vec<Vec<Vec<NodeId>>>,
    reviews: BTreeMap<(NodeId, NodeId), ReviewAttrs>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        GraphBuilder {
            lists: vec![Vec::new(); EdgeKind::ALL.len()],
            ..Default::default()
        }
    }

    /// Returns the id for `(kind, key)`, inserting the node on first sight.
    /// Ids are dense and assigned in first-seen order.
    pub fn add_node(&mut self, kind: NodeKind, key: &str) -> NodeId {
        if let Some(&id) = self.index.get(&(kind, key.to_string())) {
            return id;
        }
        let id = self.nodes.len() as NodeId;
        self.nodes.push(Node {
            kind,
            key: key.to_string(),
            attrs: NodeAttrs::default(),
        });
        self.index.insert((kind, key.to_string()), id);
        for lists in &mut self.lists {
            lists.push(Vec::new());
        }
        id
    }

    pub fn node_id(&self, kind: NodeKind, key: &str) -> Option<NodeId> {
        self.index.get(&(kind, key.to_string())).copied()
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(id as usize)
    }

    pub fn attrs_mut(&mut self, id: NodeId) -> Option<&mut NodeAttrs> {
        self.nodes.get_mut(id as usize).map(|n| &mut n.attrs)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn review_attrs_mut(&mut self, author: NodeId, product: NodeId) -> Option<&mut ReviewAttrs> {
        self.reviews.get_mut(&(author, product))
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId, kind: EdgeKind) -> bool {
        self.lists[kind.index()]
            .get(u as usize)
            .is_some_and(|l| l.binary_search(&v).is_ok())
    }

    /// Inserts the undirected edge `u–v`. A repeated insert leaves the graph
    /// unchanged and reports [`EdgeInsert::Duplicate`].
    pub fn add_edge(
        &mut self,
        u: NodeId,
        v: NodeId,
        kind: EdgeKind,
        attrs: Option<ReviewAttrs>,
    ) -> Result<EdgeInsert, GraphError> {
        let ku = self.node(u).ok_or(GraphError::UnknownNode(u))?.kind;
        let kv = self.node(v).ok_or(GraphError::UnknownNode(v))?.kind;
        let (a, b) = kind.endpoints();
        if !((ku == a && kv == b) || (ku == b && kv == a)) {
            return Err(GraphError::EndpointMismatch {
                kind,
                left: ku,
                right: kv,
            });
        }
        if u == v {
            return Err(GraphError::SelfLoop(u));
        }
        if attrs.is_some() && kind != EdgeKind::Reviews {
            return Err(GraphError::AttrsOnNonReview);
        }
        if let Some(a) = &attrs {
            a.validate()?;
        }
        let lists = &mut self.lists[kind.index()];
        match lists[u as usize].binary_search(&v) {
            Ok(_) => return Ok(EdgeInsert::Duplicate),
            Err(pos) => lists[u as usize].insert(pos, v),
        }
        if let Err(pos) = lists[v as usize].binary_search(&u) {
            lists[v as usize].insert(pos, u);
        }
        if let Some(a) = attrs {
            let key = if ku == NodeKind::Author { (u, v) } else { (v, u) };
            self.reviews.insert(key, a);
        }
        Ok(EdgeInsert::Inserted)
    }

    pub fn freeze(self) -> HeteroGraph {
        let adj = self.lists.iter().map(|l| Csr::from_lists(l)).collect();
        HeteroGraph {
            nodes: self.nodes,
            index: self.index,
            adj,
            reviews: self.reviews,
        }
    }
}

/// Frozen heterogeneous graph. Immutable and `Sync`, so read-parallel
/// algorithms can share it freely.
#[derive(Debug, Clone, PartialEq)]
pub struct HeteroGraph {
    nodes: Vec<Node>,
    index: HashMap<(NodeKind, String), NodeId>,
    adj: Vec<Csr>,
    reviews: BTreeMap<(NodeId, NodeId), ReviewAttrs>,
}

impl Default for HeteroGraph {
    fn default() -> Self {
        GraphBuilder::new().freeze()
    }
}

impl HeteroGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id as usize]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn kind(&self, id: NodeId) -> NodeKind {
        self.nodes[id as usize].kind
    }

    pub fn key(&self, id: NodeId) -> &str {
        &self.nodes[id as usize].key
    }

    pub fn node_id(&self, kind: NodeKind, key: &str) -> Option<NodeId> {
        self.index.get(&(kind, key.to_string())).copied()
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(move |(_, n)| n.kind == kind)
            .map(|(i, _)| i as NodeId)
    }

    pub fn neighbors(&self, v: NodeId, kind: EdgeKind) -> &[NodeId] {
        self.adj[kind.index()].neighbors(v)
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId, kind: EdgeKind) -> bool {
        self.neighbors(u, kind).binary_search(&v).is_ok()
    }

    pub fn degree(&self, v: NodeId, kind: EdgeKind) -> usize {
        self.neighbors(v, kind).len()
    }

    /// Degree summed over all edge kinds.
    pub fn total_degree(&self, v: NodeId) -> usize {
        EdgeKind::ALL.iter().map(|&k| self.degree(v, k)).sum()
    }

    pub fn edge_count(&self, kind: EdgeKind) -> usize {
        self.adj[kind.index()].targets.len() / 2
    }

    pub fn total_edge_count(&self) -> usize {
        EdgeKind::ALL.iter().map(|&k| self.edge_count(k)).sum()
    }

    /// Undirected edges of `kind`, each reported once with `u < v`.
    pub fn edges(&self, kind: EdgeKind) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.node_count() as NodeId).flat_map(move |u| {
            self.neighbors(u, kind)
                .iter()
                .copied()
                .filter(move |&v| u < v)
                .map(move |v| (u, v))
        })
    }

    pub fn review(&self, author: NodeId, product: NodeId) -> Option<&ReviewAttrs> {
        self.reviews.get(&(author, product))
    }

    pub fn reviews(&self) -> impl Iterator<Item = (&(NodeId, NodeId), &ReviewAttrs)> {
        self.reviews.iter()
    }

    /// Re-opens the graph for construction, keeping ids.
    pub fn thaw(&self) -> GraphBuilder {
        let lists = self
            .adj
            .iter()
            .map(|csr| {
                (0..self.node_count() as NodeId)
                    .map(|v| csr.neighbors(v).to_vec())
                    .collect()
            })
            .collect();
        GraphBuilder {
            nodes: self.nodes.clone(),
            index: self.index.clone(),
            lists,
            reviews: self.reviews.clone(),
        }
    }

    /// Subgraph induced by nodes with `keep[v]`. Surviving nodes keep their
    /// relative order, so ids are re-densified deterministically.
    pub fn induced_subgraph(&self, keep: &[bool]) -> HeteroGraph {
        assert_eq!(keep.len(), self.node_count());
        let mut remap = vec![NodeId::MAX; self.node_count()];
        let mut nodes = Vec::new();
        let mut index = HashMap::new();
        for (old, node) in self.nodes.iter().enumerate() {
            if keep[old] {
                let id = nodes.len() as NodeId;
                remap[old] = id;
                index.insert((node.kind, node.key.clone()), id);
                nodes.push(node.clone());
            }
        }
        let adj = self
            .adj
            .iter()
            .map(|csr| {
                let lists: Vec<Vec<NodeId>> = (0..self.node_count())
                    .filter(|&old| keep[old])
                    .map(|old| {
                        csr.neighbors(old as NodeId)
                            .iter()
                            .filter(|&&n| keep[n as usize])
                            .map(|&n| remap[n as usize])
                            .collect()
                    })
                    .collect();
                Csr::from_lists(&lists)
            })
            .collect();
        let reviews = self
            .reviews
            .iter()
            .filter(|((a, p), _)| keep[*a as usize] && keep[*p as usize])
            .map(|((a, p), r)| ((remap[*a as usize], remap[*p as usize]), r.clone()))
            .collect();
        HeteroGraph {
            nodes,
            index,
            adj,
            reviews,
        }
    }
}

/// Which degree to histogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegreeOf {
    Kind(EdgeKind),
    All,
}

/// Histogram degree → node count. Nodes with no incident edge of the
/// requested kind land in bin 0.
pub fn degree_distribution(g: &HeteroGraph, which: DegreeOf) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for v in 0..g.node_count() as NodeId {
        let d = match which {
            DegreeOf::Kind(k) => g.degree(v, k),
            DegreeOf::All => g.total_degree(v),
        };
        *hist.entry(d).or_insert(0) += 1;
    }
    hist
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn products(b: &mut GraphBuilder, n: usize) -> Vec<NodeId> {
        (0..n)
            .map(|i| b.add_node(NodeKind::Product, &format!("p{i}")))
            .collect()
    }

    pub(crate) fn triangle() -> HeteroGraph {
        let mut b = GraphBuilder::new();
        let p = products(&mut b, 3);
        b.add_edge(p[0], p[1], EdgeKind::BoughtTogether, None).unwrap();
        b.add_edge(p[1], p[2], EdgeKind::AlsoBought, None).unwrap();
        b.add_edge(p[2], p[0], EdgeKind::AlsoViewed, None).unwrap();
        b.freeze()
    }

    fn review(rating: u8) -> ReviewAttrs {
        ReviewAttrs {
            rating,
            helpful_up: 0,
            helpful_total: 0,
            unix_time: 0,
            moral: None,
        }
    }

    #[test]
    fn review_edge_is_symmetric() {
        let mut b = GraphBuilder::new();
        let a = b.add_node(NodeKind::Author, "a");
        let p = b.add_node(NodeKind::Product, "p");
        assert_eq!(
            b.add_edge(a, p, EdgeKind::Reviews, Some(review(5))),
            Ok(EdgeInsert::Inserted)
        );
        let g = b.freeze();
        assert_eq!(g.neighbors(a, EdgeKind::Reviews), &[p]);
        assert_eq!(g.neighbors(p, EdgeKind::Reviews), &[a]);
        assert_eq!(g.review(a, p).unwrap().rating, 5);
    }

    #[test]
    fn reversed_review_endpoints_store_author_first() {
        let mut b = GraphBuilder::new();
        let a = b.add_node(NodeKind::Author, "a");
        let p = b.add_node(NodeKind::Product, "p");
        b.add_edge(p, a, EdgeKind::Reviews, Some(review(3))).unwrap();
        assert_eq!(b.freeze().review(a, p).unwrap().rating, 3);
    }

    #[test]
    fn duplicate_insert_is_flagged() {
        let mut b = GraphBuilder::new();
        let p = products(&mut b, 2);
        b.add_edge(p[0], p[1], EdgeKind::BoughtTogether, None).unwrap();
        assert_eq!(
            b.add_edge(p[1], p[0], EdgeKind::BoughtTogether, None),
            Ok(EdgeInsert::Duplicate)
        );
        let g = b.freeze();
        assert_eq!(g.edge_count(EdgeKind::BoughtTogether), 1);
    }

    #[test]
    fn same_pair_different_kinds_are_distinct_edges() {
        let mut b = GraphBuilder::new();
        let p = products(&mut b, 2);
        b.add_edge(p[0], p[1], EdgeKind::BoughtTogether, None).unwrap();
        b.add_edge(p[0], p[1], EdgeKind::AlsoViewed, None).unwrap();
        let g = b.freeze();
        assert_eq!(g.total_degree(p[0]), 2);
    }

    #[test]
    fn endpoint_rules() {
        let mut b = GraphBuilder::new();
        let a = b.add_node(NodeKind::Author, "a");
        let c = b.add_node(NodeKind::Author, "b");
        let p = b.add_node(NodeKind::Product, "p");
        let br = b.add_node(NodeKind::Brand, "acme");
        assert!(matches!(
            b.add_edge(a, c, EdgeKind::Reviews, None),
            Err(GraphError::EndpointMismatch { .. })
        ));
        assert!(matches!(
            b.add_edge(a, p, EdgeKind::HasBrand, None),
            Err(GraphError::EndpointMismatch { .. })
        ));
        assert_eq!(b.add_edge(br, p, EdgeKind::HasBrand, None), Ok(EdgeInsert::Inserted));
        assert_eq!(
            b.add_edge(p, 99, EdgeKind::AlsoBought, None),
            Err(GraphError::UnknownNode(99))
        );
        assert_eq!(
            b.add_edge(p, p, EdgeKind::AlsoBought, None),
            Err(GraphError::SelfLoop(p))
        );
        let q = b.add_node(NodeKind::Product, "q");
        assert_eq!(
            b.add_edge(p, q, EdgeKind::AlsoBought, Some(review(4))),
            Err(GraphError::AttrsOnNonReview)
        );
        assert!(matches!(
            b.add_edge(a, q, EdgeKind::Reviews, Some(review(7))),
            Err(GraphError::InvalidReview(_))
        ));
    }

    #[test]
    fn ids_are_first_seen_and_keys_are_per_kind() {
        let mut b = GraphBuilder::new();
        let x = b.add_node(NodeKind::Brand, "Books");
        let y = b.add_node(NodeKind::Category, "Books");
        assert_eq!((x, y), (0, 1));
        assert_eq!(b.add_node(NodeKind::Brand, "Books"), 0);
        let g = b.freeze();
        assert_eq!(g.node_id(NodeKind::Category, "Books"), Some(1));
    }

    #[test]
    fn degree_histograms() {
        let tri = triangle();
        assert_eq!(degree_distribution(&tri, DegreeOf::All), BTreeMap::from([(2, 3)]));
        assert_eq!(
            degree_distribution(&tri, DegreeOf::Kind(EdgeKind::BoughtTogether)),
            BTreeMap::from([(0, 1), (1, 2)])
        );
        let empty = HeteroGraph::default();
        assert!(degree_distribution(&empty, DegreeOf::All).is_empty());
    }

    #[test]
    fn induced_subgraph_remaps() {
        let tri = triangle();
        let sub = tri.induced_subgraph(&[true, false, true]);
        assert_eq!(sub.node_count(), 2);
        assert_eq!(sub.key(1), "p2");
        assert_eq!(sub.neighbors(0, EdgeKind::AlsoViewed), &[1]);
        assert_eq!(sub.total_edge_count(), 1);
    }

    #[test]
    fn thaw_freeze_identity() {
        let tri = triangle();
        assert_eq!(tri.thaw().freeze(), tri);
    }

    #[test]
    fn edge_kind_names_round_trip() {
        for k in EdgeKind::ALL {
            assert_eq!(k.as_str().parse::<EdgeKind>().unwrap(), k);
        }
    }
}

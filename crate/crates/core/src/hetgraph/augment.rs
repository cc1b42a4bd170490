use std::collections::BTreeSet;

use serde::Serialize;

use super::{EdgeKind, HeteroGraph, NodeId, NodeKind};
use crate::par::{self, Execution};

/// Pair count above which a single reviewer triggers a warning.
const PAIR_WARNING: usize = 10_000;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AugmentReport {
    pub edges_added: usize,
    pub reviewers_processed: usize,
    pub reviewers_skipped: usize,
    pub pairs_considered: usize,
    pub pairs_with_co_purchase: usize,
}

/// Adds a `CoReview` edge between every pair of products sharing a reviewer,
/// unless one of the co-purchase kinds already joins the pair.
///
/// Reviewers whose review count exceeds `max_reviewer_degree` are skipped and
/// counted. Existing edges are never removed.
pub fn augment_coreview(
    g: &HeteroGraph,
    max_reviewer_degree: Option<usize>,
    exec: Execution,
) -> (HeteroGraph, AugmentReport) {
    let authors: Vec<NodeId> = g.nodes_of_kind(NodeKind::Author).collect();
    let mut report = AugmentReport::default();

    let per_author: Vec<Option<(usize, usize, Vec<(NodeId, NodeId)>)>> = par::map_slice(exec, &authors, |&a| {
        let reviewed = g.neighbors(a, EdgeKind::Reviews);
        if max_reviewer_degree.is_some_and(|cap| reviewed.len() > cap) {
            return None;
        }
        let pairs = reviewed.len() * reviewed.len().saturating_sub(1) / 2;
        if pairs > PAIR_WARNING {
            log::warn!(
                "reviewer {} yields {pairs} product pairs; consider a degree cap",
                g.key(a)
            );
        }
        let mut blocked = 0;
        let mut out = Vec::new();
        for (i, &p) in reviewed.iter().enumerate() {
            for &q in &reviewed[i + 1..] {
                if EdgeKind::CO_PURCHASE.iter().any(|&k| g.has_edge(p, q, k)) {
                    blocked += 1;
                } else if !g.has_edge(p, q, EdgeKind::CoReview) {
                    out.push((p, q));
                }
            }
        }
        Some((pairs, blocked, out))
    });

    let mut new_edges = BTreeSet::new();
    for entry in per_author {
        match entry {
            None => report.reviewers_skipped += 1,
            Some((pairs, blocked, out)) => {
                report.reviewers_processed += 1;
                report.pairs_considered += pairs;
                report.pairs_with_co_purchase += blocked;
                new_edges.extend(out);
            }
        }
    }

    let mut b = g.thaw();
    for (p, q) in new_edges {
        if b.add_edge(p, q, EdgeKind::CoReview, None)
            .expect("product pair is a legal co-review edge")
            == super::EdgeInsert::Inserted
        {
            report.edges_added += 1;
        }
    }
    (b.freeze(), report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hetgraph::tests::products;
    use crate::hetgraph::GraphBuilder;

    fn reviewer_of(b: &mut GraphBuilder, name: &str, ps: &[NodeId]) -> NodeId {
        let a = b.add_node(NodeKind::Author, name);
        for &p in ps {
            b.add_edge(a, p, EdgeKind::Reviews, None).unwrap();
        }
        a
    }

    #[test]
    fn single_pair_gains_an_edge() {
        let mut b = GraphBuilder::new();
        let p = products(&mut b, 2);
        reviewer_of(&mut b, "a", &p);
        let (g, rep) = augment_coreview(&b.freeze(), None, Execution::Sequential);
        assert_eq!(rep.edges_added, 1);
        assert!(g.has_edge(p[0], p[1], EdgeKind::CoReview));
        assert!(g.has_edge(p[1], p[0], EdgeKind::CoReview));
    }

    #[test]
    fn existing_co_purchase_suppresses() {
        let mut b = GraphBuilder::new();
        let p = products(&mut b, 2);
        reviewer_of(&mut b, "a", &p);
        b.add_edge(p[0], p[1], EdgeKind::BoughtTogether, None).unwrap();
        let (_, rep) = augment_coreview(&b.freeze(), None, Execution::Parallel);
        assert_eq!(rep.edges_added, 0);
        assert_eq!(rep.pairs_with_co_purchase, 1);
    }

    #[test]
    fn four_products_yield_six_pairs() {
        let mut b = GraphBuilder::new();
        let p = products(&mut b, 4);
        reviewer_of(&mut b, "a", &p);
        reviewer_of(&mut b, "b", &p[..2]);
        let g0 = b.freeze();
        let (g, rep) = augment_coreview(&g0, None, Execution::Parallel);
        assert_eq!(rep.edges_added, 6);
        assert_eq!(g.edge_count(EdgeKind::CoReview), 6);
        assert_eq!(g.total_edge_count(), g0.total_edge_count() + 6);
    }

    #[test]
    fn cap_skips_heavy_reviewers() {
        let mut b = GraphBuilder::new();
        let p = products(&mut b, 4);
        reviewer_of(&mut b, "heavy", &p);
        reviewer_of(&mut b, "light", &p[..2]);
        let (_, rep) = augment_coreview(&b.freeze(), Some(3), Execution::Sequential);
        assert_eq!(rep.reviewers_skipped, 1);
        assert_eq!(rep.edges_added, 1);
    }

    #[test]
    fn rerun_adds_nothing() {
        let mut b = GraphBuilder::new();
        let p = products(&mut b, 3);
        reviewer_of(&mut b, "a", &p);
        let (g1, _) = augment_coreview(&b.freeze(), None, Execution::Parallel);
        let (g2, rep) = augment_coreview(&g1, None, Execution::Parallel);
        assert_eq!(rep.edges_added, 0);
        assert_eq!(g1, g2);
    }
}

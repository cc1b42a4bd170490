use std::sync::atomic::{AtomicBool, AtomicU32, Ordering};

use super::{EdgeKind, HeteroGraph, NodeId};
use crate::par::{self, Execution};

/// Membership mask of the k-core, with degree summed over every edge kind.
///
/// Peels in rounds: every node under `k` is removed at once and its
/// neighbors' degrees are decremented. A node joins the next round exactly
/// when its degree crosses from `k` to `k - 1`. The surviving set is the
/// unique maximal k-core, so the result does not depend on scheduling.
pub fn k_core_mask(g: &HeteroGraph, k: usize, exec: Execution) -> Vec<bool> {
    let n = g.node_count();
    let k = k.max(1) as u32;
    let degree: Vec<AtomicU32> = par::map_range(exec, n, |v| AtomicU32::new(g.total_degree(v as NodeId) as u32));
    let alive: Vec<AtomicBool> = (0..n).map(|_| AtomicBool::new(true)).collect();

    let mut frontier: Vec<NodeId> = (0..n as NodeId)
        .filter(|&v| degree[v as usize].load(Ordering::Relaxed) < k)
        .collect();

    while !frontier.is_empty() {
        for &v in &frontier {
            alive[v as usize].store(false, Ordering::Relaxed);
        }
        let next: Vec<Vec<NodeId>> = par::map_slice(exec, &frontier, |&v| {
            let mut dropped = Vec::new();
            for kind in EdgeKind::ALL {
                for &u in g.neighbors(v, kind) {
                    if !alive[u as usize].load(Ordering::Relaxed) {
                        continue;
                    }
                    if degree[u as usize].fetch_sub(1, Ordering::Relaxed) == k {
                        dropped.push(u);
                    }
                }
            }
            dropped
        });
        frontier = next.into_iter().flatten().collect();
    }
    alive.into_iter().map(AtomicBool::into_inner).collect()
}

/// Maximal induced subgraph in which every node has total degree `>= k`.
pub fn k_core(g: &HeteroGraph, k: usize, exec: Execution) -> HeteroGraph {
    g.induced_subgraph(&k_core_mask(g, k, exec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hetgraph::tests::{products, triangle};
    use crate::hetgraph::GraphBuilder;

    #[test]
    fn triangle_is_its_own_two_core() {
        let g = triangle();
        assert_eq!(k_core(&g, 2, Execution::Sequential).node_count(), 3);
        assert_eq!(k_core(&g, 3, Execution::Parallel).node_count(), 0);
    }

    #[test]
    fn star_peels_completely() {
        let mut b = GraphBuilder::new();
        let p = products(&mut b, 6);
        for &leaf in &p[1..] {
            b.add_edge(p[0], leaf, EdgeKind::AlsoBought, None).unwrap();
        }
        let g = b.freeze();
        assert_eq!(k_core(&g, 2, Execution::Parallel).node_count(), 0);
        assert_eq!(k_core(&g, 1, Execution::Parallel).node_count(), 6);
    }

    #[test]
    fn parallel_edges_of_different_kinds_both_count() {
        let mut b = GraphBuilder::new();
        let p = products(&mut b, 2);
        b.add_edge(p[0], p[1], EdgeKind::AlsoBought, None).unwrap();
        b.add_edge(p[0], p[1], EdgeKind::AlsoViewed, None).unwrap();
        let g = b.freeze();
        assert_eq!(k_core(&g, 2, Execution::Sequential).node_count(), 2);
    }

    #[test]
    fn empty_graph() {
        let g = HeteroGraph::default();
        assert_eq!(k_core(&g, 5, Execution::Parallel).node_count(), 0);
    }
}

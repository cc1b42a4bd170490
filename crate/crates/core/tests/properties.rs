use polimarket::hetgraph::{
    k_core, k_core_mask, snapshot_load, snapshot_save, GraphBuilder, LabelStore, PoliticalClass, PoliticalLabel,
    ReviewAttrs,
};
use polimarket::ingest::{clean_text, partial_ratio};
use polimarket::par::Execution;
use polimarket::polmetrics::{overlap_null, NullMode};
use polimarket::rgcn::lifestyle_score;
use polimarket::{EdgeKind, HeteroGraph, NodeKind};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Full-matrix edit distance.
fn edit_distance(a: &[char], b: &[char]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

fn window_oracle(a: &str, b: &str) -> u8 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (s, l) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if s.is_empty() {
        return 100;
    }
    let best = (0..=l.len() - s.len())
        .map(|i| edit_distance(&s, &l[i..i + s.len()]))
        .min()
        .unwrap();
    if best == 0 {
        return 100;
    }
    let pct = (100.0 * (s.len() - best) as f64 / s.len() as f64 + 0.5).floor();
    (pct as u8).min(99)
}

fn random_graph(n: usize, m: usize, seed: u64) -> HeteroGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = GraphBuilder::new();
    let ids: Vec<_> = (0..n)
        .map(|i| {
            let kind = if i % 3 == 0 {
                NodeKind::Author
            } else {
                NodeKind::Product
            };
            b.add_node(kind, &format!("n{i}"))
        })
        .collect();
    for _ in 0..m {
        let (u, v) = (ids[rng.gen_range(0..n)], ids[rng.gen_range(0..n)]);
        let kind = match (b.node(u).unwrap().kind, b.node(v).unwrap().kind) {
            (NodeKind::Product, NodeKind::Product) => {
                [EdgeKind::AlsoBought, EdgeKind::AlsoViewed, EdgeKind::CoReview][rng.gen_range(0..3)]
            }
            (NodeKind::Author, NodeKind::Author) => continue,
            _ => EdgeKind::Reviews,
        };
        let _ = b.add_edge(u, v, kind, None);
    }
    b.freeze()
}

/// Removes one under-degree node at a time until none is left.
fn peel_oracle(g: &HeteroGraph, k: usize) -> Vec<bool> {
    let n = g.node_count();
    let mut alive = vec![true; n];
    loop {
        let victim = (0..n).find(|&v| {
            alive[v]
                && EdgeKind::ALL
                    .iter()
                    .flat_map(|&kind| g.neighbors(v as u32, kind))
                    .filter(|&&u| alive[u as usize])
                    .count()
                    < k
        });
        match victim {
            Some(v) => alive[v] = false,
            None => return alive,
        }
    }
}

fn binom(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).map(|i| (n - i) as f64 / (k - i) as f64).product()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn partial_ratio_matches_window_oracle(a in "[abc d]{0,40}", b in "[abc d]{0,40}") {
        prop_assert_eq!(partial_ratio(&a, &b), window_oracle(&a, &b));
    }

    #[test]
    fn partial_ratio_handles_multibyte(a in "[aé字 ]{0,12}", b in "[aé字 ]{0,30}") {
        prop_assert_eq!(partial_ratio(&a, &b), window_oracle(&a, &b));
        prop_assert_eq!(partial_ratio(&a, &b), partial_ratio(&b, &a));
    }

    #[test]
    fn clean_text_is_idempotent(raw in "[A-Za-z#@&;:/. ]{0,80}|(RT @x )?[a-z ]{0,40}( http://t.co/x)?") {
        if let Some(tokens) = clean_text(&raw, 1, 512) {
            let again = clean_text(&tokens.join(" "), 1, 512);
            prop_assert_eq!(again, Some(tokens));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn k_core_matches_peeling(n in 1usize..1000, density in 0.5f64..6.0, k in 1usize..8, seed in any::<u64>()) {
        let g = random_graph(n, (n as f64 * density) as usize, seed);
        let fast = k_core_mask(&g, k, Execution::Parallel);
        prop_assert_eq!(&fast, &peel_oracle(&g, k));
        prop_assert_eq!(&fast, &k_core_mask(&g, k, Execution::Sequential));
        let core = k_core(&g, k, Execution::Parallel);
        prop_assert_eq!(k_core(&core, k, Execution::Sequential), core);
    }

    #[test]
    fn snapshot_round_trips(n in 2usize..60, m in 0usize..200, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = random_graph(n, m, seed).thaw();
        let authors: Vec<u32> = (0..n as u32).filter(|&i| i % 3 == 0).collect();
        let products: Vec<u32> = (0..n as u32).filter(|&i| i % 3 != 0).collect();
        let mut labels = LabelStore::new();
        for &p in &products {
            if rng.gen_bool(0.3) {
                let class = PoliticalClass::from_index(rng.gen_range(0..3)).unwrap();
                labels.offer(PoliticalLabel::model(&format!("n{p}"), class, rng.gen(), 1));
            }
            if let Some(&a) = authors.get(rng.gen_range(0..authors.len().max(1))) {
                let total = rng.gen_range(0..10);
                let attrs = ReviewAttrs {
                    rating: rng.gen_range(1..=5),
                    helpful_up: rng.gen_range(0..=total),
                    helpful_total: total,
                    unix_time: rng.gen(),
                    moral: None,
                };
                let _ = b.add_edge(a, p, EdgeKind::Reviews, Some(attrs));
            }
        }
        let g = b.freeze();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.snap");
        snapshot_save(&path, &g, &labels).unwrap();
        let (g2, l2) = snapshot_load(&path).unwrap();
        prop_assert_eq!(g2, g);
        prop_assert_eq!(l2, labels);
    }

    #[test]
    fn expected_overlap_matches_hypergeometric(
        draws in prop::collection::vec(0u64..5, 1..5),
        red in 1u64..30,
        blue in 1u64..30,
    ) {
        let n: u64 = draws.iter().sum();
        prop_assume!(n <= red + blue && n <= 20);
        let (e, v) = overlap_null(&draws, red, blue, NullMode::Exact, 0, 0, Execution::Sequential).unwrap();
        let total = red + blue;
        let p_mixed: Vec<f64> = draws
            .iter()
            .map(|&c| if c == 0 { 0.0 } else { 1.0 - (binom(red, c) + binom(blue, c)) / binom(total, c) })
            .collect();
        prop_assert!((e - p_mixed.iter().sum::<f64>()).abs() < 1e-9);
        if draws.iter().filter(|&&c| c > 0).count() == 1 {
            let p: f64 = p_mixed.iter().sum();
            prop_assert!((v - p * (1.0 - p)).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn lifestyle_score_is_monotone(p in 0.0f64..=1.0, q in 0.0f64..=1.0) {
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        prop_assert!(lifestyle_score(lo) <= lifestyle_score(hi));
        prop_assert!((0.0..=1.0).contains(&lifestyle_score(p)));
        prop_assert!((lifestyle_score(p) + lifestyle_score(1.0 - p) - 1.0).abs() < 1e-9);
    }
}

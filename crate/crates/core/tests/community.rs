mod common;

use coordnet::community::{louvain, modularity, Partition};
use coordnet::graph::WeightedGraph;
use proptest::prelude::*;

fn fixtures(count: usize, max_n: usize, seed: u64) -> Vec<common::TestGraph> {
    let mut r = common::rng(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let n = 2 + out.len() % (max_n - 1);
        let g = common::random_graph(&mut r, n, 0.5, 5);
        if !g.edges.is_empty() {
            out.push(g);
        }
    }
    out
}

#[test]
fn modularity_matches_double_sum_on_every_partition() {
    for g in fixtures(30, 6, 1) {
        for p in common::all_partitions(g.node_count()) {
            let q = modularity(&g, &p).unwrap();
            assert!((q - common::modularity_double_sum(&g, &p)).abs() <= 1e-12);
        }
    }
}

/// Louvain is a heuristic: on a few dense random graphs no visit order reaches
/// the optimum. This checks the aggregate quality over the fixture set.
#[test]
fn louvain_is_close_to_exhaustive_optimum() {
    let mut ratios = Vec::new();
    for (k, g) in fixtures(100, 8, 2).iter().enumerate() {
        let p = louvain(g, k as u64);
        let best = common::best_modularity(g);
        let check = common::modularity_double_sum(g, p.assignment());
        assert!((p.modularity() - check).abs() < 1e-12);
        assert!(p.modularity() <= best + 1e-12);
        if best > 1e-12 {
            ratios.push(p.modularity() / best);
        }
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let near = ratios.iter().filter(|&&r| r >= 0.95).count() as f64 / ratios.len() as f64;
    assert!(mean >= 0.97, "mean ratio {mean}");
    assert!(near >= 0.9, "share within 5%: {near}");
}

#[test]
fn pass_modularity_never_decreases() {
    let mut r = common::rng(3);
    for _ in 0..20 {
        let g = common::random_graph(&mut r, 40, 0.1, 4);
        if g.edges.is_empty() {
            continue;
        }
        let p = louvain(&g, 9);
        assert!(p.pass_modularity().windows(2).all(|w| w[1] >= w[0] - 1e-12));
        assert!((p.pass_modularity().last().unwrap() - p.modularity()).abs() < 1e-12);
    }
}

#[test]
fn two_cliques_split_at_the_bridge() {
    let g = common::two_cliques_bridge();
    let p = louvain(&g, 0);
    assert_eq!(p.cluster_count(), 2);
    let a = p.assignment();
    assert!(a[..5].iter().all(|&c| c == a[0]));
    assert!(a[5..].iter().all(|&c| c == a[5]));
    assert_ne!(a[0], a[5]);
}

#[test]
fn four_cycle_optimum() {
    let g = common::TestGraph::new(4, vec![(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 3, 1.0)]);
    let best = common::best_modularity(&g);
    assert!(best.abs() < 1e-12);
    let p = louvain(&g, 1);
    assert!(p.modularity() >= -1e-12);
}

#[test]
fn seeded_runs_reproduce() {
    let g = common::random_graph(&mut common::rng(8), 60, 0.08, 3);
    assert_eq!(louvain(&g, 5).assignment(), louvain(&g, 5).assignment());
}

#[test]
fn clusters_are_numbered_by_size() {
    let g = common::random_graph(&mut common::rng(4), 50, 0.08, 3);
    let sizes = louvain(&g, 2).cluster_sizes();
    assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn partition_csv_roundtrip() {
    let g = common::two_cliques_bridge();
    let p = louvain(&g, 0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    p.write_csv(&path, g.node_ids()).unwrap();
    let back = Partition::read_csv(&path, &g).unwrap();
    assert_eq!(back.assignment(), p.assignment());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn modularity_is_bounded(seed in 0u64..5000, n in 2usize..12) {
        let g = common::random_graph(&mut common::rng(seed), n, 0.5, 4);
        prop_assume!(!g.edges.is_empty());
        let p = louvain(&g, seed);
        prop_assert!(p.modularity() >= -0.5 - 1e-12 && p.modularity() < 1.0);
        let singletons: Vec<usize> = (0..n).collect();
        prop_assert!(p.modularity() >= modularity(&g, &singletons).unwrap() - 1e-12);
    }
}

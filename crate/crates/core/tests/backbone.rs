mod common;

use std::collections::BTreeSet;

use coordnet::backbone::{extract_backbone, null_model, BackboneOptions, BetaPrior, KeepRule};
use coordnet::cosharing::CoShareGraph;
use proptest::prelude::*;
use rand::Rng;

fn random_coshare(seed: u64, n: usize, p: f64, max_w: u64) -> CoShareGraph {
    let mut r = common::rng(seed);
    let nodes: BTreeSet<String> = (0..n).map(|i| format!("v{i:02}")).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if r.random_bool(p) {
                edges.push((format!("v{i:02}"), format!("v{j:02}"), r.random_range(1..=max_w)));
            }
        }
    }
    CoShareGraph::from_parts(nodes, edges).unwrap()
}

fn complete(n: usize, w: u64) -> CoShareGraph {
    let edges = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (format!("v{i}"), format!("v{j}"), w)))
        .collect::<Vec<_>>();
    CoShareGraph::from_parts(BTreeSet::new(), edges).unwrap()
}

fn kept(g: &CoShareGraph, delta: f64) -> BTreeSet<(usize, usize)> {
    let opts = BackboneOptions { delta, ..Default::default() };
    extract_backbone(g, &opts).unwrap().edges().keys().copied().collect()
}

#[test]
fn triangle_null_moments() {
    let g = complete(3, 10);
    let s = null_model(&g).unwrap();
    assert_eq!(s.strength, vec![20.0; 3]);
    assert_eq!(s.total, 60.0);
    for e in s.edges.values() {
        let p = 20.0 * 20.0 / 3600.0;
        assert!((e.probability - p).abs() < 1e-12);
        assert!((e.expected - 20.0 / 3.0).abs() < 1e-12);
        assert!((e.variance - 60.0 * p * (1.0 - p)).abs() < 1e-12);
        assert!((e.variance - 5.9259).abs() < 1e-4);
    }
}

#[test]
fn null_moments_follow_strengths() {
    for seed in 0..10 {
        let g = random_coshare(seed, 12, 0.4, 9);
        let s = null_model(&g).unwrap();
        let mut strength = vec![0.0; g.nodes().len()];
        for (&(i, j), &w) in g.edges() {
            strength[i] += w as f64;
            strength[j] += w as f64;
        }
        let total: f64 = strength.iter().sum();
        for (&(i, j), e) in &s.edges {
            let p = strength[i] * strength[j] / (total * total);
            assert!((0.0..=1.0).contains(&e.probability));
            assert!((e.expected - total * p).abs() < 1e-9);
            assert!((e.variance - total * p * (1.0 - p)).abs() < 1e-9);
        }
    }
}

#[test]
fn prior_shrinks_probability_toward_prior_mean() {
    let g = random_coshare(3, 10, 0.5, 5);
    let plain = null_model(&g).unwrap();
    let prior = BetaPrior { a: 1.0, b: 1.0 };
    let shrunk = coordnet::backbone::null_model_with_prior(&g, Some(prior)).unwrap();
    for (k, e) in &plain.edges {
        let expect = (e.expected + 1.0) / (plain.total + 2.0);
        assert!((shrunk.edges[k].probability - expect).abs() < 1e-12);
    }
}

#[test]
fn random_graphs_preserve_nodes_and_nest_by_delta() {
    for seed in 0..20 {
        let g = random_coshare(100 + seed, 15, 0.35, 30);
        let b = extract_backbone(&g, &BackboneOptions::default()).unwrap();
        assert_eq!(b.nodes(), g.nodes());
        let (k3, k232, k1) = (kept(&g, 3.0), kept(&g, 2.32), kept(&g, 1.0));
        assert!(k3.is_subset(&k232) && k232.is_subset(&k1), "seed {seed}");
        for (&(i, j), e) in b.edges() {
            assert_eq!(g.edges()[&(i, j)], e.weight);
        }
    }
}

#[test]
fn uniform_complete_graphs_are_empty() {
    for n in 3..=12 {
        for w in 2..=25 {
            assert!(kept(&complete(n, w), 2.32).is_empty(), "K{n} w={w}");
        }
    }
}

#[test]
fn raw_rule_keeps_a_superset_of_residual() {
    for seed in 0..10 {
        let g = random_coshare(seed, 12, 0.4, 20);
        let residual = kept(&g, 2.32);
        let raw: BTreeSet<_> = extract_backbone(
            &g,
            &BackboneOptions { rule: KeepRule::Raw, ..Default::default() },
        )
        .unwrap()
        .edges()
        .keys()
        .copied()
        .collect();
        assert!(residual.is_subset(&raw));
    }
}

#[test]
fn negative_delta_is_rejected() {
    let g = complete(3, 2);
    let err = extract_backbone(&g, &BackboneOptions { delta: -1.0, ..Default::default() });
    assert!(err.unwrap_err().is_validation());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn delta_monotonicity(seed in 0u64..5000, d1 in 0.0f64..4.0, d2 in 0.0f64..4.0) {
        let g = random_coshare(seed, 10, 0.5, 15);
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        prop_assert!(kept(&g, hi).is_subset(&kept(&g, lo)));
    }

    #[test]
    fn zero_delta_decision_is_scale_free(seed in 0u64..5000, k in 2u64..7) {
        let g = random_coshare(seed, 10, 0.5, 15);
        let scaled = CoShareGraph::from_parts(
            g.nodes().iter().cloned().collect(),
            g.edges().iter().map(|(&(i, j), &w)| (g.nodes()[i].clone(), g.nodes()[j].clone(), w * k)),
        ).unwrap();
        if g.edge_count() > 0 {
            prop_assert_eq!(kept(&g, 0.0), kept(&scaled, 0.0));
        }
    }
}

//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use coordnet::anomaly::{fit_forest, label, tree_shap, ForestParams, Label};
use coordnet::backbone::{extract_backbone, BackboneOptions};
use coordnet::community::{louvain, modularity};
use coordnet::cosharing::{count_shares, project, CoShareGraph, ProjectOptions};
use coordnet::embedding::{embed_nodes, generate_walks, SkipGramConfig, WalkConfig};
use coordnet::features::{content_similarity, temporal_signature_seconds, IatMode, ShareIndex};
use coordnet::graph::{Adjacency, WeightedGraph};
use coordnet::ingest::{Corpus, EmbeddingTable, Post};
use coordnet::pipeline::{run_all, synth_corpus, PipelineConfig, SynthSpec};
use rand::Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(elapsed: Duration, secs: f64) -> bool {
    elapsed.as_secs_f64() < secs
}

fn criterion_1() -> Outcome {
    let mut r = common::rng(1001);
    let mut spent = Duration::ZERO;
    let mut mismatched = 0;
    for _ in 0..50 {
        let users = r.random_range(2..=200);
        let tags = r.random_range(1..=50);
        let c = common::random_corpus(&mut r, users, tags, 8);
        let start = Instant::now();
        let g = project(&count_shares(&c), ProjectOptions::default());
        spent += start.elapsed();
        let oracle = common::projection_double_loop(&c);
        let got: BTreeMap<(String, String), u64> = g
            .edges()
            .iter()
            .map(|(&(i, j), &w)| ((g.nodes()[i].clone(), g.nodes()[j].clone()), w))
            .collect();
        if got != oracle {
            mismatched += 1;
        }
    }
    outcome(
        mismatched == 0 && within(spent, 5.0),
        format!("{mismatched}/50 corpora differ from the double loop; projection time {spent:.2?}"),
    )
}

fn random_coshare(r: &mut impl Rng, n: usize) -> CoShareGraph {
    let nodes: BTreeSet<String> = (0..n).map(|i| format!("v{i:03}")).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if r.random_bool(0.3) {
                edges.push((format!("v{i:03}"), format!("v{j:03}"), r.random_range(1..=40)));
            }
        }
    }
    CoShareGraph::from_parts(nodes, edges).unwrap()
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut r = common::rng(1002);
    let kept = |g: &CoShareGraph, delta: f64| -> BTreeSet<(usize, usize)> {
        let b = extract_backbone(g, &BackboneOptions { delta, ..Default::default() }).unwrap();
        b.edges().keys().copied().collect()
    };
    let mut failures = Vec::new();
    for k in 0..20 {
        let g = random_coshare(&mut r, 10 + k * 2);
        let b = extract_backbone(&g, &BackboneOptions::default()).unwrap();
        if b.nodes() != g.nodes() {
            failures.push(format!("graph {k}: node set changed"));
        }
        let (k3, k2, k1) = (kept(&g, 3.0), kept(&g, 2.32), kept(&g, 1.0));
        if !(k3.is_subset(&k2) && k2.is_subset(&k1)) {
            failures.push(format!("graph {k}: edge sets not nested"));
        }
    }
    for n in 3..=12usize {
        for w in 2..=25u64 {
            let edges = (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (format!("v{i}"), format!("v{j}"), w)));
            let g = CoShareGraph::from_parts(BTreeSet::new(), edges).unwrap();
            if !kept(&g, 2.32).is_empty() {
                failures.push(format!("K{n} with weight {w} is not empty"));
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        failures.is_empty() && within(elapsed, 2.0),
        if failures.is_empty() {
            format!("20 random graphs and K3..K12 with weights 2..25 in {elapsed:.2?}")
        } else {
            failures.join("; ")
        },
    )
}

fn random_small_graphs(r: &mut impl Rng, count: usize, max_n: usize) -> Vec<common::TestGraph> {
    let mut out = Vec::new();
    while out.len() < count {
        let n = 2 + out.len() % (max_n - 1);
        let g = common::random_graph(r, n, 0.5, 5);
        if !g.edges.is_empty() {
            out.push(g);
        }
    }
    out
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut r = common::rng(1003);
    let mut worst_dq: f64 = 0.0;
    let mut partitions = 0;
    for g in random_small_graphs(&mut r, 50, 6) {
        for p in common::all_partitions(g.node_count()) {
            let dq = (modularity(&g, &p).unwrap() - common::modularity_double_sum(&g, &p)).abs();
            worst_dq = worst_dq.max(dq);
            partitions += 1;
        }
    }
    let mut below = Vec::new();
    let mut worst_ratio: f64 = 1.0;
    for (k, g) in random_small_graphs(&mut r, 100, 8).iter().enumerate() {
        let q = louvain(g, k as u64).modularity();
        let best = common::best_modularity(g);
        if q < 0.95 * best - 1e-12 {
            below.push(k);
        }
        if best > 1e-12 {
            worst_ratio = worst_ratio.min(q / best);
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst_dq <= 1e-12 && below.is_empty() && within(elapsed, 30.0),
        format!(
            "max |dQ| {worst_dq:.1e} over {partitions} partitions; louvain below 0.95 of optimum on {}/100 fixtures {below:?} (worst ratio {worst_ratio:.3}); {elapsed:.2?}",
            below.len()
        ),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let g = common::barbell(6);
    let mut gaps = Vec::new();
    for seed in 0..3u64 {
        let walk = WalkConfig { seed: 10 + seed, ..Default::default() };
        let sg = SkipGramConfig { seed: 20 + seed, ..Default::default() };
        let e = embed_nodes(&g, &walk, &sg).unwrap();
        let (mut intra, mut cross) = (Vec::new(), Vec::new());
        for i in 0..12 {
            for j in i + 1..12 {
                let c = e.node_cosine(&g.ids[i], &g.ids[j]).unwrap();
                if (i < 6) == (j < 6) {
                    intra.push(c);
                } else {
                    cross.push(c);
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        gaps.push(mean(&intra) - mean(&cross));
    }

    let fixture = common::TestGraph::new(
        5,
        vec![(0, 1, 1.0), (0, 2, 3.0), (1, 2, 2.0), (2, 3, 5.0), (3, 4, 1.0), (1, 4, 4.0)],
    );
    let adj = Adjacency::from_graph(&fixture);
    let cfg = WalkConfig { walk_length: 1001, walks_per_node: 20, p: 1.0, q: 1.0, seed: 5 };
    let mut counts: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut from = vec![0.0; 5];
    let mut steps = 0;
    for w in generate_walks(&fixture, &cfg).unwrap() {
        for s in w.windows(2) {
            *counts.entry((s[0], s[1])).or_default() += 1.0;
            from[s[0]] += 1.0;
            steps += 1;
        }
    }
    let mut worst: f64 = 0.0;
    for v in 0..5 {
        for &(x, w) in adj.neighbors(v) {
            let empirical = counts.get(&(v, x)).copied().unwrap_or(0.0) / from[v];
            worst = worst.max((empirical - w / adj.strength(v)).abs());
        }
    }
    let elapsed = start.elapsed();
    outcome(
        gaps.iter().all(|&g| g >= 0.2) && steps >= 100_000 && worst <= 0.05 && within(elapsed, 60.0),
        format!(
            "barbell gaps {:?}; max transition error {worst:.4} over {steps} steps; {elapsed:.2?}",
            gaps.iter().map(|g| format!("{g:.3}")).collect::<Vec<_>>()
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut r = common::rng(1005);
    let (mut worst_content, mut worst_iat): (f64, f64) = (0.0, 0.0);
    let mut problems = 0;
    let mut pairs = 0;
    for _ in 0..100 {
        let c = common::random_corpus(&mut r, 6, 4, 5);
        let mut emb = EmbeddingTable::new(5).unwrap();
        for p in c.posts() {
            if r.random_bool(0.8) {
                emb.insert(p.post_id.clone(), (0..5).map(|_| r.random_range(-1.0..1.0)).collect())
                    .unwrap();
            }
        }
        let shift = r.random_range(-10_000_000..10_000_000);
        let moved = Corpus::new(
            c.posts().iter().map(|p| Post { timestamp: p.timestamp + shift, ..p.clone() }).collect(),
        );
        let index = ShareIndex::new(&c);
        let moved_index = ShareIndex::new(&moved);
        let users: Vec<&String> = c.users().iter().collect();
        for i in 0..users.len() {
            for j in i + 1..users.len() {
                let (a, b) = (users[i].as_str(), users[j].as_str());
                pairs += 1;
                let got = content_similarity(a, b, &index, &emb);
                match common::content_oracle(&c, &emb, a, b) {
                    Some(v) if !got.missing => worst_content = worst_content.max((got.value - v).abs()),
                    None if got.missing => {}
                    _ => problems += 1,
                }
                let iat = temporal_signature_seconds(a, b, &index, IatMode::Cross);
                match (iat, common::iat_oracle(&c, a, b)) {
                    (Some(x), Some(y)) => worst_iat = worst_iat.max((x - y).abs()),
                    (None, None) => {}
                    _ => problems += 1,
                }
                for mode in [IatMode::Cross, IatMode::Merged] {
                    if temporal_signature_seconds(a, b, &index, mode)
                        != temporal_signature_seconds(a, b, &moved_index, mode)
                    {
                        problems += 1;
                    }
                }
            }
        }
    }
    outcome(
        problems == 0 && worst_content <= 1e-9 && worst_iat <= 1e-9,
        format!(
            "{pairs} pairs: max content error {worst_content:.1e}, max IAT error {worst_iat:.1e}, {problems} mismatches incl. time shift"
        ),
    )
}

fn gaussian_rows(r: &mut impl Rng, n: usize, shift: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..4).map(|_| r.sample::<f64, _>(StandardNormal) + shift).collect())
        .collect()
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut r = common::rng(1006);
    let mut rows = gaussian_rows(&mut r, 950, 0.0);
    rows.extend(gaussian_rows(&mut r, 50, 6.0));
    let model = fit_forest(&rows, &ForestParams { seed: 6, ..Default::default() }).unwrap();
    let scores: Vec<f64> = rows.iter().map(|x| model.score(x).unwrap()).collect();
    let keys: Vec<usize> = (0..rows.len()).collect();
    let labels = label(&scores, &keys, 0.05).unwrap();
    let hits = labels[950..].iter().filter(|&&l| l == Label::Anomalous).count();
    let in_range = scores.iter().all(|&s| s > 0.0 && s < 1.0);
    let elapsed = start.elapsed();
    outcome(
        hits as f64 / 50.0 >= 0.8 && in_range && within(elapsed, 10.0),
        format!("recall {hits}/50, scores in (0,1): {in_range}; {elapsed:.2?}"),
    )
}

fn criterion_7() -> Outcome {
    let mut r = common::rng(1007);
    let (mut worst_local, mut worst_brute): (f64, f64) = (0.0, 0.0);
    let mut instances = 0;
    for k in 0..5u64 {
        let rows = gaussian_rows(&mut r, 300, 0.0);
        let model = fit_forest(&rows, &ForestParams { seed: k, ..Default::default() }).unwrap();
        for x in &rows {
            let e = tree_shap(&model, x).unwrap();
            let total = e.base + e.values.iter().sum::<f64>();
            worst_local = worst_local.max((total - model.expected_depth(x).unwrap()).abs());
            instances += 1;
        }
        let small = fit_forest(&rows, &ForestParams { n_estimators: 10, psi: 8, seed: k }).unwrap();
        let depth_ok = small.trees().iter().all(|t| t.height() <= 3);
        for x in rows.iter().take(60) {
            let e = tree_shap(&small, x).unwrap();
            let (phi, base) = common::brute_force_shapley(&small, x);
            worst_brute = worst_brute.max((e.base - base).abs());
            for f in 0..4 {
                worst_brute = worst_brute.max((e.values[f] - phi[f]).abs());
            }
            let total = e.base + e.values.iter().sum::<f64>();
            worst_local = worst_local.max((total - small.expected_depth(x).unwrap()).abs());
            instances += 1;
        }
        if !depth_ok {
            return outcome(false, "small forest exceeded depth 3");
        }
    }
    outcome(
        worst_local <= 1e-9 && worst_brute <= 1e-9,
        format!("{instances} instances: local accuracy error {worst_local:.1e}, brute-force error {worst_brute:.1e}"),
    )
}

struct EndToEnd {
    dir: tempfile::TempDir,
    cfg: PipelineConfig,
}

fn end_to_end_config(dir: &std::path::Path, out: &str) -> PipelineConfig {
    PipelineConfig {
        posts: Some(dir.join("input/posts.jsonl")),
        embeddings: Some(dir.join("input/embeddings.jsonl")),
        seed: 8,
        out_dir: dir.join(out),
        ..Default::default()
    }
}

fn criterion_8() -> (Outcome, Option<EndToEnd>) {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec { seed: 8, ..Default::default() };
    let synth = synth_corpus(&spec).unwrap();
    synth.write(&dir.path().join("input")).unwrap();
    let cfg = end_to_end_config(dir.path(), "run1");
    let report = match run_all(&cfg) {
        Ok(r) => r,
        Err(e) => return (outcome(false, format!("run-all failed: {e}")), None),
    };

    let surviving: Vec<&(String, String)> = synth
        .coordinated_pairs
        .iter()
        .filter(|(a, b)| report.backbone.edge(a, b).is_some())
        .collect();
    let flagged: BTreeSet<(&str, &str)> = report
        .records
        .iter()
        .filter(|r| r.is_final_anomaly())
        .map(|r| (r.user_a.as_str(), r.user_b.as_str()))
        .collect();
    let hits = surviving.iter().filter(|(a, b)| flagged.contains(&(a.as_str(), b.as_str()))).count();
    let organic = flagged
        .iter()
        .filter(|(a, b)| !synth.coordinated_users.contains(*a) && !synth.coordinated_users.contains(*b))
        .count();
    let recall = hits as f64 / surviving.len().max(1) as f64;
    let organic_share = organic as f64 / flagged.len().max(1) as f64;
    let elapsed = start.elapsed();
    let pass = !surviving.is_empty() && recall >= 0.7 && organic_share <= 0.1 && within(elapsed, 120.0);
    (
        outcome(
            pass,
            format!(
                "recall {hits}/{} = {recall:.3}; organic-organic {organic}/{} = {organic_share:.3}; {elapsed:.2?}",
                surviving.len(),
                flagged.len()
            ),
        ),
        Some(EndToEnd { dir, cfg }),
    )
}

fn criterion_9(first: Option<&EndToEnd>) -> Outcome {
    let Some(e2e) = first else {
        return outcome(false, "no first run to compare against");
    };
    let cfg = PipelineConfig { out_dir: e2e.dir.path().join("run2"), ..e2e.cfg.clone() };
    if let Err(e) = run_all(&cfg) {
        return outcome(false, format!("second run failed: {e}"));
    }
    let a = common::dir_bytes(&e2e.cfg.out_dir);
    let b = common::dir_bytes(&cfg.out_dir);
    let differing: Vec<&String> = a.keys().filter(|k| a.get(*k) != b.get(*k)).collect();
    outcome(
        a.len() == b.len() && differing.is_empty(),
        format!("{} files compared, differing: {differing:?}", a.len()),
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "projection oracle", criterion_1()),
        (2, "backbone properties", criterion_2()),
        (3, "modularity oracle and louvain quality", criterion_3()),
        (4, "node2vec sanity", criterion_4()),
        (5, "feature oracles", criterion_5()),
        (6, "isolation forest recall", criterion_6()),
        (7, "treeshap exactness", criterion_7()),
    ];
    let (c8, e2e) = criterion_8();
    results.push((8, "planted coordination end to end", c8));
    results.push((9, "run-all determinism", criterion_9(e2e.as_ref())));

    let mut failed = 0;
    for (n, name, o) in &results {
        println!("{} criterion {n} ({name}): {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

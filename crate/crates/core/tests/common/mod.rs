//! Definitional oracles and fixture generators shared by the integration tests.
//! Each oracle is a direct, slow transcription of the quantity it checks.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use coordnet::anomaly::{ForestModel, IsolationTree, Node};
use coordnet::graph::WeightedGraph;
use coordnet::ingest::{Corpus, EmbeddingTable, Post};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Plain edge-list graph for tests.
#[derive(Debug, Clone)]
pub struct TestGraph {
    pub ids: Vec<String>,
    pub edges: Vec<(usize, usize, f64)>,
}

impl TestGraph {
    pub fn new(n: usize, mut edges: Vec<(usize, usize, f64)>) -> Self {
        for e in edges.iter_mut() {
            if e.0 > e.1 {
                std::mem::swap(&mut e.0, &mut e.1);
            }
        }
        edges.sort_by_key(|e| (e.0, e.1));
        Self {
            ids: (0..n).map(|i| format!("n{i:03}")).collect(),
            edges,
        }
    }

    pub fn adjacency(&self) -> Vec<Vec<f64>> {
        let n = self.ids.len();
        let mut a = vec![vec![0.0; n]; n];
        for &(i, j, w) in &self.edges {
            a[i][j] += w;
            a[j][i] += w;
        }
        a
    }
}

impl WeightedGraph for TestGraph {
    fn node_ids(&self) -> &[String] {
        &self.ids
    }
    fn edge_list(&self) -> Vec<(usize, usize, f64)> {
        self.edges.clone()
    }
}

/// Random simple graph with integer weights in `1..=max_w`.
pub fn random_graph(rng: &mut impl Rng, n: usize, p: f64, max_w: u32) -> TestGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push((i, j, rng.random_range(1..=max_w) as f64));
            }
        }
    }
    TestGraph::new(n, edges)
}

/// Q = (1/2m) Σ_i Σ_j [A_ij − k_i k_j / 2m] δ(c_i, c_j), summed over every ordered pair.
pub fn modularity_double_sum(g: &TestGraph, assignment: &[usize]) -> f64 {
    let a = g.adjacency();
    let n = a.len();
    let k: Vec<f64> = a.iter().map(|row| row.iter().sum()).collect();
    let two_m: f64 = k.iter().sum();
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if assignment[i] == assignment[j] {
                q += a[i][j] - k[i] * k[j] / two_m;
            }
        }
    }
    q / two_m
}

/// Every set partition of `0..n` as a restricted-growth assignment.
pub fn all_partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(i: usize, n: usize, cur: &mut Vec<usize>, max: usize, out: &mut Vec<Vec<usize>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for c in 0..=max + 1 {
            cur.push(c);
            rec(i + 1, n, cur, max.max(c), out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        return vec![vec![]];
    }
    let mut cur = vec![0];
    rec(1, n, &mut cur, 0, &mut out);
    out
}

pub fn best_modularity(g: &TestGraph) -> f64 {
    all_partitions(g.ids.len())
        .iter()
        .map(|p| modularity_double_sum(g, p))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Small random corpus: users with 1..=max_posts posts, 1..=3 hashtags each.
pub fn random_corpus(rng: &mut impl Rng, users: usize, hashtags: usize, max_posts: usize) -> Corpus {
    let mut posts = Vec::new();
    let mut id = 0;
    for u in 0..users {
        for _ in 0..rng.random_range(1..=max_posts) {
            let k = rng.random_range(1..=3.min(hashtags));
            let tags: BTreeSet<String> = (0..k)
                .map(|_| format!("h{}", rng.random_range(0..hashtags)))
                .collect();
            posts.push(Post {
                user_id: format!("u{u:03}"),
                post_id: format!("p{id}"),
                timestamp: rng.random_range(0..100_000),
                text: format!("text {}", rng.random_range(0..20)),
                hashtags: tags.into_iter().collect(),
            });
            id += 1;
        }
    }
    Corpus::new(posts)
}

/// W_ij = Σ_n min(σ(i,n), σ(j,n)) over every user pair and every hashtag,
/// with σ(i,n) the number of i's posts carrying n.
pub fn projection_double_loop(corpus: &Corpus) -> BTreeMap<(String, String), u64> {
    let users: Vec<&String> = corpus.users().iter().collect();
    let tags: Vec<&String> = corpus.hashtags().iter().collect();
    let mut sigma = vec![vec![0u64; tags.len()]; users.len()];
    for p in corpus.posts() {
        let u = users.binary_search(&&p.user_id).unwrap();
        let distinct: BTreeSet<&String> = p.hashtags.iter().collect();
        for t in distinct {
            sigma[u][tags.binary_search(&t).unwrap()] += 1;
        }
    }
    let mut out = BTreeMap::new();
    for i in 0..users.len() {
        for j in i + 1..users.len() {
            let w: u64 = (0..tags.len()).map(|n| sigma[i][n].min(sigma[j][n])).sum();
            if w > 0 {
                out.insert((users[i].clone(), users[j].clone()), w);
            }
        }
    }
    out
}

pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (na > 0.0 && nb > 0.0).then(|| (dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Mean over shared hashtags of cos(mean_i(n), mean_j(n)); hashtags where a
/// side has no embedded post or a zero mean are skipped. `None` if all are.
pub fn content_oracle(corpus: &Corpus, emb: &EmbeddingTable, a: &str, b: &str) -> Option<f64> {
    let tags_of = |u: &str| -> BTreeSet<String> {
        corpus
            .posts()
            .iter()
            .filter(|p| p.user_id == u)
            .flat_map(|p| p.hashtags.iter().cloned())
            .collect()
    };
    let mean = |u: &str, t: &str| -> Option<Vec<f64>> {
        let vs: Vec<&[f64]> = corpus
            .posts()
            .iter()
            .filter(|p| p.user_id == u && p.hashtags.iter().any(|h| h == t))
            .filter_map(|p| emb.get(&p.post_id))
            .collect();
        if vs.is_empty() {
            return None;
        }
        let mut m = vec![0.0; emb.dim()];
        for v in &vs {
            for (k, x) in v.iter().enumerate() {
                m[k] += x;
            }
        }
        Some(m.into_iter().map(|x| x / vs.len() as f64).collect())
    };
    let shared: Vec<String> = tags_of(a).intersection(&tags_of(b)).cloned().collect();
    let cs: Vec<f64> = shared
        .iter()
        .filter_map(|t| cosine(&mean(a, t)?, &mean(b, t)?))
        .collect();
    (!cs.is_empty()).then(|| cs.iter().sum::<f64>() / cs.len() as f64)
}

/// Per shared hashtag, all cross-user |Δt|; keep the min(σ_a, σ_b) smallest;
/// pool; take the median (mean of the middle two for even counts). Seconds.
pub fn iat_oracle(corpus: &Corpus, a: &str, b: &str) -> Option<f64> {
    let times = |u: &str, t: &str| -> Vec<i64> {
        corpus
            .posts()
            .iter()
            .filter(|p| p.user_id == u && p.hashtags.iter().any(|h| h == t))
            .map(|p| p.timestamp)
            .collect()
    };
    let mut pooled = Vec::new();
    for t in corpus.hashtags() {
        let (ta, tb) = (times(a, t), times(b, t));
        if ta.is_empty() || tb.is_empty() {
            continue;
        }
        let mut diffs: Vec<i64> = ta
            .iter()
            .flat_map(|x| tb.iter().map(move |y| (x - y).abs()))
            .collect();
        diffs.sort();
        pooled.extend(diffs.into_iter().take(ta.len().min(tb.len())));
    }
    if pooled.is_empty() {
        return None;
    }
    pooled.sort();
    let n = pooled.len();
    Some(if n % 2 == 1 {
        pooled[n / 2] as f64
    } else {
        (pooled[n / 2 - 1] + pooled[n / 2]) as f64 / 2.0
    })
}

/// Path-dependent conditional expectation of one tree's output given only the
/// features in `known`: follow `x` where the split feature is known, otherwise
/// average the children by training cover.
fn conditional_value(tree: &IsolationTree, i: usize, x: &[f64], known: &[bool]) -> f64 {
    match tree.nodes()[i] {
        Node::Leaf { cover, depth } => IsolationTree::leaf_value(cover, depth),
        Node::Internal {
            feature,
            split,
            left,
            right,
            cover,
        } => {
            if known[feature] {
                let next = if x[feature] < split { left } else { right };
                conditional_value(tree, next, x, known)
            } else {
                let cl = tree.nodes()[left].cover() as f64;
                let cr = tree.nodes()[right].cover() as f64;
                (cl * conditional_value(tree, left, x, known)
                    + cr * conditional_value(tree, right, x, known))
                    / cover as f64
            }
        }
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Exact Shapley values of the forest's mean path length by enumerating all
/// feature subsets. Returns (φ, base) with base = v(∅).
pub fn brute_force_shapley(model: &ForestModel, x: &[f64]) -> (Vec<f64>, f64) {
    let m = x.len();
    let v = |mask: usize| -> f64 {
        let known: Vec<bool> = (0..m).map(|f| mask >> f & 1 == 1).collect();
        model
            .trees()
            .iter()
            .map(|t| conditional_value(t, 0, x, &known))
            .sum::<f64>()
            / model.trees().len() as f64
    };
    let values: Vec<f64> = (0..1usize << m).map(v).collect();
    let mut phi = vec![0.0; m];
    for (f, slot) in phi.iter_mut().enumerate() {
        for mask in 0..1usize << m {
            if mask >> f & 1 == 1 {
                continue;
            }
            let s = mask.count_ones() as usize;
            let w = factorial(s) * factorial(m - s - 1) / factorial(m);
            *slot += w * (values[mask | 1 << f] - values[mask]);
        }
    }
    (phi, values[0])
}

/// Barbell: two K_k joined by one bridge edge between node k-1 and node k.
pub fn barbell(k: usize) -> TestGraph {
    let mut edges = Vec::new();
    for side in 0..2 {
        let off = side * k;
        for i in 0..k {
            for j in i + 1..k {
                edges.push((off + i, off + j, 1.0));
            }
        }
    }
    edges.push((k - 1, k, 1.0));
    TestGraph::new(2 * k, edges)
}

/// Two disjoint 5-cliques joined by a single bridge.
pub fn two_cliques_bridge() -> TestGraph {
    let mut edges = Vec::new();
    for off in [0, 5] {
        for i in 0..5 {
            for j in i + 1..5 {
                edges.push((off + i, off + j, 1.0));
            }
        }
    }
    edges.push((4, 5, 1.0));
    TestGraph::new(10, edges)
}

/// A synthetic corpus small enough for a full run in a second or two.
pub fn small_spec(seed: u64) -> coordnet::pipeline::SynthSpec {
    coordnet::pipeline::SynthSpec {
        n_organic_users: 80,
        n_coordinated_users: 8,
        coordination_groups: 2,
        topics: 2,
        popular_hashtags_per_topic: 10,
        long_tail_hashtags: 300,
        bursts_per_group: 20,
        seed,
        ..Default::default()
    }
}

/// Write `spec`'s corpus under `dir/input` and return a fast config writing to `dir/out`.
pub fn small_run(
    dir: &std::path::Path,
    spec: &coordnet::pipeline::SynthSpec,
) -> (coordnet::pipeline::PipelineConfig, coordnet::pipeline::SynthCorpus) {
    let synth = coordnet::pipeline::synth_corpus(spec).unwrap();
    let input = dir.join("input");
    synth.write(&input).unwrap();
    let cfg = coordnet::pipeline::PipelineConfig {
        posts: Some(input.join("posts.jsonl")),
        embeddings: Some(input.join("embeddings.jsonl")),
        walk: coordnet::embedding::WalkConfig {
            walk_length: 20,
            walks_per_node: 3,
            ..Default::default()
        },
        skipgram: coordnet::embedding::SkipGramConfig {
            dim: 16,
            window: 5,
            epochs: 1,
            ..Default::default()
        },
        n_estimators: 30,
        seed: 1,
        out_dir: dir.join("out"),
        ..Default::default()
    };
    (cfg, synth)
}

/// Bytes of every regular file in `dir`, keyed by file name.
pub fn dir_bytes(dir: &std::path::Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect()
}

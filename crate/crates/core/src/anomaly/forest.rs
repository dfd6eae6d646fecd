use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{derive_seed, rng_from};

const EULER_GAMMA: f64 = 0.577_215_664_9;

/// Smallest training set a forest is fitted on.
pub const MIN_TRAINING_ROWS: usize = 8;

/// c(m) = 2 H(m−1) − 2(m−1)/m with H(k) = ln k + γ, and c(m) = 0 for m ≤ 1.
/// Average unsuccessful-search path length in a BST of `m` points.
pub fn average_path_length(m: usize) -> f64 {
    if m <= 1 {
        return 0.0;
    }
    let m1 = (m - 1) as f64;
    2.0 * (m1.ln() + EULER_GAMMA) - 2.0 * m1 / m as f64
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Internal {
        feature: usize,
        split: f64,
        /// Instances with `x[feature] < split`.
        left: usize,
        right: usize,
        /// Training instances reaching this node.
        cover: usize,
    },
    Leaf {
        cover: usize,
        depth: usize,
    },
}

impl Node {
    pub fn cover(&self) -> usize {
        match *self {
            Node::Internal { cover, .. } | Node::Leaf { cover, .. } => cover,
        }
    }
}

/// A fitted isolation tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct IsolationTree {
    nodes: Vec<Node>,
}

impl IsolationTree {
    /// Assemble a tree by hand. Children must come after their parent and every
    /// internal cover must equal the sum of its children's covers.
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::validation("tree has no nodes"));
        }
        for (i, n) in nodes.iter().enumerate() {
            if let Node::Internal {
                left, right, cover, ..
            } = *n
            {
                if left <= i || right <= i || left >= nodes.len() || right >= nodes.len() {
                    return Err(Error::validation(format!("bad child index at node {i}")));
                }
                if nodes[left].cover() + nodes[right].cover() != cover || cover == 0 {
                    return Err(Error::validation(format!("inconsistent cover at node {i}")));
                }
            }
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Value of a leaf: its depth plus the c(size) adjustment for the
    /// instances it did not separate.
    pub fn leaf_value(cover: usize, depth: usize) -> f64 {
        depth as f64 + average_path_length(cover)
    }

    pub fn path_length(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Internal {
                    feature,
                    split,
                    left,
                    right,
                    ..
                } => i = if x[feature] < split { left } else { right },
                Node::Leaf { cover, depth } => return Self::leaf_value(cover, depth),
            }
        }
    }

    pub fn height(&self) -> usize {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf { depth, .. } => Some(*depth),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_estimators: usize,
    /// Requested subsample size ψ; the effective size is `min(ψ, n)`.
    pub psi: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            psi: 256,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    trees: Vec<IsolationTree>,
    psi: usize,
    c_psi: f64,
    n_features: usize,
}

impl ForestModel {
    pub fn from_trees(trees: Vec<IsolationTree>, psi: usize, n_features: usize) -> Result<Self> {
        if trees.is_empty() || psi < 2 {
            return Err(Error::validation("forest needs trees and psi >= 2"));
        }
        Ok(Self {
            trees,
            psi,
            c_psi: average_path_length(psi),
            n_features,
        })
    }

    pub fn trees(&self) -> &[IsolationTree] {
        &self.trees
    }

    /// Effective subsample size.
    pub fn psi(&self) -> usize {
        self.psi
    }

    pub fn c_psi(&self) -> f64 {
        self.c_psi
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::validation(format!(
                "expected {} features, got {}",
                self.n_features,
                x.len()
            )));
        }
        Ok(())
    }

    /// E[h(x)], the mean path length over trees.
    pub fn expected_depth(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        let total: f64 = self.trees.iter().map(|t| t.path_length(x)).sum();
        Ok(total / self.trees.len() as f64)
    }

    /// s(x) = 2^(−E[h(x)] / c(ψ)).
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        Ok(score_from_depth(self.expected_depth(x)?, self.c_psi))
    }
}

pub fn score_from_depth(expected_depth: f64, c_psi: f64) -> f64 {
    2f64.powf(-expected_depth / c_psi)
}

fn build<R: Rng>(
    rows: &[Vec<f64>],
    idx: &mut [usize],
    depth: usize,
    limit: usize,
    rng: &mut R,
    nodes: &mut Vec<Node>,
) -> usize {
    let me = nodes.len();
    let cover = idx.len();
    nodes.push(Node::Leaf { cover, depth });
    if depth >= limit || cover <= 1 {
        return me;
    }

    let n_features = rows[idx[0]].len();
    let splittable: Vec<(usize, f64, f64)> = (0..n_features)
        .filter_map(|f| {
            let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                (lo.min(rows[r][f]), hi.max(rows[r][f]))
            });
            let mid = lo + (hi - lo) / 2.0;
            (lo < mid && mid < hi).then_some((f, lo, hi))
        })
        .collect();
    if splittable.is_empty() {
        return me;
    }

    let (feature, lo, hi) = splittable[rng.random_range(0..splittable.len())];
    let split = loop {
        let s = lo + rng.random::<f64>() * (hi - lo);
        if lo < s && s < hi {
            break s;
        }
    };

    let mut cut = 0;
    for k in 0..idx.len() {
        if rows[idx[k]][feature] < split {
            idx.swap(k, cut);
            cut += 1;
        }
    }
    let (l, r) = idx.split_at_mut(cut);
    let left = build(rows, l, depth + 1, limit, rng, nodes);
    let right = build(rows, r, depth + 1, limit, rng, nodes);
    nodes[me] = Node::Internal {
        feature,
        split,
        left,
        right,
        cover,
    };
    me
}

/// Fit an isolation forest. Each tree sees a uniform subsample of `min(ψ, n)`
/// rows drawn without replacement and grows to at most ⌈log2 ψ⌉ levels. Only
/// features that vary at a node are split on; a node whose instances are all
/// identical becomes a leaf.
pub fn fit_forest(rows: &[Vec<f64>], params: &ForestParams) -> Result<ForestModel> {
    if rows.len() < MIN_TRAINING_ROWS {
        return Err(Error::validation(format!(
            "isolation forest needs at least {MIN_TRAINING_ROWS} rows, got {}",
            rows.len()
        )));
    }
    if params.n_estimators == 0 || params.psi < 2 {
        return Err(Error::validation("need n_estimators >= 1 and psi >= 2"));
    }
    let n_features = rows[0].len();
    if n_features == 0 || rows.iter().any(|r| r.len() != n_features) {
        return Err(Error::validation("rows must share a non-zero feature count"));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::validation("feature matrix has non-finite values"));
    }

    let psi = params.psi.min(rows.len());
    let limit = (psi as f64).log2().ceil() as usize;
    let trees = (0..params.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from(derive_seed(params.seed, &[t as u64]));
            let mut idx = sample(&mut rng, rows.len(), psi).into_vec();
            let mut nodes = Vec::new();
            build(rows, &mut idx, 0, limit, &mut rng, &mut nodes);
            IsolationTree { nodes }
        })
        .collect();

    ForestModel::from_trees(trees, psi, n_features)
}

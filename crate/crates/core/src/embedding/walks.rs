use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Adjacency, WeightedGraph};
use crate::util::{derive_seed, rng_from};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WalkConfig {
    /// Return parameter: weight 1/p for stepping back to the previous node.
    pub p: f64,
    /// In-out parameter: weight 1/q for moving away from the previous node.
    pub q: f64,
    pub walk_length: usize,
    pub walks_per_node: usize,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            p: 1.0,
            q: 1.0,
            walk_length: 80,
            walks_per_node: 10,
            seed: 0,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p.is_finite()) || !(self.q > 0.0 && self.q.is_finite()) {
            return Err(Error::validation("node2vec p and q must be positive"));
        }
        if self.walk_length < 2 {
            return Err(Error::validation("walk_length must be at least 2"));
        }
        if self.walks_per_node < 1 {
            return Err(Error::validation("walks_per_node must be at least 1"));
        }
        Ok(())
    }
}

/// Normalized next-step distribution at `cur`, having arrived from `prev`.
pub fn transition_probabilities(
    adj: &Adjacency,
    prev: Option<usize>,
    cur: usize,
    p: f64,
    q: f64,
) -> Vec<(usize, f64)> {
    let weights = unnormalized(adj, prev, cur, p, q);
    let total: f64 = weights.iter().map(|w| w.1).sum();
    weights.into_iter().map(|(x, w)| (x, w / total)).collect()
}

fn unnormalized(
    adj: &Adjacency,
    prev: Option<usize>,
    cur: usize,
    p: f64,
    q: f64,
) -> Vec<(usize, f64)> {
    adj.neighbors(cur)
        .iter()
        .map(|&(x, w)| {
            let bias = match prev {
                None => 1.0,
                Some(t) if x == t => 1.0 / p,
                Some(t) if adj.has_edge(x, t) => 1.0,
                Some(_) => 1.0 / q,
            };
            (x, w * bias)
        })
        .collect()
}

fn step<R: Rng>(
    adj: &Adjacency,
    prev: Option<usize>,
    cur: usize,
    cfg: &WalkConfig,
    rng: &mut R,
) -> usize {
    let nbrs = adj.neighbors(cur);
    if nbrs.len() == 1 {
        return nbrs[0].0;
    }
    let unbiased = cfg.p == 1.0 && cfg.q == 1.0;
    let weights: Vec<(usize, f64)> = if unbiased || prev.is_none() {
        nbrs.to_vec()
    } else {
        unnormalized(adj, prev, cur, cfg.p, cfg.q)
    };
    let total: f64 = weights.iter().map(|w| w.1).sum();
    let mut r = rng.random::<f64>() * total;
    for &(x, w) in &weights {
        if r < w {
            return x;
        }
        r -= w;
    }
    weights[weights.len() - 1].0
}

/// `walks_per_node` rounds; each round starts one walk at every non-isolated
/// node in a shuffled order. Walk `(node, round)` draws from its own RNG
/// stream, so output does not depend on the thread count.
pub fn generate_walks<G: WeightedGraph + ?Sized>(
    g: &G,
    cfg: &WalkConfig,
) -> Result<Vec<Vec<usize>>> {
    cfg.validate()?;
    let adj = Adjacency::from_graph(g);
    let starts: Vec<usize> = (0..adj.len()).filter(|&i| adj.degree(i) > 0).collect();

    let mut walks = Vec::with_capacity(starts.len() * cfg.walks_per_node);
    for round in 0..cfg.walks_per_node {
        let mut order = starts.clone();
        order.shuffle(&mut rng_from(derive_seed(cfg.seed, &[u64::MAX, round as u64])));
        let batch: Vec<Vec<usize>> = order
            .par_iter()
            .map(|&start| {
                let mut rng = rng_from(derive_seed(cfg.seed, &[start as u64, round as u64]));
                let mut walk = Vec::with_capacity(cfg.walk_length);
                walk.push(start);
                let mut prev = None;
                let mut cur = start;
                while walk.len() < cfg.walk_length {
                    let next = step(&adj, prev, cur, cfg, &mut rng);
                    walk.push(next);
                    prev = Some(cur);
                    cur = next;
                }
                walk
            })
            .collect();
        walks.extend(batch);
    }
    Ok(walks)
}

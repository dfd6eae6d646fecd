//! Noise-corrected backbone extraction.
//!
//! Edge weights are compared against a binomial null in which an edge between
//! `i` and `j` draws `n..` trials with success probability `n_i. n_.j / n..²`.
//! An edge survives when its weight exceeds the null expectation by more than
//! `delta` standard deviations.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cosharing::CoShareGraph;
use crate::error::{Error, Result};
use crate::graph::{csv_field, WeightedGraph};

/// Threshold that approximates a one-sided p-value of 0.01.
pub const DEFAULT_DELTA: f64 = 2.32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeNull {
    pub probability: f64,
    pub expected: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NullModelStats {
    /// n_i.: weighted degree per node index (zero for isolated nodes).
    pub strength: Vec<f64>,
    /// n..: sum of strengths, twice the total undirected weight.
    pub total: f64,
    pub edges: BTreeMap<(usize, usize), EdgeNull>,
}

/// Beta(a, b) prior on the edge probability. The posterior mean
/// `(E + a) / (n.. + a + b)` replaces the plug-in estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPrior {
    pub a: f64,
    pub b: f64,
}

impl FromStr for BetaPrior {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let parse = |x: &str| {
            x.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v >= 0.0)
                .ok_or_else(|| Error::validation(format!("bad prior parameter `{x}`")))
        };
        match parts.as_slice() {
            [a, b] => Ok(BetaPrior {
                a: parse(a)?,
                b: parse(b)?,
            }),
            _ => Err(Error::validation("prior must be `a,b`")),
        }
    }
}

pub fn null_model(g: &CoShareGraph) -> Result<NullModelStats> {
    null_model_with_prior(g, None)
}

pub fn null_model_with_prior(g: &CoShareGraph, prior: Option<BetaPrior>) -> Result<NullModelStats> {
    if g.edge_count() == 0 {
        return Err(Error::EmptyGraph);
    }
    let mut strength = vec![0.0; g.nodes().len()];
    for (&(i, j), &w) in g.edges() {
        strength[i] += w as f64;
        strength[j] += w as f64;
    }
    let total: f64 = strength.iter().sum();

    let edges = g
        .edges()
        .keys()
        .map(|&(i, j)| {
            let plug = strength[i] * strength[j] / (total * total);
            let p = match prior {
                None => plug,
                Some(BetaPrior { a, b }) => (total * plug + a) / (total + a + b),
            };
            let null = EdgeNull {
                probability: p,
                expected: total * p,
                variance: total * p * (1.0 - p),
            };
            ((i, j), null)
        })
        .collect();

    Ok(NullModelStats {
        strength,
        total,
        edges,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KeepRule {
    /// Keep when `W - E > delta * sqrt(V)`.
    #[default]
    Residual,
    /// Keep when `W > delta * sqrt(V)`.
    Raw,
}

impl fmt::Display for KeepRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KeepRule::Residual => "residual",
            KeepRule::Raw => "raw",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackboneOptions {
    pub delta: f64,
    pub rule: KeepRule,
    pub prior: Option<BetaPrior>,
}

impl Default for BackboneOptions {
    fn default() -> Self {
        Self {
            delta: DEFAULT_DELTA,
            rule: KeepRule::Residual,
            prior: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackboneEdge {
    pub weight: u64,
    /// `(W - E) / sqrt(V)`; infinite when the variance vanishes.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackboneGraph {
    nodes: Vec<String>,
    index: HashMap<String, usize>,
    edges: BTreeMap<(usize, usize), BackboneEdge>,
    delta: f64,
    rule: KeepRule,
}

impl BackboneGraph {
    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn edges(&self) -> &BTreeMap<(usize, usize), BackboneEdge> {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn rule(&self) -> KeepRule {
        self.rule
    }

    pub fn edge(&self, a: &str, b: &str) -> Option<&BackboneEdge> {
        let (i, j) = (self.index_of(a)?, self.index_of(b)?);
        self.edges.get(&(i.min(j), i.max(j)))
    }

    /// Build directly from edges; used for fixtures and by `read_csv`.
    pub fn from_parts(
        nodes: BTreeSet<String>,
        edges: impl IntoIterator<Item = (String, String, BackboneEdge)>,
        delta: f64,
        rule: KeepRule,
    ) -> Result<Self> {
        let edges: Vec<_> = edges.into_iter().collect();
        let mut all = nodes;
        for (a, b, _) in &edges {
            all.insert(a.clone());
            all.insert(b.clone());
        }
        let (nodes, index) = crate::graph::index_nodes(all);
        let mut map = BTreeMap::new();
        for (a, b, e) in edges {
            let (i, j) = (index[&a], index[&b]);
            if i == j {
                return Err(Error::validation(format!("self-loop on `{a}`")));
            }
            if map.insert((i.min(j), i.max(j)), e).is_some() {
                return Err(Error::validation(format!("duplicate edge {a}-{b}")));
            }
        }
        Ok(Self {
            nodes,
            index,
            edges: map,
            delta,
            rule,
        })
    }

    /// Edge list CSV `user_a,user_b,weight,score`, rows sorted.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "user_a,user_b,weight,score").map_err(io)?;
        for (&(i, j), e) in &self.edges {
            writeln!(
                w,
                "{},{},{},{}",
                csv_field(&self.nodes[i]),
                csv_field(&self.nodes[j]),
                e.weight,
                e.score
            )
            .map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read_csv(
        path: &Path,
        extra_nodes: BTreeSet<String>,
        delta: f64,
        rule: KeepRule,
    ) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::csv(path, e))?;
            let bad = |m: &str| Error::Record {
                path: path.to_path_buf(),
                line: i + 2,
                message: m.to_string(),
            };
            let a = rec.get(0).ok_or_else(|| bad("missing user_a"))?;
            let b = rec.get(1).ok_or_else(|| bad("missing user_b"))?;
            let weight: u64 = rec
                .get(2)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| bad("bad weight"))?;
            let score: f64 = rec
                .get(3)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| bad("bad score"))?;
            rows.push((a.to_string(), b.to_string(), BackboneEdge { weight, score }));
        }
        Self::from_parts(extra_nodes, rows, delta, rule)
    }
}

impl WeightedGraph for BackboneGraph {
    fn node_ids(&self) -> &[String] {
        &self.nodes
    }

    fn edge_list(&self) -> Vec<(usize, usize, f64)> {
        self.edges
            .iter()
            .map(|(&(i, j), e)| (i, j, e.weight as f64))
            .collect()
    }
}

/// Keep the edges whose weight is significantly above the null expectation.
pub fn extract_backbone(g: &CoShareGraph, opts: &BackboneOptions) -> Result<BackboneGraph> {
    if !(opts.delta >= 0.0) || !opts.delta.is_finite() {
        return Err(Error::validation(format!(
            "delta must be a finite non-negative number, got {}",
            opts.delta
        )));
    }
    let nodes: Vec<String> = g.nodes().to_vec();
    let index = nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), i))
        .collect();
    if g.edge_count() == 0 {
        return Ok(BackboneGraph {
            nodes,
            index,
            edges: BTreeMap::new(),
            delta: opts.delta,
            rule: opts.rule,
        });
    }

    let stats = null_model_with_prior(g, opts.prior)?;
    let mut edges = BTreeMap::new();
    for (&key, &w) in g.edges() {
        let null = stats.edges[&key];
        let w = w as f64;
        let residual = w - null.expected;
        let sd = null.variance.max(0.0).sqrt();
        let keep = if sd == 0.0 {
            residual > 0.0
        } else {
            match opts.rule {
                KeepRule::Residual => residual > opts.delta * sd,
                KeepRule::Raw => w > opts.delta * sd,
            }
        };
        if keep {
            let score = if sd == 0.0 {
                f64::INFINITY
            } else {
                residual / sd
            };
            edges.insert(
                key,
                BackboneEdge {
                    weight: w as u64,
                    score,
                },
            );
        }
    }

    Ok(BackboneGraph {
        nodes,
        index,
        edges,
        delta: opts.delta,
        rule: opts.rule,
    })
}

//! User–hashtag share counts and their projection onto a weighted user graph.
//!
//! The weight between two users is the sum, over the hashtags both used, of the
//! smaller of their per-hashtag post counts.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{csv_field, index_nodes, WeightedGraph};
use crate::ingest::Corpus;

/// σ(user, hashtag): number of the user's posts containing the hashtag.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BipartiteCounts {
    sigma: BTreeMap<(String, String), u32>,
}

impl BipartiteCounts {
    /// Build from explicit counts; zero entries are dropped.
    pub fn from_counts<I, U, H>(counts: I) -> Self
    where
        I: IntoIterator<Item = (U, H, u32)>,
        U: Into<String>,
        H: Into<String>,
    {
        let mut sigma = BTreeMap::new();
        for (u, h, c) in counts {
            if c > 0 {
                *sigma.entry((u.into(), h.into())).or_insert(0) += c;
            }
        }
        Self { sigma }
    }

    pub fn get(&self, user: &str, hashtag: &str) -> u32 {
        self.sigma
            .get(&(user.to_string(), hashtag.to_string()))
            .copied()
            .unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, u32)> {
        self.sigma
            .iter()
            .map(|((u, h), c)| (u.as_str(), h.as_str(), *c))
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    pub fn users(&self) -> BTreeSet<String> {
        self.sigma.keys().map(|(u, _)| u.clone()).collect()
    }
}

/// Count each post once per distinct hashtag it carries.
pub fn count_shares(corpus: &Corpus) -> BipartiteCounts {
    let mut sigma: BTreeMap<(String, String), u32> = BTreeMap::new();
    for p in corpus.posts() {
        let tags: BTreeSet<&str> = p.hashtags.iter().map(String::as_str).collect();
        for t in tags {
            *sigma
                .entry((p.user_id.clone(), t.to_string()))
                .or_insert(0) += 1;
        }
    }
    BipartiteCounts { sigma }
}

/// Undirected co-share graph. Node indices follow lexicographic id order and
/// edges are keyed `(i, j)` with `i < j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoShareGraph {
    nodes: Vec<String>,
    index: HashMap<String, usize>,
    edges: BTreeMap<(usize, usize), u64>,
}

impl CoShareGraph {
    pub fn from_parts(
        nodes: BTreeSet<String>,
        weighted: impl IntoIterator<Item = (String, String, u64)>,
    ) -> Result<Self> {
        let mut all = nodes;
        let weighted: Vec<_> = weighted.into_iter().collect();
        for (a, b, _) in &weighted {
            all.insert(a.clone());
            all.insert(b.clone());
        }
        let (nodes, index) = index_nodes(all);
        let mut edges = BTreeMap::new();
        for (a, b, w) in weighted {
            let (i, j) = (index[&a], index[&b]);
            if i == j {
                return Err(Error::validation(format!("self-loop on `{a}`")));
            }
            if w == 0 {
                return Err(Error::validation(format!("zero weight on {a}-{b}")));
            }
            let key = (i.min(j), i.max(j));
            if edges.insert(key, w).is_some() {
                return Err(Error::validation(format!("duplicate edge {a}-{b}")));
            }
        }
        Ok(Self {
            nodes,
            index,
            edges,
        })
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn edges(&self) -> &BTreeMap<(usize, usize), u64> {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn weight(&self, a: &str, b: &str) -> Option<u64> {
        let (i, j) = (self.index_of(a)?, self.index_of(b)?);
        self.edges.get(&(i.min(j), i.max(j))).copied()
    }

    /// Same node set, edges restricted by a predicate on `(i, j, w)`.
    pub fn retain_edges(&self, mut keep: impl FnMut(usize, usize, u64) -> bool) -> Self {
        Self {
            nodes: self.nodes.clone(),
            index: self.index.clone(),
            edges: self
                .edges
                .iter()
                .filter(|(&(i, j), &w)| keep(i, j, w))
                .map(|(k, w)| (*k, *w))
                .collect(),
        }
    }

    /// Edge list CSV `user_a,user_b,weight`, rows sorted.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "user_a,user_b,weight").map_err(io)?;
        for (&(i, j), wt) in &self.edges {
            writeln!(
                w,
                "{},{},{}",
                csv_field(&self.nodes[i]),
                csv_field(&self.nodes[j]),
                wt
            )
            .map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Read an edge list; `extra_nodes` restores isolated nodes the CSV cannot carry.
    pub fn read_csv(path: &Path, extra_nodes: BTreeSet<String>) -> Result<Self> {
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
            let w: u64 = rec
                .get(2)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| bad("weight must be a positive integer"))?;
            rows.push((a.to_string(), b.to_string(), w));
        }
        Self::from_parts(extra_nodes, rows)
    }
}

impl WeightedGraph for CoShareGraph {
    fn node_ids(&self) -> &[String] {
        &self.nodes
    }

    fn edge_list(&self) -> Vec<(usize, usize, f64)> {
        self.edges
            .iter()
            .map(|(&(i, j), &w)| (i, j, w as f64))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ProjectOptions {
    /// Skip hashtags used by more than this many users.
    pub max_hashtag_degree: Option<usize>,
}

/// Project counts onto users: W_ij = Σ_n min(σ(i,n), σ(j,n)).
///
/// Works per hashtag over its user list, so cost scales with the sum of squared
/// hashtag degrees rather than with all user pairs.
pub fn project(counts: &BipartiteCounts, opts: ProjectOptions) -> CoShareGraph {
    let (nodes, index) = index_nodes(counts.users());

    let mut by_tag: BTreeMap<&str, Vec<(usize, u32)>> = BTreeMap::new();
    for (u, h, c) in counts.iter() {
        by_tag.entry(h).or_default().push((index[u], c));
    }

    let mut acc: HashMap<(usize, usize), u64> = HashMap::new();
    for (tag, users) in &by_tag {
        if let Some(cap) = opts.max_hashtag_degree {
            if users.len() > cap {
                log::debug!("skipping hashtag `{tag}` used by {} users", users.len());
                continue;
            }
        }
        for (x, &(i, ci)) in users.iter().enumerate() {
            for &(j, cj) in &users[x + 1..] {
                let key = (i.min(j), i.max(j));
                *acc.entry(key).or_insert(0) += u64::from(ci.min(cj));
            }
        }
    }

    CoShareGraph {
        nodes,
        index,
        edges: acc.into_iter().collect(),
    }
}

/// Drop weight-1 edges; the node set is unchanged.
pub fn filter_weight_one(g: &CoShareGraph) -> CoShareGraph {
    g.retain_edges(|_, _, w| w > 1)
}

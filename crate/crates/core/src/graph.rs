//! Shared undirected weighted-graph plumbing: a view trait, adjacency lists,
//! and the node-list file used alongside edge-list CSVs.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Read-only view of an undirected weighted graph whose nodes are indexed
/// `0..n` in lexicographic order of their ids.
pub trait WeightedGraph {
    fn node_ids(&self) -> &[String];

    /// Every undirected edge once, as `(i, j, w)` with `i < j`, sorted.
    fn edge_list(&self) -> Vec<(usize, usize, f64)>;

    fn node_count(&self) -> usize {
        self.node_ids().len()
    }
}

/// Adjacency lists sorted by neighbour index.
#[derive(Debug, Clone)]
pub struct Adjacency {
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl Adjacency {
    pub fn from_graph<G: WeightedGraph + ?Sized>(g: &G) -> Self {
        Self::from_edges(g.node_count(), &g.edge_list())
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Self {
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j, w) in edges {
            neighbors[i].push((j, w));
            neighbors[j].push((i, w));
        }
        for list in &mut neighbors {
            list.sort_by_key(|&(j, _)| j);
        }
        Self { neighbors }
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn strength(&self, i: usize) -> f64 {
        self.neighbors[i].iter().map(|&(_, w)| w).sum()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i]
            .binary_search_by_key(&j, |&(k, _)| k)
            .is_ok()
    }
}

/// Node list stored next to an edge-list CSV: `graph.csv` → `graph.nodes.csv`.
/// Isolated nodes only survive a round trip through this file.
pub fn nodes_sidecar(edges_path: &Path) -> PathBuf {
    edges_path.with_extension("nodes.csv")
}

pub fn write_nodes(path: &Path, nodes: &[String]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "user").map_err(io)?;
    for n in nodes {
        writeln!(w, "{}", csv_field(n)).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_nodes(path: &Path) -> Result<BTreeSet<String>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut out = BTreeSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        if let Some(u) = rec.get(0) {
            out.insert(u.to_string());
        }
    }
    Ok(out)
}

/// Quote a CSV field only when needed.
pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub(crate) fn index_nodes(nodes: BTreeSet<String>) -> (Vec<String>, std::collections::HashMap<String, usize>) {
    let nodes: Vec<String> = nodes.into_iter().collect();
    let index = nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), i))
        .collect();
    (nodes, index)
}

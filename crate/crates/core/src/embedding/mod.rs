//! node2vec: second-order biased random walks fed to skip-gram with negative
//! sampling. Embeddings are trained on the backbone and used for the
//! node-similarity edge feature.

mod skipgram;
mod walks;

use std::path::Path;

pub use skipgram::{train_skipgram, SkipGramConfig, TrainMode};
pub use walks::{generate_walks, transition_probabilities, WalkConfig};

use crate::error::Result;
use crate::graph::WeightedGraph;
use crate::ingest::{load_embeddings, write_embeddings, EmbeddingTable};
use crate::util::cosine;

/// Per-user vectors. Users without edges have no vector.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeEmbeddings {
    table: EmbeddingTable,
    missing: Vec<String>,
}

impl NodeEmbeddings {
    pub fn dim(&self) -> usize {
        self.table.dim()
    }

    pub fn get(&self, user: &str) -> Option<&[f64]> {
        self.table.get(user)
    }

    pub fn table(&self) -> &EmbeddingTable {
        &self.table
    }

    /// Users that received no vector (isolated in the graph).
    pub fn missing(&self) -> &[String] {
        &self.missing
    }

    /// Cosine of two users' vectors, `None` when either has no vector.
    pub fn node_cosine(&self, a: &str, b: &str) -> Option<f64> {
        let (va, vb) = (self.get(a)?, self.get(b)?);
        let c = cosine(va, vb);
        debug_assert!(c.is_some(), "trained vectors are never zero");
        c
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_embeddings(path, &self.table, true)
    }

    /// Load a dump; `nodes` lists every graph node so missing ones are recorded.
    pub fn read(path: &Path, nodes: &[String]) -> Result<Self> {
        let table = load_embeddings(path)?;
        let missing = nodes
            .iter()
            .filter(|n| table.get(n).is_none())
            .cloned()
            .collect();
        Ok(Self { table, missing })
    }
}

/// Walks plus training, mapped back to user ids.
pub fn embed_nodes<G: WeightedGraph + ?Sized>(
    g: &G,
    walk_cfg: &WalkConfig,
    sg_cfg: &SkipGramConfig,
) -> Result<NodeEmbeddings> {
    let walks = generate_walks(g, walk_cfg)?;
    let vectors = if walks.is_empty() {
        vec![None; g.node_count()]
    } else {
        train_skipgram(&walks, g.node_count(), sg_cfg)?
    };
    let mut table = EmbeddingTable::new(sg_cfg.dim)?;
    let mut missing = Vec::new();
    for (id, v) in g.node_ids().iter().zip(vectors) {
        match v {
            Some(v) => table.insert(id.clone(), v)?,
            None => missing.push(id.clone()),
        }
    }
    if !missing.is_empty() {
        log::info!("{} isolated nodes received no embedding", missing.len());
    }
    Ok(NodeEmbeddings { table, missing })
}

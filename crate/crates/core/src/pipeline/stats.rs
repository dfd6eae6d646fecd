use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::community::Partition;
use crate::error::{Error, Result};
use crate::graph::{Adjacency, WeightedGraph};
use crate::util::mean_sd;

/// How the unnamed "centralization" row of the network table is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CentralizationKind {
    /// Freeman degree centralization on unweighted degrees.
    #[default]
    Degree,
    /// Freeman centralization of strengths, scaled by the largest edge weight.
    Strength,
}

impl fmt::Display for CentralizationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CentralizationKind::Degree => "degree",
            CentralizationKind::Strength => "strength",
        })
    }
}

impl FromStr for CentralizationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "degree" => Ok(Self::Degree),
            "strength" => Ok(Self::Strength),
            _ => Err(Error::validation(format!("unknown centralization `{s}`"))),
        }
    }
}

/// One column of the network summary table. `None` marks an undefined value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkStats {
    pub nodes: usize,
    pub edges: usize,
    pub density: Option<f64>,
    pub centralization: Option<f64>,
    pub modularity: Option<f64>,
    pub mean_edge_weight: Option<f64>,
    pub sd_edge_weight: Option<f64>,
    pub mean_degree: f64,
    pub sd_degree: f64,
}

pub fn network_stats<G: WeightedGraph + ?Sized>(
    g: &G,
    partition: Option<&Partition>,
    kind: CentralizationKind,
) -> Result<NetworkStats> {
    let n = g.node_count();
    if n == 0 {
        return Err(Error::validation("network statistics need at least one node"));
    }
    let edges = g.edge_list();
    let adj = Adjacency::from_edges(n, &edges);
    let degrees: Vec<f64> = (0..n).map(|i| adj.degree(i) as f64).collect();
    let (mean_degree, sd_degree) = mean_sd(&degrees).unwrap_or((0.0, 0.0));

    let density = (n >= 2).then(|| 2.0 * edges.len() as f64 / (n as f64 * (n as f64 - 1.0)));
    let centralization = (n >= 3).then(|| {
        let (values, scale) = match kind {
            CentralizationKind::Degree => (degrees.clone(), 1.0),
            CentralizationKind::Strength => {
                let wmax = edges.iter().map(|e| e.2).fold(0.0, f64::max);
                ((0..n).map(|i| adj.strength(i)).collect(), wmax.max(f64::MIN_POSITIVE))
            }
        };
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let spread: f64 = values.iter().map(|v| max - v).sum();
        spread / ((n as f64 - 1.0) * (n as f64 - 2.0) * scale)
    });
    let weights: Vec<f64> = edges.iter().map(|e| e.2).collect();
    let weight_stats = mean_sd(&weights);
    let modularity = match partition {
        Some(p) if !edges.is_empty() => Some(p.modularity()),
        _ => None,
    };

    Ok(NetworkStats {
        nodes: n,
        edges: edges.len(),
        density,
        centralization,
        modularity,
        mean_edge_weight: weight_stats.map(|s| s.0),
        sd_edge_weight: weight_stats.map(|s| s.1),
        mean_degree,
        sd_degree,
    })
}

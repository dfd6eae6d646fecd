//! Weighted modularity and Louvain community detection.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::graph::{csv_field, WeightedGraph};
use crate::util::rng_from;

/// Cluster assignment per node index. Ids are dense, with cluster 0 the largest.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    assignment: Vec<usize>,
    modularity: f64,
    /// Modularity of the all-singletons start followed by one value per Louvain pass.
    pass_modularity: Vec<f64>,
}

impl Partition {
    /// Wrap an arbitrary assignment, renumbering it by size and computing Q.
    /// Q is reported as 0 for an edgeless graph.
    pub fn from_assignment<G: WeightedGraph + ?Sized>(g: &G, assignment: &[usize]) -> Result<Self> {
        if assignment.len() != g.node_count() {
            return Err(Error::validation(format!(
                "assignment covers {} of {} nodes",
                assignment.len(),
                g.node_count()
            )));
        }
        let assignment = renumber_by_size(assignment);
        let q = match modularity(g, &assignment) {
            Ok(q) => q,
            Err(Error::EmptyGraph) => 0.0,
            Err(e) => return Err(e),
        };
        Ok(Self {
            assignment,
            modularity: q,
            pass_modularity: vec![q],
        })
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn cluster_of(&self, node: usize) -> usize {
        self.assignment[node]
    }

    pub fn modularity(&self) -> f64 {
        self.modularity
    }

    pub fn pass_modularity(&self) -> &[f64] {
        &self.pass_modularity
    }

    pub fn cluster_count(&self) -> usize {
        self.assignment.iter().max().map_or(0, |m| m + 1)
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.cluster_count()];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }

    /// CSV `user,cluster` in node order.
    pub fn write_csv(&self, path: &Path, nodes: &[String]) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "user,cluster").map_err(io)?;
        for (n, c) in nodes.iter().zip(&self.assignment) {
            writeln!(w, "{},{}", csv_field(n), c).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read_csv<G: WeightedGraph + ?Sized>(path: &Path, g: &G) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let mut by_user = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::csv(path, e))?;
            let (Some(u), Some(c)) = (rec.get(0), rec.get(1).and_then(|c| c.parse::<usize>().ok()))
            else {
                return Err(Error::validation(format!(
                    "{}: malformed partition row",
                    path.display()
                )));
            };
            by_user.insert(u.to_string(), c);
        }
        let assignment = g
            .node_ids()
            .iter()
            .map(|n| {
                by_user.get(n).copied().ok_or_else(|| {
                    Error::validation(format!("partition has no cluster for `{n}`"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_assignment(g, &assignment)
    }
}

/// Q = (1/2m) Σ_ij [A_ij − k_i k_j / 2m] δ(c_i, c_j).
pub fn modularity<G: WeightedGraph + ?Sized>(g: &G, assignment: &[usize]) -> Result<f64> {
    if assignment.len() != g.node_count() {
        return Err(Error::validation("assignment does not cover every node"));
    }
    let edges = g.edge_list();
    let m: f64 = edges.iter().map(|e| e.2).sum();
    if edges.is_empty() || m <= 0.0 {
        return Err(Error::EmptyGraph);
    }
    let k = assignment.iter().max().map_or(0, |c| c + 1);
    let mut inner = vec![0.0; k];
    let mut tot = vec![0.0; k];
    for &(i, j, w) in &edges {
        tot[assignment[i]] += w;
        tot[assignment[j]] += w;
        if assignment[i] == assignment[j] {
            inner[assignment[i]] += 2.0 * w;
        }
    }
    let m2 = 2.0 * m;
    Ok(inner
        .iter()
        .zip(&tot)
        .map(|(a, t)| a / m2 - (t / m2) * (t / m2))
        .sum())
}

/// Renumber so that cluster 0 is the largest; ties go to the cluster holding
/// the smallest node index.
fn renumber_by_size(assignment: &[usize]) -> Vec<usize> {
    let mut info: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for (node, &c) in assignment.iter().enumerate() {
        let e = info.entry(c).or_insert((0, node));
        e.0 += 1;
    }
    let mut order: Vec<(usize, usize, usize)> =
        info.into_iter().map(|(c, (size, first))| (c, size, first)).collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    let remap: BTreeMap<usize, usize> = order
        .iter()
        .enumerate()
        .map(|(new, &(old, _, _))| (old, new))
        .collect();
    assignment.iter().map(|c| remap[c]).collect()
}

/// Graph at one aggregation level. `self_loops[i]` holds A_ii (twice the
/// internal weight folded into the super-node).
struct Level {
    adj: Vec<Vec<(usize, f64)>>,
    self_loops: Vec<f64>,
    degree: Vec<f64>,
}

impl Level {
    fn from_graph<G: WeightedGraph + ?Sized>(g: &G) -> Self {
        let n = g.node_count();
        let mut adj = vec![Vec::new(); n];
        let mut degree = vec![0.0; n];
        for (i, j, w) in g.edge_list() {
            adj[i].push((j, w));
            adj[j].push((i, w));
            degree[i] += w;
            degree[j] += w;
        }
        Self {
            adj,
            self_loops: vec![0.0; n],
            degree,
        }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    fn modularity(&self, comm: &[usize], m2: f64) -> f64 {
        let k = comm.iter().max().map_or(0, |c| c + 1);
        let mut inner = vec![0.0; k];
        let mut tot = vec![0.0; k];
        for i in 0..self.len() {
            let c = comm[i];
            tot[c] += self.degree[i];
            inner[c] += self.self_loops[i];
            for &(j, w) in &self.adj[i] {
                if comm[j] == c {
                    inner[c] += w;
                }
            }
        }
        inner
            .iter()
            .zip(&tot)
            .map(|(a, t)| a / m2 - (t / m2) * (t / m2))
            .sum()
    }

    /// Local moving until no node improves. Returns dense community ids and
    /// whether any node moved.
    fn local_moves(&self, m2: f64, order: &[usize]) -> (Vec<usize>, bool) {
        let n = self.len();
        let mut comm: Vec<usize> = (0..n).collect();
        let mut tot = self.degree.clone();
        let mut link = vec![0.0; n];
        let mut touched: Vec<usize> = Vec::new();
        let mut any_move = false;

        for _sweep in 0..10_000 {
            let mut moved = false;
            for &i in order {
                let ci = comm[i];
                let ki = self.degree[i];
                if ki == 0.0 {
                    continue;
                }
                for &(j, w) in &self.adj[i] {
                    let c = comm[j];
                    if link[c] == 0.0 {
                        touched.push(c);
                    }
                    link[c] += w;
                }
                tot[ci] -= ki;
                let gain = |c: usize, link: &[f64], tot: &[f64]| link[c] - tot[c] * ki / m2;
                let stay = gain(ci, &link, &tot);
                let eps = 1e-12 * ki.max(1.0);

                touched.sort_unstable();
                let mut best = ci;
                let mut best_gain = stay;
                for &c in &touched {
                    if c == ci {
                        continue;
                    }
                    let g = gain(c, &link, &tot);
                    if g > best_gain + eps && g > stay + eps {
                        best = c;
                        best_gain = g;
                    }
                }

                tot[best] += ki;
                if best != ci {
                    comm[i] = best;
                    moved = true;
                }
                for &c in &touched {
                    link[c] = 0.0;
                }
                touched.clear();
            }
            if !moved {
                break;
            }
            any_move = true;
        }

        let mut remap = vec![usize::MAX; n];
        let mut next = 0;
        for c in comm.iter_mut() {
            if remap[*c] == usize::MAX {
                remap[*c] = next;
                next += 1;
            }
            *c = remap[*c];
        }
        (comm, any_move)
    }

    fn aggregate(&self, comm: &[usize]) -> Level {
        let k = comm.iter().max().map_or(0, |c| c + 1);
        let mut self_loops = vec![0.0; k];
        let mut degree = vec![0.0; k];
        let mut links: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); k];
        for i in 0..self.len() {
            let c = comm[i];
            degree[c] += self.degree[i];
            self_loops[c] += self.self_loops[i];
            for &(j, w) in &self.adj[i] {
                let d = comm[j];
                if d == c {
                    self_loops[c] += w;
                } else {
                    *links[c].entry(d).or_insert(0.0) += w;
                }
            }
        }
        Level {
            adj: links.into_iter().map(|m| m.into_iter().collect()).collect(),
            self_loops,
            degree,
        }
    }
}

/// Louvain with weighted modularity at resolution 1.
///
/// Node visit order at each level is shuffled by a RNG seeded from `seed`.
/// A node moves to the neighbouring community with the largest gain (smallest
/// id on ties) only if that strictly beats staying put.
pub fn louvain<G: WeightedGraph + ?Sized>(g: &G, seed: u64) -> Partition {
    let n = g.node_count();
    let total: f64 = g.edge_list().iter().map(|e| e.2).sum();
    if total <= 0.0 {
        return Partition {
            assignment: (0..n).collect(),
            modularity: 0.0,
            pass_modularity: vec![0.0],
        };
    }
    let m2 = 2.0 * total;
    let mut rng = rng_from(seed);

    let mut level = Level::from_graph(g);
    let mut membership: Vec<usize> = (0..n).collect();
    let mut history = vec![level.modularity(&(0..n).collect::<Vec<_>>(), m2)];

    loop {
        let mut order: Vec<usize> = (0..level.len()).collect();
        order.shuffle(&mut rng);
        let (comm, moved) = level.local_moves(m2, &order);
        if !moved {
            break;
        }
        history.push(level.modularity(&comm, m2));
        for m in membership.iter_mut() {
            *m = comm[*m];
        }
        level = level.aggregate(&comm);
    }

    let assignment = renumber_by_size(&membership);
    let q = modularity(g, &assignment).unwrap_or(0.0);
    Partition {
        assignment,
        modularity: q,
        pass_modularity: history,
    }
}

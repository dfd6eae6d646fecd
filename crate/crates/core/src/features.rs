//! Per-edge features: co-share weight, content similarity, temporal signature
//! (median shortest inter-arrival time) and node-embedding similarity.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backbone::BackboneGraph;
use crate::community::Partition;
use crate::embedding::NodeEmbeddings;
use crate::error::{Error, Result};
use crate::graph::csv_field;
use crate::ingest::{Corpus, EmbeddingTable};
use crate::util::{cosine, median};

pub const SECONDS_PER_HOUR: f64 = 3600.0;

/// Names used for the four model features, in column order.
pub const FEATURE_NAMES: [&str; 4] = ["weight", "content_sim", "iat_hours", "node_sim"];

#[derive(Debug, Clone, PartialEq, Eq)]
struct Share {
    timestamp: i64,
    post_id: String,
}

/// Each user's posts grouped by hashtag, ordered by time then post id.
#[derive(Debug, Clone, Default)]
pub struct ShareIndex {
    per_user: BTreeMap<String, BTreeMap<String, Vec<Share>>>,
}

impl ShareIndex {
    pub fn new(corpus: &Corpus) -> Self {
        let mut per_user: BTreeMap<String, BTreeMap<String, Vec<Share>>> = BTreeMap::new();
        for p in corpus.posts() {
            let tags = per_user.entry(p.user_id.clone()).or_default();
            let mut seen: Vec<&str> = Vec::with_capacity(p.hashtags.len());
            for t in &p.hashtags {
                if seen.contains(&t.as_str()) {
                    continue;
                }
                seen.push(t);
                tags.entry(t.clone()).or_default().push(Share {
                    timestamp: p.timestamp,
                    post_id: p.post_id.clone(),
                });
            }
        }
        for tags in per_user.values_mut() {
            for shares in tags.values_mut() {
                shares.sort_by(|a, b| {
                    a.timestamp
                        .cmp(&b.timestamp)
                        .then_with(|| a.post_id.cmp(&b.post_id))
                });
            }
        }
        Self { per_user }
    }

    /// Sorted timestamps of `user`'s posts containing `tag`.
    pub fn timeline(&self, user: &str, tag: &str) -> Vec<i64> {
        self.shares(user, tag).iter().map(|s| s.timestamp).collect()
    }

    fn shares(&self, user: &str, tag: &str) -> &[Share] {
        self.per_user
            .get(user)
            .and_then(|t| t.get(tag))
            .map_or(&[], Vec::as_slice)
    }

    /// Hashtags used by both users, sorted.
    pub fn shared_hashtags(&self, a: &str, b: &str) -> Vec<&str> {
        match (self.per_user.get(a), self.per_user.get(b)) {
            (Some(ta), Some(tb)) => ta
                .keys()
                .filter(|k| tb.contains_key(*k))
                .map(String::as_str)
                .collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContentSimilarity {
    pub value: f64,
    /// No shared hashtag had embedded posts on both sides; `value` is 0.
    pub missing: bool,
}

fn mean_embedding(shares: &[Share], emb: &EmbeddingTable) -> Option<Vec<f64>> {
    let mut acc = vec![0.0; emb.dim()];
    let mut n = 0usize;
    for s in shares {
        if let Some(v) = emb.get(&s.post_id) {
            acc.iter_mut().zip(v).for_each(|(a, x)| *a += x);
            n += 1;
        }
    }
    (n > 0).then(|| {
        acc.iter_mut().for_each(|a| *a /= n as f64);
        acc
    })
}

/// Mean over shared hashtags of the cosine between the two users' mean post
/// embeddings under that hashtag.
pub fn content_similarity(
    a: &str,
    b: &str,
    index: &ShareIndex,
    emb: &EmbeddingTable,
) -> ContentSimilarity {
    let mut sum = 0.0;
    let mut n = 0usize;
    for tag in index.shared_hashtags(a, b) {
        let (Some(ma), Some(mb)) = (
            mean_embedding(index.shares(a, tag), emb),
            mean_embedding(index.shares(b, tag), emb),
        ) else {
            continue;
        };
        if let Some(c) = cosine(&ma, &mb) {
            sum += c;
            n += 1;
        }
    }
    if n == 0 {
        ContentSimilarity {
            value: 0.0,
            missing: true,
        }
    } else {
        ContentSimilarity {
            value: sum / n as f64,
            missing: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum IatMode {
    /// All cross-user |t_a − t_b| pairs under the hashtag.
    #[default]
    Cross,
    /// Gaps between consecutive posts of different users on the merged timeline.
    Merged,
}

impl fmt::Display for IatMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IatMode::Cross => "cross",
            IatMode::Merged => "merged",
        })
    }
}

impl std::str::FromStr for IatMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cross" => Ok(IatMode::Cross),
            "merged" => Ok(IatMode::Merged),
            other => Err(Error::validation(format!("unknown iat mode `{other}`"))),
        }
    }
}

fn candidate_gaps(ta: &[i64], tb: &[i64], mode: IatMode) -> Vec<i64> {
    match mode {
        IatMode::Cross => ta
            .iter()
            .flat_map(|x| tb.iter().map(move |y| (x - y).abs()))
            .collect(),
        IatMode::Merged => {
            let mut merged: Vec<(i64, u8)> = ta
                .iter()
                .map(|&t| (t, 0))
                .chain(tb.iter().map(|&t| (t, 1)))
                .collect();
            merged.sort_unstable();
            merged
                .windows(2)
                .filter(|w| w[0].1 != w[1].1)
                .map(|w| w[1].0 - w[0].0)
                .collect()
        }
    }
}

/// Median, in seconds, of the pooled shortest inter-arrival times: for each
/// shared hashtag keep the `min(σ_a, σ_b)` smallest gaps. `None` when the users
/// share no hashtag.
pub fn temporal_signature_seconds(
    a: &str,
    b: &str,
    index: &ShareIndex,
    mode: IatMode,
) -> Option<f64> {
    let mut pooled: Vec<f64> = Vec::new();
    for tag in index.shared_hashtags(a, b) {
        let ta = index.timeline(a, tag);
        let tb = index.timeline(b, tag);
        let keep = ta.len().min(tb.len());
        let mut gaps = candidate_gaps(&ta, &tb, mode);
        gaps.sort_unstable();
        pooled.extend(gaps.into_iter().take(keep).map(|g| g as f64));
    }
    median(&pooled)
}

/// Temporal signature in hours.
pub fn temporal_signature(a: &str, b: &str, index: &ShareIndex, mode: IatMode) -> Option<f64> {
    temporal_signature_seconds(a, b, index, mode).map(|s| s / SECONDS_PER_HOUR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFeatureRow {
    pub user_a: String,
    pub user_b: String,
    pub cluster: usize,
    pub weight: u64,
    pub content_sim: f64,
    pub iat_hours: f64,
    pub node_sim: f64,
    pub content_missing: bool,
}

impl EdgeFeatureRow {
    pub fn vector(&self) -> [f64; 4] {
        [
            self.weight as f64,
            self.content_sim,
            self.iat_hours,
            self.node_sim,
        ]
    }
}

/// One row per backbone edge whose endpoints share a cluster, sorted by
/// cluster then edge key.
pub fn assemble_features(
    backbone: &BackboneGraph,
    partition: &Partition,
    index: &ShareIndex,
    embeddings: &EmbeddingTable,
    nodes: &NodeEmbeddings,
    mode: IatMode,
) -> Result<Vec<EdgeFeatureRow>> {
    let ids = backbone.nodes();
    if partition.assignment().len() != ids.len() {
        return Err(Error::validation("partition does not match backbone nodes"));
    }
    let intra: Vec<(usize, usize, u64, usize)> = backbone
        .edges()
        .iter()
        .filter(|(&(i, j), _)| partition.cluster_of(i) == partition.cluster_of(j))
        .map(|(&(i, j), e)| (i, j, e.weight, partition.cluster_of(i)))
        .collect();

    let mut rows: Vec<EdgeFeatureRow> = intra
        .par_iter()
        .map(|&(i, j, weight, cluster)| {
            let (a, b) = (&ids[i], &ids[j]);
            let content = content_similarity(a, b, index, embeddings);
            let iat = temporal_signature(a, b, index, mode).ok_or_else(|| {
                Error::validation(format!("edge {a}-{b} has no shared hashtag in the corpus"))
            })?;
            Ok(EdgeFeatureRow {
                user_a: a.clone(),
                user_b: b.clone(),
                cluster,
                weight,
                content_sim: content.value,
                iat_hours: iat,
                node_sim: nodes.node_cosine(a, b).unwrap_or(0.0),
                content_missing: content.missing,
            })
        })
        .collect::<Result<_>>()?;
    rows.sort_by(|x, y| {
        (x.cluster, &x.user_a, &x.user_b).cmp(&(y.cluster, &y.user_a, &y.user_b))
    });
    Ok(rows)
}

const FEATURE_HEADER: &str =
    "user_a,user_b,cluster,weight,content_sim,iat_hours,node_sim,content_missing";

pub fn write_features(path: &Path, rows: &[EdgeFeatureRow]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{FEATURE_HEADER}").map_err(io)?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            csv_field(&r.user_a),
            csv_field(&r.user_b),
            r.cluster,
            r.weight,
            r.content_sim,
            r.iat_hours,
            r.node_sim,
            u8::from(r.content_missing)
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_features(path: &Path) -> Result<Vec<EdgeFeatureRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let bad = || Error::Record {
            path: path.to_path_buf(),
            line: i + 2,
            message: "malformed feature row".into(),
        };
        let field = |k: usize| rec.get(k).ok_or_else(bad);
        let num = |k: usize| -> Result<f64> { field(k)?.parse().map_err(|_| bad()) };
        rows.push(EdgeFeatureRow {
            user_a: field(0)?.to_string(),
            user_b: field(1)?.to_string(),
            cluster: field(2)?.parse().map_err(|_| bad())?,
            weight: field(3)?.parse().map_err(|_| bad())?,
            content_sim: num(4)?,
            iat_hours: num(5)?,
            node_sim: num(6)?,
            content_missing: rec.get(7).is_some_and(|v| v == "1"),
        });
    }
    Ok(rows)
}

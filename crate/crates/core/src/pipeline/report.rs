use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::stats::NetworkStats;
use crate::anomaly::{AnomalyRecord, ClusterDetection, ClusterStatus, Label, MIN_TRAINING_ROWS, MISSING_CONTENT_LIMIT};
use crate::error::{Error, Result};
use crate::features::EdgeFeatureRow;
use crate::ingest::Corpus;
use crate::util::median;

/// Share of edges the IRA backbone removed in the original study, printed next
/// to the fraction measured on the supplied data.
pub const REFERENCE_REMOVAL_FRACTION_IRA: f64 = 0.59;

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Network summary, original against backbone. Undefined values are blank.
pub fn write_table1(path: &Path, original: &NetworkStats, backbone: &NetworkStats) -> Result<()> {
    let rows: [(&str, String, String); 9] = [
        ("nodes", original.nodes.to_string(), backbone.nodes.to_string()),
        ("edges", original.edges.to_string(), backbone.edges.to_string()),
        ("density", fmt_opt(original.density), fmt_opt(backbone.density)),
        (
            "centralization",
            fmt_opt(original.centralization),
            fmt_opt(backbone.centralization),
        ),
        ("modularity", fmt_opt(original.modularity), fmt_opt(backbone.modularity)),
        (
            "mean_edge_weight",
            fmt_opt(original.mean_edge_weight),
            fmt_opt(backbone.mean_edge_weight),
        ),
        (
            "sd_edge_weight",
            fmt_opt(original.sd_edge_weight),
            fmt_opt(backbone.sd_edge_weight),
        ),
        (
            "mean_degree",
            original.mean_degree.to_string(),
            backbone.mean_degree.to_string(),
        ),
        ("sd_degree", original.sd_degree.to_string(), backbone.sd_degree.to_string()),
    ];
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "metric,original,backbone").map_err(io)?;
    for (name, a, b) in rows {
        writeln!(w, "{name},{a},{b}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Per-cluster medians of the four features, split into final anomalies and
/// normal rows. A side with no rows has `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table2Row {
    pub cluster: usize,
    pub anomalous: usize,
    pub normal: usize,
    pub anomalous_medians: Option<[f64; 4]>,
    pub normal_medians: Option<[f64; 4]>,
}

fn medians(rows: &[&EdgeFeatureRow]) -> Option<[f64; 4]> {
    if rows.is_empty() {
        return None;
    }
    let mut out = [0.0; 4];
    for (f, slot) in out.iter_mut().enumerate() {
        let col: Vec<f64> = rows.iter().map(|r| r.vector()[f]).collect();
        *slot = median(&col)?;
    }
    Some(out)
}

/// Rows come from clusters that had a forest; records without a matching
/// feature row are an error.
pub fn table2(rows: &[EdgeFeatureRow], records: &[AnomalyRecord]) -> Result<Vec<Table2Row>> {
    let by_key: BTreeMap<(&str, &str), &EdgeFeatureRow> = rows
        .iter()
        .map(|r| ((r.user_a.as_str(), r.user_b.as_str()), r))
        .collect();
    let mut groups: BTreeMap<usize, (Vec<&EdgeFeatureRow>, Vec<&EdgeFeatureRow>)> = BTreeMap::new();
    for rec in records {
        let row = by_key
            .get(&(rec.user_a.as_str(), rec.user_b.as_str()))
            .ok_or_else(|| {
                Error::validation(format!("no feature row for {}-{}", rec.user_a, rec.user_b))
            })?;
        let entry = groups.entry(rec.cluster).or_default();
        if rec.is_final_anomaly() {
            entry.0.push(row);
        } else if rec.label == Label::Normal {
            entry.1.push(row);
        }
    }
    Ok(groups
        .into_iter()
        .map(|(cluster, (anom, norm))| Table2Row {
            cluster,
            anomalous: anom.len(),
            normal: norm.len(),
            anomalous_medians: medians(&anom),
            normal_medians: medians(&norm),
        })
        .collect())
}

pub fn write_table2(path: &Path, rows: &[Table2Row]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(
        w,
        "cluster,n_anomalous,n_normal,weight_anomalous,weight_normal,content_sim_anomalous,\
         content_sim_normal,iat_hours_anomalous,iat_hours_normal,node_sim_anomalous,node_sim_normal"
    )
    .map_err(io)?;
    for r in rows {
        write!(w, "{},{},{}", r.cluster, r.anomalous, r.normal).map_err(io)?;
        for f in 0..4 {
            let a = fmt_opt(r.anomalous_medians.map(|m| m[f]));
            let n = fmt_opt(r.normal_medians.map(|m| m[f]));
            write!(w, ",{a},{n}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HashtagCount {
    pub hashtag: String,
    pub posts: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClusterHashtags {
    pub cluster: usize,
    pub users: usize,
    pub hashtags: Vec<HashtagCount>,
}

/// Most used hashtags among users on final anomalous edges, per cluster.
/// Counts are posts; ties are broken by hashtag name.
pub fn top_hashtags(corpus: &Corpus, records: &[AnomalyRecord], k: usize) -> Vec<ClusterHashtags> {
    let mut users: BTreeMap<usize, std::collections::BTreeSet<&str>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_final_anomaly()) {
        let set = users.entry(r.cluster).or_default();
        set.insert(&r.user_a);
        set.insert(&r.user_b);
    }
    let by_user = corpus.posts_by_user();
    users
        .into_iter()
        .map(|(cluster, members)| {
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for u in &members {
                for p in by_user.get(u).into_iter().flatten() {
                    for t in &p.hashtags {
                        *counts.entry(t).or_default() += 1;
                    }
                }
            }
            let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
            ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
            ClusterHashtags {
                cluster,
                users: members.len(),
                hashtags: ranked
                    .into_iter()
                    .take(k)
                    .map(|(h, n)| HashtagCount {
                        hashtag: h.to_string(),
                        posts: n,
                    })
                    .collect(),
            }
        })
        .collect()
}

/// Rebuild per-cluster detection status from persisted features and records.
pub fn cluster_status(rows: &[EdgeFeatureRow], records: &[AnomalyRecord]) -> Vec<ClusterDetection> {
    let mut by_cluster: BTreeMap<usize, Vec<&EdgeFeatureRow>> = BTreeMap::new();
    for r in rows {
        by_cluster.entry(r.cluster).or_default().push(r);
    }
    let iat: BTreeMap<(&str, &str), f64> = rows
        .iter()
        .map(|r| ((r.user_a.as_str(), r.user_b.as_str()), r.iat_hours))
        .collect();
    let mut recs: BTreeMap<usize, Vec<&AnomalyRecord>> = BTreeMap::new();
    for r in records {
        recs.entry(r.cluster).or_default().push(r);
    }
    by_cluster
        .into_iter()
        .map(|(cluster, members)| {
            let (status, training_rows, missing_content_excluded) = if members.len() < MIN_TRAINING_ROWS {
                (ClusterStatus::TooSmall, 0, false)
            } else {
                let missing = members.iter().filter(|r| r.content_missing).count();
                let excluded = missing as f64 > MISSING_CONTENT_LIMIT * members.len() as f64;
                let training = if excluded { members.len() - missing } else { members.len() };
                let status = if training < MIN_TRAINING_ROWS {
                    ClusterStatus::TooSmall
                } else {
                    ClusterStatus::Trained
                };
                (status, training, excluded)
            };
            let mine = recs.get(&cluster).map(Vec::as_slice).unwrap_or(&[]);
            let normals: Vec<f64> = mine
                .iter()
                .filter(|r| r.label == Label::Normal)
                .filter_map(|r| iat.get(&(r.user_a.as_str(), r.user_b.as_str())).copied())
                .collect();
            ClusterDetection {
                cluster,
                rows: members.len(),
                status,
                training_rows,
                missing_content_excluded,
                anomalies: mine.iter().filter(|r| r.label == Label::Anomalous).count(),
                filtered: mine.iter().filter(|r| r.filtered).count(),
                iat_threshold_hours: median(&normals),
            }
        })
        .collect()
}

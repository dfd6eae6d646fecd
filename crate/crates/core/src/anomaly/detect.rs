use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::forest::{fit_forest, ForestParams, MIN_TRAINING_ROWS};
use super::shap::tree_shap;
use crate::error::{Error, Result};
use crate::features::{EdgeFeatureRow, FEATURE_NAMES};
use crate::graph::csv_field;
use crate::util::{derive_seed, median};

pub const DEFAULT_CONTAMINATION: f64 = 0.05;

/// Above this share of rows with missing content similarity, those rows are
/// left out of forest training.
pub const MISSING_CONTENT_LIMIT: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Anomalous,
    Normal,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Anomalous => "anomalous",
            Label::Normal => "normal",
        })
    }
}

/// Label the ⌈contamination·n⌉ highest scores anomalous. Equal scores are
/// ordered by key, smallest first.
pub fn label<K: Ord>(scores: &[f64], keys: &[K], contamination: f64) -> Result<Vec<Label>> {
    if !(contamination > 0.0 && contamination <= 0.5) {
        return Err(Error::validation(format!(
            "contamination must be in (0, 0.5], got {contamination}"
        )));
    }
    if scores.len() != keys.len() {
        return Err(Error::validation("scores and keys differ in length"));
    }
    let n = scores.len();
    let k = ((contamination * n as f64) - 1e-9).ceil().max(0.0) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| keys[a].cmp(&keys[b])));
    let mut labels = vec![Label::Normal; n];
    for &i in order.iter().take(k.min(n)) {
        labels[i] = Label::Anomalous;
    }
    Ok(labels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyRecord {
    pub user_a: String,
    pub user_b: String,
    pub cluster: usize,
    pub score: f64,
    pub label: Label,
    /// Anomalous but dropped by the inter-arrival-time post-filter.
    pub filtered: bool,
    /// Attributions in `FEATURE_NAMES` order.
    pub shap: [f64; 4],
    pub base_value: f64,
    pub expected_depth: f64,
}

impl AnomalyRecord {
    /// Anomalous and not removed by the post-filter.
    pub fn is_final_anomaly(&self) -> bool {
        self.label == Label::Anomalous && !self.filtered
    }
}

/// Per cluster, drop anomalies whose IAT exceeds the median IAT of that
/// cluster's normal rows. Returns the threshold used per cluster (`None` when
/// a cluster has no normal rows).
pub fn iat_postfilter(
    records: &mut [AnomalyRecord],
    rows: &[EdgeFeatureRow],
) -> Result<BTreeMap<usize, Option<f64>>> {
    let iat: HashMap<(&str, &str), f64> = rows
        .iter()
        .map(|r| ((r.user_a.as_str(), r.user_b.as_str()), r.iat_hours))
        .collect();
    let lookup = |r: &AnomalyRecord| -> Result<f64> {
        iat.get(&(r.user_a.as_str(), r.user_b.as_str()))
            .copied()
            .ok_or_else(|| {
                Error::validation(format!("no feature row for {}-{}", r.user_a, r.user_b))
            })
    };

    let mut normals: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in records.iter() {
        let v = lookup(r)?;
        let entry = normals.entry(r.cluster).or_default();
        if r.label == Label::Normal {
            entry.push(v);
        }
    }
    let thresholds: BTreeMap<usize, Option<f64>> =
        normals.iter().map(|(c, v)| (*c, median(v))).collect();

    for r in records.iter_mut() {
        if r.label != Label::Anomalous {
            continue;
        }
        match thresholds[&r.cluster] {
            Some(t) => r.filtered = lookup(r)? > t,
            None => log::warn!("cluster {} has no normal rows; IAT filter skipped", r.cluster),
        }
    }
    Ok(thresholds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectParams {
    pub forest: ForestParams,
    pub contamination: f64,
}

impl Default for DetectParams {
    fn default() -> Self {
        Self {
            forest: ForestParams::default(),
            contamination: DEFAULT_CONTAMINATION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterStatus {
    Trained,
    TooSmall,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterDetection {
    pub cluster: usize,
    pub rows: usize,
    pub status: ClusterStatus,
    pub training_rows: usize,
    /// Rows with missing content similarity were left out of training.
    pub missing_content_excluded: bool,
    pub anomalies: usize,
    pub filtered: usize,
    pub iat_threshold_hours: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub records: Vec<AnomalyRecord>,
    pub clusters: Vec<ClusterDetection>,
}

/// Fit one forest per cluster, score and explain every row, label, then apply
/// the IAT post-filter. Clusters with fewer than 8 rows are skipped.
pub fn detect_anomalies(rows: &[EdgeFeatureRow], params: &DetectParams) -> Result<Detection> {
    let mut by_cluster: BTreeMap<usize, Vec<&EdgeFeatureRow>> = BTreeMap::new();
    for r in rows {
        by_cluster.entry(r.cluster).or_default().push(r);
    }

    let mut records = Vec::new();
    let mut clusters = Vec::new();
    for (&cluster, members) in &by_cluster {
        if members.len() < MIN_TRAINING_ROWS {
            log::info!(
                "cluster {cluster}: {} rows, too small for a forest",
                members.len()
            );
            clusters.push(ClusterDetection {
                cluster,
                rows: members.len(),
                status: ClusterStatus::TooSmall,
                training_rows: 0,
                missing_content_excluded: false,
                anomalies: 0,
                filtered: 0,
                iat_threshold_hours: None,
            });
            continue;
        }

        let matrix: Vec<Vec<f64>> = members.iter().map(|r| r.vector().to_vec()).collect();
        let missing = members.iter().filter(|r| r.content_missing).count();
        let exclude = missing as f64 > MISSING_CONTENT_LIMIT * members.len() as f64;
        let training: Vec<Vec<f64>> = if exclude {
            members
                .iter()
                .zip(&matrix)
                .filter(|(r, _)| !r.content_missing)
                .map(|(_, v)| v.clone())
                .collect()
        } else {
            matrix.clone()
        };
        if exclude {
            log::warn!(
                "cluster {cluster}: {missing}/{} rows lack content similarity; excluded from training",
                members.len()
            );
        }
        if training.len() < MIN_TRAINING_ROWS {
            clusters.push(ClusterDetection {
                cluster,
                rows: members.len(),
                status: ClusterStatus::TooSmall,
                training_rows: training.len(),
                missing_content_excluded: exclude,
                anomalies: 0,
                filtered: 0,
                iat_threshold_hours: None,
            });
            continue;
        }

        let forest_params = ForestParams {
            seed: derive_seed(params.forest.seed, &[cluster as u64]),
            ..params.forest
        };
        let model = fit_forest(&training, &forest_params)?;
        let mut scores = Vec::with_capacity(members.len());
        let mut explanations = Vec::with_capacity(members.len());
        for x in &matrix {
            let e = tree_shap(&model, x)?;
            scores.push(super::forest::score_from_depth(e.output, model.c_psi()));
            explanations.push(e);
        }
        let keys: Vec<(&str, &str)> = members
            .iter()
            .map(|r| (r.user_a.as_str(), r.user_b.as_str()))
            .collect();
        let labels = label(&scores, &keys, params.contamination)?;

        let start = records.len();
        for (((r, s), e), l) in members.iter().zip(&scores).zip(&explanations).zip(&labels) {
            records.push(AnomalyRecord {
                user_a: r.user_a.clone(),
                user_b: r.user_b.clone(),
                cluster,
                score: *s,
                label: *l,
                filtered: false,
                shap: [e.values[0], e.values[1], e.values[2], e.values[3]],
                base_value: e.base,
                expected_depth: e.output,
            });
        }
        let owned: Vec<EdgeFeatureRow> = members.iter().map(|r| (*r).clone()).collect();
        let thresholds = iat_postfilter(&mut records[start..], &owned)?;
        let mine = &records[start..];
        clusters.push(ClusterDetection {
            cluster,
            rows: members.len(),
            status: ClusterStatus::Trained,
            training_rows: training.len(),
            missing_content_excluded: exclude,
            anomalies: mine.iter().filter(|r| r.label == Label::Anomalous).count(),
            filtered: mine.iter().filter(|r| r.filtered).count(),
            iat_threshold_hours: thresholds.get(&cluster).copied().flatten(),
        });
    }

    Ok(Detection { records, clusters })
}

const ANOMALY_HEADER: &str =
    "user_a,user_b,cluster,score,label,filtered,shap_weight,shap_content,shap_iat,shap_nodesim";

pub fn write_anomalies(path: &Path, records: &[AnomalyRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{ANOMALY_HEADER}").map_err(io)?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            csv_field(&r.user_a),
            csv_field(&r.user_b),
            r.cluster,
            r.score,
            r.label,
            r.filtered,
            r.shap[0],
            r.shap[1],
            r.shap[2],
            r.shap[3]
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Read `anomalies.csv`. Base value and expected depth are not persisted and
/// come back as NaN.
pub fn read_anomalies(path: &Path) -> Result<Vec<AnomalyRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let bad = || Error::Record {
            path: path.to_path_buf(),
            line: i + 2,
            message: "malformed anomaly row".into(),
        };
        let field = |k: usize| rec.get(k).ok_or_else(bad);
        let num = |k: usize| -> Result<f64> { field(k)?.parse().map_err(|_| bad()) };
        let label = match field(4)? {
            "anomalous" => Label::Anomalous,
            "normal" => Label::Normal,
            _ => return Err(bad()),
        };
        out.push(AnomalyRecord {
            user_a: field(0)?.to_string(),
            user_b: field(1)?.to_string(),
            cluster: field(2)?.parse().map_err(|_| bad())?,
            score: num(3)?,
            label,
            filtered: field(5)?.parse().map_err(|_| bad())?,
            shap: [num(6)?, num(7)?, num(8)?, num(9)?],
            base_value: f64::NAN,
            expected_depth: f64::NAN,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapSummaryRow {
    /// Cluster id, or `None` for the pooled row over all clusters.
    pub cluster: Option<usize>,
    pub feature: &'static str,
    pub mean_abs_shap: f64,
    pub anomalies: usize,
}

/// Mean |SHAP| per feature over final anomalies, per cluster and pooled.
pub fn shap_summary(records: &[AnomalyRecord]) -> Vec<ShapSummaryRow> {
    let mut groups: BTreeMap<Option<usize>, Vec<&AnomalyRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_final_anomaly()) {
        groups.entry(Some(r.cluster)).or_default().push(r);
        groups.entry(None).or_default().push(r);
    }
    let mut out = Vec::new();
    for (cluster, rs) in groups {
        for (f, name) in FEATURE_NAMES.iter().enumerate() {
            let mean = rs.iter().map(|r| r.shap[f].abs()).sum::<f64>() / rs.len() as f64;
            out.push(ShapSummaryRow {
                cluster,
                feature: name,
                mean_abs_shap: mean,
                anomalies: rs.len(),
            });
        }
    }
    out
}

pub fn write_shap_summary(path: &Path, rows: &[ShapSummaryRow]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "cluster,feature,mean_abs_shap,anomalies").map_err(io)?;
    for r in rows {
        let cluster = r.cluster.map_or_else(|| "all".to_string(), |c| c.to_string());
        writeln!(w, "{cluster},{},{},{}", r.feature, r.mean_abs_shap, r.anomalies).map_err(io)?;
    }
    w.flush().map_err(io)
}

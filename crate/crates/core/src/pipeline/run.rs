use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::config::PipelineConfig;
use super::report::{
    cluster_status, table2, top_hashtags, write_table1, write_table2, ClusterHashtags, Table2Row,
    REFERENCE_REMOVAL_FRACTION_IRA,
};
use super::stats::{network_stats, CentralizationKind, NetworkStats};
use crate::anomaly::{
    detect_anomalies, read_anomalies, shap_summary, write_anomalies, write_shap_summary,
    AnomalyRecord, ClusterDetection, ClusterStatus, DetectParams, ShapSummaryRow,
};
use crate::backbone::{extract_backbone, BackboneGraph, BackboneOptions, KeepRule};
use crate::community::{louvain, Partition};
use crate::cosharing::{count_shares, filter_weight_one, project, CoShareGraph, ProjectOptions};
use crate::embedding::{embed_nodes, NodeEmbeddings};
use crate::anomaly::ForestParams;
use crate::error::{Error, Result};
use crate::features::{assemble_features, read_features, write_features, EdgeFeatureRow, IatMode, ShareIndex};
use crate::graph::{nodes_sidecar, read_nodes, write_nodes, WeightedGraph};
use crate::ingest::{
    fallback_embed, load_corpus, load_embeddings, preprocess, write_corpus, Corpus, EmbeddingTable,
    InputFormat, LoadOptions,
};

/// File layout of a run directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunPaths {
    pub dir: PathBuf,
    pub corpus: PathBuf,
    pub graph: PathBuf,
    pub backbone: PathBuf,
    pub partition: PathBuf,
    pub partition_original: PathBuf,
    pub node_embeddings: PathBuf,
    pub features: PathBuf,
    pub anomalies: PathBuf,
    pub summary: PathBuf,
    pub table1: PathBuf,
    pub table2: PathBuf,
    pub shap_summary: PathBuf,
}

impl RunPaths {
    pub fn new(dir: &Path) -> Self {
        let f = |name: &str| dir.join(name);
        Self {
            dir: dir.to_path_buf(),
            corpus: f("corpus.jsonl"),
            graph: f("graph.csv"),
            backbone: f("backbone.csv"),
            partition: f("partition.csv"),
            partition_original: f("partition_original.csv"),
            node_embeddings: f("node_embeddings.jsonl"),
            features: f("features.csv"),
            anomalies: f("anomalies.csv"),
            summary: f("summary.json"),
            table1: f("table1.csv"),
            table2: f("table2.csv"),
            shap_summary: f("shap_summary.csv"),
        }
    }

    /// Intermediate artifacts, in stage order. Edge lists carry node sidecars.
    pub fn intermediates(&self) -> Vec<PathBuf> {
        vec![
            self.corpus.clone(),
            self.graph.clone(),
            nodes_sidecar(&self.graph),
            self.backbone.clone(),
            nodes_sidecar(&self.backbone),
            self.partition.clone(),
            self.partition_original.clone(),
            self.node_embeddings.clone(),
            self.features.clone(),
            self.anomalies.clone(),
        ]
    }

    /// The five report files.
    pub fn reports(&self) -> [&Path; 5] {
        [
            &self.summary,
            &self.table1,
            &self.table2,
            &self.shap_summary,
            &self.anomalies,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusCounts {
    pub posts: usize,
    pub users: usize,
    pub hashtags: usize,
}

/// Contents of `summary.json`. Timings are logged, not stored, so reruns
/// produce identical files.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub config: serde_json::Value,
    pub keep_rule: KeepRule,
    pub delta: f64,
    pub centralization: CentralizationKind,
    pub contamination: f64,
    pub iat_mode: IatMode,
    pub corpus: CorpusCounts,
    pub original: NetworkStats,
    pub backbone: NetworkStats,
    pub backbone_edge_removal_fraction: Option<f64>,
    pub reference_edge_removal_fraction_ira: f64,
    pub clusters: Vec<ClusterDetection>,
    pub too_small_clusters: Vec<usize>,
    pub anomalies: usize,
    pub filtered_anomalies: usize,
    pub top_hashtags: Vec<ClusterHashtags>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub paths: RunPaths,
    pub corpus: Corpus,
    pub original: CoShareGraph,
    pub backbone: BackboneGraph,
    pub partition: Partition,
    pub node_embeddings: NodeEmbeddings,
    pub features: Vec<EdgeFeatureRow>,
    pub records: Vec<AnomalyRecord>,
    pub table2: Vec<Table2Row>,
    pub shap: Vec<ShapSummaryRow>,
    pub summary: Summary,
}

struct Stages<'a> {
    cfg: &'a PipelineConfig,
    /// Set once any stage recomputes; later stages must then recompute too.
    dirty: bool,
}

impl Stages<'_> {
    fn run<T>(
        &mut self,
        name: &'static str,
        artifacts: &[&Path],
        load: impl FnOnce() -> Result<T>,
        compute: impl FnOnce() -> Result<T>,
    ) -> Result<T> {
        let wrap = |e: Error| Error::Stage {
            stage: name,
            artifact: artifacts[0].to_path_buf(),
            source: Box::new(e),
        };
        if self.cfg.resume && !self.dirty && artifacts.iter().all(|p| p.exists()) {
            log::info!("{name}: reusing {}", artifacts[0].display());
            return load().map_err(wrap);
        }
        let started = Instant::now();
        let out = compute().map_err(wrap)?;
        log::info!("{name}: finished in {:.2?}", started.elapsed());
        self.dirty = true;
        Ok(out)
    }
}

/// Post vectors for the features stage: the configured file, or hashed text.
fn post_embeddings(cfg: &PipelineConfig, corpus: &Corpus) -> Result<EmbeddingTable> {
    match (&cfg.embeddings, cfg.fallback_embed) {
        (Some(path), _) => {
            let mut table = load_embeddings(path)?;
            table.reconcile(corpus, cfg.strict_embeddings)?;
            Ok(table)
        }
        (None, true) => {
            let fb = fallback_embed(corpus, cfg.fallback_dim, cfg.stage_seed("fallback"))?;
            if !fb.empty.is_empty() {
                log::warn!("{} posts have no text left after cleaning", fb.empty.len());
            }
            Ok(fb.table)
        }
        (None, false) => Err(Error::validation(
            "no post embeddings: give an embeddings file or enable fallback embedding",
        )),
    }
}

fn echo_config(cfg: &PipelineConfig) -> Result<serde_json::Value> {
    let mut v = serde_json::to_value(cfg).map_err(|e| Error::Internal(e.to_string()))?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("out_dir");
        obj.remove("resume");
    }
    Ok(v)
}

/// Run every stage, persisting each artifact under `cfg.out_dir`. With
/// `cfg.resume`, stages whose files exist are loaded instead of recomputed
/// until the first stage that has to run.
pub fn run_all(cfg: &PipelineConfig) -> Result<RunReport> {
    cfg.validate()?;
    let paths = RunPaths::new(&cfg.out_dir);
    std::fs::create_dir_all(&paths.dir).map_err(|e| Error::io(&paths.dir, e))?;
    let mut st = Stages { cfg, dirty: false };

    let corpus = st.run(
        "ingest",
        &[&paths.corpus],
        || Ok(load_corpus(&paths.corpus, InputFormat::Jsonl, LoadOptions::default())?.corpus),
        || {
            let posts = cfg
                .posts
                .as_deref()
                .ok_or_else(|| Error::validation("no input posts configured"))?;
            let loaded = load_corpus(
                posts,
                cfg.format,
                LoadOptions {
                    max_rejects: cfg.max_rejects,
                },
            )?;
            if loaded.rejected > 0 {
                log::warn!("skipped {} malformed records", loaded.rejected);
            }
            let corpus = preprocess(&loaded.corpus)?;
            log::info!(
                "corpus: {} posts, {} users, {} hashtags",
                corpus.len(),
                corpus.users().len(),
                corpus.hashtags().len()
            );
            write_corpus(&paths.corpus, &corpus)?;
            Ok(corpus)
        },
    )?;

    let graph_nodes = nodes_sidecar(&paths.graph);
    let original = st.run(
        "graph",
        &[&paths.graph, &graph_nodes],
        || CoShareGraph::read_csv(&paths.graph, read_nodes(&graph_nodes)?),
        || {
            let counts = count_shares(&corpus);
            let projected = project(
                &counts,
                ProjectOptions {
                    max_hashtag_degree: cfg.max_hashtag_degree,
                },
            );
            let g = filter_weight_one(&projected);
            log::info!(
                "co-share graph: {} nodes, {} edges ({} before the weight-1 filter)",
                g.node_count(),
                g.edge_count(),
                projected.edge_count()
            );
            g.write_csv(&paths.graph)?;
            write_nodes(&graph_nodes, g.nodes())?;
            Ok(g)
        },
    )?;

    let backbone_nodes = nodes_sidecar(&paths.backbone);
    let backbone = st.run(
        "backbone",
        &[&paths.backbone, &backbone_nodes],
        || {
            BackboneGraph::read_csv(
                &paths.backbone,
                read_nodes(&backbone_nodes)?,
                cfg.delta,
                cfg.keep_rule,
            )
        },
        || {
            let opts = BackboneOptions {
                delta: cfg.delta,
                rule: cfg.keep_rule,
                prior: cfg.bayesian_prior,
            };
            let b = extract_backbone(&original, &opts)?;
            log::info!("backbone keeps {} of {} edges", b.edge_count(), original.edge_count());
            b.write_csv(&paths.backbone)?;
            write_nodes(&backbone_nodes, b.nodes())?;
            Ok(b)
        },
    )?;

    let (partition, partition_original) = st.run(
        "cluster",
        &[&paths.partition, &paths.partition_original],
        || {
            Ok((
                Partition::read_csv(&paths.partition, &backbone)?,
                Partition::read_csv(&paths.partition_original, &original)?,
            ))
        },
        || {
            let p = louvain(&backbone, cfg.stage_seed("louvain"));
            let po = louvain(&original, cfg.stage_seed("louvain-original"));
            log::info!(
                "backbone: {} clusters, Q = {:.4}; original: {} clusters, Q = {:.4}",
                p.cluster_count(),
                p.modularity(),
                po.cluster_count(),
                po.modularity()
            );
            p.write_csv(&paths.partition, backbone.nodes())?;
            po.write_csv(&paths.partition_original, original.nodes())?;
            Ok((p, po))
        },
    )?;

    let node_embeddings = st.run(
        "embed",
        &[&paths.node_embeddings],
        || NodeEmbeddings::read(&paths.node_embeddings, backbone.nodes()),
        || {
            let e = embed_nodes(&backbone, &cfg.walk_config(), &cfg.skipgram_config())?;
            e.write(&paths.node_embeddings)?;
            Ok(e)
        },
    )?;

    let features = st.run(
        "features",
        &[&paths.features],
        || read_features(&paths.features),
        || {
            let posts = post_embeddings(cfg, &corpus)?;
            let index = ShareIndex::new(&corpus);
            let rows = assemble_features(
                &backbone,
                &partition,
                &index,
                &posts,
                &node_embeddings,
                cfg.iat_mode,
            )?;
            log::info!("{} intra-cluster edge rows", rows.len());
            write_features(&paths.features, &rows)?;
            Ok(rows)
        },
    )?;

    let records = st.run(
        "detect",
        &[&paths.anomalies],
        || read_anomalies(&paths.anomalies),
        || {
            let params = DetectParams {
                forest: ForestParams {
                    n_estimators: cfg.n_estimators,
                    psi: cfg.psi,
                    seed: cfg.stage_seed("forest"),
                },
                contamination: cfg.contamination,
            };
            let d = detect_anomalies(&features, &params)?;
            write_anomalies(&paths.anomalies, &d.records)?;
            Ok(d.records)
        },
    )?;

    let started = Instant::now();
    let report = build_report(
        cfg,
        paths,
        corpus,
        original,
        &partition_original,
        backbone,
        partition,
        node_embeddings,
        features,
        records,
    )
    .map_err(|e| Error::Stage {
        stage: "report",
        artifact: cfg.out_dir.join("summary.json"),
        source: Box::new(e),
    })?;
    log::info!("report: finished in {:.2?}", started.elapsed());
    Ok(report)
}

/// Rebuild the reports from an existing run directory without recomputing
/// any stage. Fails if an intermediate file is missing.
pub fn report_only(cfg: &PipelineConfig) -> Result<RunReport> {
    let paths = RunPaths::new(&cfg.out_dir);
    if let Some(missing) = paths.intermediates().into_iter().find(|p| !p.exists()) {
        return Err(Error::validation(format!(
            "{} is missing; run the pipeline first",
            missing.display()
        )));
    }
    run_all(&PipelineConfig {
        resume: true,
        ..cfg.clone()
    })
}

#[allow(clippy::too_many_arguments)]
fn build_report(
    cfg: &PipelineConfig,
    paths: RunPaths,
    corpus: Corpus,
    original: CoShareGraph,
    partition_original: &Partition,
    backbone: BackboneGraph,
    partition: Partition,
    node_embeddings: NodeEmbeddings,
    features: Vec<EdgeFeatureRow>,
    records: Vec<AnomalyRecord>,
) -> Result<RunReport> {
    let orig_stats = network_stats(&original, Some(partition_original), cfg.centralization)?;
    let back_stats = network_stats(&backbone, Some(&partition), cfg.centralization)?;
    let t2 = table2(&features, &records)?;
    let shap = shap_summary(&records);
    let clusters = cluster_status(&features, &records);
    let too_small: Vec<usize> = clusters
        .iter()
        .filter(|c| c.status == ClusterStatus::TooSmall)
        .map(|c| c.cluster)
        .collect();

    let mut warnings = Vec::new();
    if cfg.keep_rule == KeepRule::Raw {
        warnings.push("backbone uses the raw threshold rule W > delta*sqrt(V)".to_string());
    }
    if !cfg.is_deterministic() {
        warnings.push("asynchronous embedding training; outputs are not reproducible".into());
    }
    if backbone.edge_count() == 0 {
        warnings.push("backbone has no edges".into());
    }
    if !too_small.is_empty() {
        warnings.push(format!(
            "{} clusters have fewer than 8 intra-cluster edges and were not scored",
            too_small.len()
        ));
    }
    let isolated = node_embeddings.missing().len();
    if isolated > 0 {
        warnings.push(format!("{isolated} isolated backbone nodes have no node embedding"));
    }
    let missing_content = features.iter().filter(|r| r.content_missing).count();
    if missing_content > 0 {
        warnings.push(format!(
            "{missing_content} edges lack content similarity and use 0"
        ));
    }
    for c in &clusters {
        if c.missing_content_excluded {
            warnings.push(format!(
                "cluster {}: edges without content similarity were left out of training",
                c.cluster
            ));
        }
        if c.status == ClusterStatus::Trained && c.iat_threshold_hours.is_none() {
            warnings.push(format!("cluster {}: no normal rows, IAT filter skipped", c.cluster));
        }
    }

    let summary = Summary {
        config: echo_config(cfg)?,
        keep_rule: cfg.keep_rule,
        delta: cfg.delta,
        centralization: cfg.centralization,
        contamination: cfg.contamination,
        iat_mode: cfg.iat_mode,
        corpus: CorpusCounts {
            posts: corpus.len(),
            users: corpus.users().len(),
            hashtags: corpus.hashtags().len(),
        },
        backbone_edge_removal_fraction: (orig_stats.edges > 0)
            .then(|| 1.0 - back_stats.edges as f64 / orig_stats.edges as f64),
        reference_edge_removal_fraction_ira: REFERENCE_REMOVAL_FRACTION_IRA,
        original: orig_stats,
        backbone: back_stats,
        too_small_clusters: too_small,
        anomalies: records.iter().filter(|r| r.is_final_anomaly()).count(),
        filtered_anomalies: records.iter().filter(|r| r.filtered).count(),
        top_hashtags: top_hashtags(&corpus, &records, cfg.top_k_hashtags),
        clusters,
        warnings,
    };

    write_table1(&paths.table1, &summary.original, &summary.backbone)?;
    write_table2(&paths.table2, &t2)?;
    write_shap_summary(&paths.shap_summary, &shap)?;
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Internal(e.to_string()))?;
    std::fs::write(&paths.summary, json + "\n").map_err(|e| Error::io(&paths.summary, e))?;

    Ok(RunReport {
        paths,
        corpus,
        original,
        backbone,
        partition,
        node_embeddings,
        features,
        records,
        table2: t2,
        shap,
        summary,
    })
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use coordnet::anomaly::{
    detect_anomalies, shap_summary, write_anomalies, write_shap_summary, DetectParams, ForestParams,
};
use coordnet::backbone::{extract_backbone, BackboneGraph, BackboneOptions, BetaPrior, KeepRule};
use coordnet::community::{louvain, Partition};
use coordnet::cosharing::{count_shares, filter_weight_one, project, CoShareGraph, ProjectOptions};
use coordnet::embedding::{embed_nodes, NodeEmbeddings, TrainMode};
use coordnet::features::{assemble_features, write_features, IatMode, ShareIndex};
use coordnet::graph::{nodes_sidecar, read_nodes, write_nodes};
use coordnet::ingest::{
    fallback_embed, load_corpus, load_embeddings, preprocess, write_corpus, InputFormat,
    LoadOptions,
};
use coordnet::pipeline::{report_only, run_all, synth_corpus, PipelineConfig, SynthSpec};

#[derive(Parser, Debug)]
#[command(name = "coordnet", version, about = "Find coordinated hashtag promotion in co-sharing networks")]
struct Cli {
    /// Pipeline configuration (.toml or .json)
    #[arg(long)]
    config: Option<PathBuf>,

    /// Base seed for every random stage
    #[arg(long)]
    seed: Option<u64>,

    /// Run directory for artifacts and reports
    #[arg(long = "out", value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// Only log warnings and errors
    #[arg(short, long)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load, validate and preprocess a post corpus
    Ingest(IngestArgs),
    /// Build the co-sharing graph and drop weight-1 edges
    Graph(GraphArgs),
    /// Extract the noise-corrected backbone
    Backbone(BackboneArgs),
    /// Louvain communities of a backbone
    Cluster(ClusterArgs),
    /// node2vec embeddings of backbone nodes
    Embed(EmbedArgs),
    /// Per-edge feature table for intra-cluster backbone edges
    Features(FeaturesArgs),
    /// Per-cluster isolation forests, SHAP values and the IAT filter
    Detect(DetectArgs),
    /// Rebuild the reports of an existing run directory
    Report,
    /// Run every stage end to end
    RunAll(RunAllArgs),
    /// Generate a synthetic corpus with planted coordination
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct InputArgs {
    #[arg(long)]
    posts: Option<PathBuf>,
    #[arg(long)]
    format: Option<InputFormat>,
    /// Post embeddings (JSONL with a dim header)
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Fail on embedding ids not present in the corpus
    #[arg(long)]
    strict_embeddings: bool,
    /// Hash post text into vectors when no embeddings file is given
    #[arg(long)]
    fallback_embed: bool,
    /// Malformed records to skip before failing
    #[arg(long)]
    max_rejects: Option<usize>,
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value = "corpus.jsonl")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GraphArgs {
    /// Preprocessed corpus (JSONL)
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "graph.csv")]
    out: PathBuf,
    /// Skip hashtags used by more users than this
    #[arg(long)]
    max_hashtag_degree: Option<usize>,
}

#[derive(Args, Debug)]
struct BackboneRule {
    #[arg(long)]
    delta: Option<f64>,
    /// Keep edges with W > delta*sqrt(V) instead of W - E > delta*sqrt(V)
    #[arg(long)]
    raw_threshold: bool,
    /// Beta prior `a,b` on the edge probability
    #[arg(long, value_name = "A,B")]
    bayesian_prior: Option<BetaPrior>,
}

#[derive(Args, Debug)]
struct BackboneArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "backbone.csv")]
    out: PathBuf,
    #[command(flatten)]
    rule: BackboneRule,
}

#[derive(Args, Debug)]
struct ClusterArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "partition.csv")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct WalkArgs {
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    walk_length: Option<usize>,
    #[arg(long)]
    walks_per_node: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Train with this many lock-free threads (not reproducible)
    #[arg(long)]
    async_threads: Option<usize>,
}

#[derive(Args, Debug)]
struct EmbedArgs {
    /// Backbone edge list
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "node_embeddings.jsonl")]
    out: PathBuf,
    #[command(flatten)]
    walk: WalkArgs,
}

#[derive(Args, Debug)]
struct FeaturesArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    backbone: PathBuf,
    #[arg(long)]
    partition: PathBuf,
    #[arg(long)]
    node_embeddings: PathBuf,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    strict_embeddings: bool,
    #[arg(long)]
    fallback_embed: bool,
    #[arg(long)]
    iat_mode: Option<IatMode>,
    #[arg(long, default_value = "features.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ForestArgs {
    #[arg(long)]
    n_estimators: Option<usize>,
    #[arg(long)]
    psi: Option<usize>,
    #[arg(long)]
    contamination: Option<f64>,
}

#[derive(Args, Debug)]
struct DetectArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "anomalies.csv")]
    out: PathBuf,
    /// Also write mean |SHAP| per cluster here
    #[arg(long)]
    shap_summary: Option<PathBuf>,
    #[command(flatten)]
    forest: ForestArgs,
}

#[derive(Args, Debug)]
struct RunAllArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    rule: BackboneRule,
    #[command(flatten)]
    walk: WalkArgs,
    #[command(flatten)]
    forest: ForestArgs,
    #[arg(long)]
    iat_mode: Option<IatMode>,
    #[arg(long)]
    max_hashtag_degree: Option<usize>,
    /// Reuse intermediate files already in the run directory
    #[arg(long)]
    resume: bool,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Generator parameters (.toml or .json); flags override
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    organic: Option<usize>,
    #[arg(long)]
    coordinated: Option<usize>,
    #[arg(long)]
    groups: Option<usize>,
    /// Coordination window in seconds
    #[arg(long)]
    window: Option<i64>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl InputArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if self.posts.is_some() {
            cfg.posts = self.posts.clone();
        }
        if self.embeddings.is_some() {
            cfg.embeddings = self.embeddings.clone();
        }
        set(&mut cfg.format, self.format);
        set(&mut cfg.max_rejects, self.max_rejects);
        cfg.strict_embeddings |= self.strict_embeddings;
        cfg.fallback_embed |= self.fallback_embed;
    }
}

impl BackboneRule {
    fn apply(&self, cfg: &mut PipelineConfig) {
        set(&mut cfg.delta, self.delta);
        if self.raw_threshold {
            cfg.keep_rule = KeepRule::Raw;
        }
        if self.bayesian_prior.is_some() {
            cfg.bayesian_prior = self.bayesian_prior;
        }
    }
}

impl WalkArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        set(&mut cfg.walk.p, self.p);
        set(&mut cfg.walk.q, self.q);
        set(&mut cfg.walk.walk_length, self.walk_length);
        set(&mut cfg.walk.walks_per_node, self.walks_per_node);
        set(&mut cfg.skipgram.dim, self.dim);
        set(&mut cfg.skipgram.window, self.window);
        set(&mut cfg.skipgram.negatives, self.negatives);
        set(&mut cfg.skipgram.epochs, self.epochs);
        set(&mut cfg.skipgram.lr, self.lr);
        if let Some(threads) = self.async_threads {
            cfg.skipgram.mode = TrainMode::Async { threads };
        }
    }
}

impl ForestArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        set(&mut cfg.n_estimators, self.n_estimators);
        set(&mut cfg.psi, self.psi);
        set(&mut cfg.contamination, self.contamination);
    }
}

fn load_backbone(path: &Path, cfg: &PipelineConfig) -> Result<BackboneGraph> {
    let nodes = read_nodes(&nodes_sidecar(path))
        .with_context(|| format!("node list for {}", path.display()))?;
    Ok(BackboneGraph::read_csv(path, nodes, cfg.delta, cfg.keep_rule)?)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::from_path(path)?,
        None => PipelineConfig::default(),
    };
    set(&mut cfg.seed, cli.seed);
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }

    match cli.command {
        Command::Ingest(args) => {
            args.input.apply(&mut cfg);
            let Some(posts) = &cfg.posts else {
                bail!(coordnet::Error::Validation("--posts is required".into()));
            };
            let loaded = load_corpus(
                posts,
                cfg.format,
                LoadOptions {
                    max_rejects: cfg.max_rejects,
                },
            )?;
            let corpus = preprocess(&loaded.corpus)?;
            if let Some(path) = &cfg.embeddings {
                let mut table = load_embeddings(path)?;
                let unknown = table.reconcile(&corpus, cfg.strict_embeddings)?;
                log::info!("{} post vectors, {} unknown ids", table.len(), unknown.len());
            }
            write_corpus(&args.out, &corpus)?;
            println!(
                "{} posts, {} users, {} hashtags ({} records rejected) -> {}",
                corpus.len(),
                corpus.users().len(),
                corpus.hashtags().len(),
                loaded.rejected,
                args.out.display()
            );
        }
        Command::Graph(args) => {
            let corpus = load_corpus(&args.input, InputFormat::Jsonl, LoadOptions::default())?.corpus;
            let projected = project(
                &count_shares(&corpus),
                ProjectOptions {
                    max_hashtag_degree: args.max_hashtag_degree.or(cfg.max_hashtag_degree),
                },
            );
            let g = filter_weight_one(&projected);
            g.write_csv(&args.out)?;
            write_nodes(&nodes_sidecar(&args.out), g.nodes())?;
            println!(
                "{} nodes, {} edges ({} before dropping weight 1) -> {}",
                g.nodes().len(),
                g.edge_count(),
                projected.edge_count(),
                args.out.display()
            );
        }
        Command::Backbone(args) => {
            args.rule.apply(&mut cfg);
            let nodes = read_nodes(&nodes_sidecar(&args.input)).unwrap_or_default();
            let g = CoShareGraph::read_csv(&args.input, nodes)?;
            let opts = BackboneOptions {
                delta: cfg.delta,
                rule: cfg.keep_rule,
                prior: cfg.bayesian_prior,
            };
            let b = extract_backbone(&g, &opts)?;
            b.write_csv(&args.out)?;
            write_nodes(&nodes_sidecar(&args.out), b.nodes())?;
            println!(
                "kept {} of {} edges ({} rule, delta {}) -> {}",
                b.edge_count(),
                g.edge_count(),
                cfg.keep_rule,
                cfg.delta,
                args.out.display()
            );
        }
        Command::Cluster(args) => {
            set(&mut cfg.seed, args.seed);
            let b = load_backbone(&args.input, &cfg)?;
            let p = louvain(&b, cfg.stage_seed("louvain"));
            p.write_csv(&args.out, b.nodes())?;
            println!(
                "{} clusters, modularity {:.4} -> {}",
                p.cluster_count(),
                p.modularity(),
                args.out.display()
            );
        }
        Command::Embed(args) => {
            args.walk.apply(&mut cfg);
            cfg.validate()?;
            let b = load_backbone(&args.input, &cfg)?;
            let e = embed_nodes(&b, &cfg.walk_config(), &cfg.skipgram_config())?;
            e.write(&args.out)?;
            println!(
                "{} vectors of dim {}, {} isolated nodes -> {}",
                e.table().len(),
                e.dim(),
                e.missing().len(),
                args.out.display()
            );
        }
        Command::Features(args) => {
            if args.embeddings.is_some() {
                cfg.embeddings = args.embeddings.clone();
            }
            cfg.strict_embeddings |= args.strict_embeddings;
            cfg.fallback_embed |= args.fallback_embed;
            set(&mut cfg.iat_mode, args.iat_mode);
            let corpus = load_corpus(&args.corpus, InputFormat::Jsonl, LoadOptions::default())?.corpus;
            let b = load_backbone(&args.backbone, &cfg)?;
            let p = Partition::read_csv(&args.partition, &b)?;
            let nodes = NodeEmbeddings::read(&args.node_embeddings, b.nodes())?;
            let posts = match (&cfg.embeddings, cfg.fallback_embed) {
                (Some(path), _) => {
                    let mut t = load_embeddings(path)?;
                    t.reconcile(&corpus, cfg.strict_embeddings)?;
                    t
                }
                (None, true) => {
                    fallback_embed(&corpus, cfg.fallback_dim, cfg.stage_seed("fallback"))?.table
                }
                (None, false) => bail!(coordnet::Error::Validation(
                    "no post embeddings: pass --embeddings or --fallback-embed".into()
                )),
            };
            let rows = assemble_features(
                &b,
                &p,
                &ShareIndex::new(&corpus),
                &posts,
                &nodes,
                cfg.iat_mode,
            )?;
            write_features(&args.out, &rows)?;
            println!("{} edge rows -> {}", rows.len(), args.out.display());
        }
        Command::Detect(args) => {
            args.forest.apply(&mut cfg);
            cfg.validate()?;
            let rows = coordnet::features::read_features(&args.input)?;
            let params = DetectParams {
                forest: ForestParams {
                    n_estimators: cfg.n_estimators,
                    psi: cfg.psi,
                    seed: cfg.stage_seed("forest"),
                },
                contamination: cfg.contamination,
            };
            let d = detect_anomalies(&rows, &params)?;
            write_anomalies(&args.out, &d.records)?;
            if let Some(path) = &args.shap_summary {
                write_shap_summary(path, &shap_summary(&d.records))?;
            }
            let kept = d.records.iter().filter(|r| r.is_final_anomaly()).count();
            let filtered = d.records.iter().filter(|r| r.filtered).count();
            println!(
                "{kept} anomalies after removing {filtered} by IAT, contamination {} -> {}",
                cfg.contamination,
                args.out.display()
            );
        }
        Command::Report => {
            let r = report_only(&cfg)?;
            println!(
                "{} anomalies; reports in {}",
                r.summary.anomalies,
                r.paths.dir.display()
            );
        }
        Command::RunAll(args) => {
            args.input.apply(&mut cfg);
            args.rule.apply(&mut cfg);
            args.walk.apply(&mut cfg);
            args.forest.apply(&mut cfg);
            set(&mut cfg.iat_mode, args.iat_mode);
            if args.max_hashtag_degree.is_some() {
                cfg.max_hashtag_degree = args.max_hashtag_degree;
            }
            cfg.resume |= args.resume;
            let r = run_all(&cfg)?;
            let s = &r.summary;
            println!(
                "backbone kept {} of {} edges; {} clusters; {} anomalies ({} removed by IAT)",
                s.backbone.edges,
                s.original.edges,
                r.partition.cluster_count(),
                s.anomalies,
                s.filtered_anomalies
            );
            for w in &s.warnings {
                println!("warning: {w}");
            }
            println!("reports in {}", r.paths.dir.display());
        }
        Command::Synth(args) => {
            let mut spec = match &args.spec {
                Some(path) => {
                    let text = std::fs::read_to_string(path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    if path.extension().is_some_and(|e| e == "json") {
                        serde_json::from_str(&text).map_err(|e| {
                            coordnet::Error::Validation(format!("{}: {e}", path.display()))
                        })?
                    } else {
                        toml::from_str(&text).map_err(|e| {
                            coordnet::Error::Validation(format!("{}: {e}", path.display()))
                        })?
                    }
                }
                None => SynthSpec::default(),
            };
            set(&mut spec.n_organic_users, args.organic);
            set(&mut spec.n_coordinated_users, args.coordinated);
            set(&mut spec.coordination_groups, args.groups);
            set(&mut spec.coordination_window_secs, args.window);
            set(&mut spec.seed, cli.seed);
            let s = synth_corpus(&spec)?;
            s.write(&cfg.out_dir)?;
            println!(
                "{} posts from {} users, {} planted pairs -> {}",
                s.corpus.len(),
                s.corpus.users().len(),
                s.coordinated_pairs.len(),
                cfg.out_dir.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let validation = err
                .chain()
                .filter_map(|e| e.downcast_ref::<coordnet::Error>())
                .any(coordnet::Error::is_validation);
            ExitCode::from(if validation { 2 } else { 1 })
        }
    }
}

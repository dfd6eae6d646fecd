//! End-to-end orchestration, report tables, and synthetic corpora with
//! planted coordination.

mod config;
mod report;
mod run;
mod stats;
mod synth;

pub use config::PipelineConfig;
pub use report::{
    cluster_status, table2, top_hashtags, write_table1, write_table2, ClusterHashtags,
    HashtagCount, Table2Row, REFERENCE_REMOVAL_FRACTION_IRA,
};
pub use run::{report_only, run_all, CorpusCounts, RunPaths, RunReport, Summary};
pub use stats::{network_stats, CentralizationKind, NetworkStats};
pub use synth::{synth_corpus, SynthCorpus, SynthSpec};

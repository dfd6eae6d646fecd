//! Per-cluster isolation forests over edge features, TreeSHAP attributions,
//! and the inter-arrival-time post-filter.

mod detect;
mod forest;
mod shap;

pub use detect::{
    detect_anomalies, iat_postfilter, label, read_anomalies, shap_summary, write_anomalies,
    write_shap_summary, AnomalyRecord, ClusterDetection, ClusterStatus, DetectParams, Detection,
    Label, ShapSummaryRow, DEFAULT_CONTAMINATION, MISSING_CONTENT_LIMIT,
};
pub use forest::{
    average_path_length, fit_forest, score_from_depth, ForestModel, ForestParams, IsolationTree,
    Node, MIN_TRAINING_ROWS,
};
pub use shap::{tree_base_value, tree_shap, tree_shap_single, ShapExplanation};

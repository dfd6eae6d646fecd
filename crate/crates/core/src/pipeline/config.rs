use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::stats::CentralizationKind;
use crate::anomaly::DEFAULT_CONTAMINATION;
use crate::backbone::{BetaPrior, KeepRule, DEFAULT_DELTA};
use crate::embedding::{SkipGramConfig, TrainMode, WalkConfig};
use crate::error::{Error, Result};
use crate::features::IatMode;
use crate::ingest::InputFormat;

/// Everything a full run needs. Seeds inside `walk` and `skipgram` are ignored;
/// every stage draws from a stream derived from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub posts: Option<PathBuf>,
    pub format: InputFormat,
    pub embeddings: Option<PathBuf>,
    pub strict_embeddings: bool,
    /// Hash post text into vectors when no embeddings file is given.
    pub fallback_embed: bool,
    pub fallback_dim: usize,
    pub max_rejects: usize,
    pub max_hashtag_degree: Option<usize>,
    pub delta: f64,
    pub keep_rule: KeepRule,
    pub bayesian_prior: Option<BetaPrior>,
    pub walk: WalkConfig,
    pub skipgram: SkipGramConfig,
    pub n_estimators: usize,
    pub psi: usize,
    pub contamination: f64,
    pub iat_mode: IatMode,
    pub centralization: CentralizationKind,
    pub top_k_hashtags: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Reuse intermediate files already present in `out_dir`.
    pub resume: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            posts: None,
            format: InputFormat::Jsonl,
            embeddings: None,
            strict_embeddings: false,
            fallback_embed: false,
            fallback_dim: 64,
            max_rejects: 0,
            max_hashtag_degree: None,
            delta: DEFAULT_DELTA,
            keep_rule: KeepRule::Residual,
            bayesian_prior: None,
            walk: WalkConfig::default(),
            skipgram: SkipGramConfig::default(),
            n_estimators: 100,
            psi: 256,
            contamination: DEFAULT_CONTAMINATION,
            iat_mode: IatMode::Cross,
            centralization: CentralizationKind::Degree,
            top_k_hashtags: 10,
            seed: 0,
            out_dir: PathBuf::from("out"),
            resume: false,
        }
    }
}

impl PipelineConfig {
    /// Load from TOML or JSON, chosen by file extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parsed = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| e.to_string()),
            Some("toml") => toml::from_str(&text).map_err(|e| e.to_string()),
            _ => {
                return Err(Error::validation(format!(
                    "{}: config must end in .toml or .json",
                    path.display()
                )))
            }
        };
        let cfg: Self = parsed
            .map_err(|e| Error::validation(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0) {
            return Err(Error::validation("delta must be non-negative"));
        }
        if !(self.contamination > 0.0 && self.contamination <= 0.5) {
            return Err(Error::validation("contamination must be in (0, 0.5]"));
        }
        if self.n_estimators == 0 || self.psi < 2 {
            return Err(Error::validation("need n_estimators >= 1 and psi >= 2"));
        }
        if self.fallback_embed && self.fallback_dim < 8 {
            return Err(Error::validation("fallback_dim must be at least 8"));
        }
        self.walk.validate()?;
        self.skipgram.validate()?;
        Ok(())
    }

    pub fn walk_config(&self) -> WalkConfig {
        WalkConfig {
            seed: self.stage_seed("walks"),
            ..self.walk
        }
    }

    pub fn skipgram_config(&self) -> SkipGramConfig {
        SkipGramConfig {
            seed: self.stage_seed("skipgram"),
            ..self.skipgram
        }
    }

    pub fn stage_seed(&self, stage: &str) -> u64 {
        crate::util::stage_seed(self.seed, stage)
    }

    /// True when the run is reproducible byte for byte.
    pub fn is_deterministic(&self) -> bool {
        self.skipgram.mode == TrainMode::Sequential
    }
}

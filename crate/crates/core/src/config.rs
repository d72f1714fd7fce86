//! Flat `key = value` run configuration.
//!
//! Keys are namespaced by module (`synth.gamma`, `model.heads`, `train.lr`,
//! `explain.steps`). Blank lines are ignored and `#` starts a comment.
//! A top-level `seed` sets every module seed at once.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::explain::ExplainConfig;
use crate::model::{ModelConfig, Variant};
use crate::synth::SynthConfig;
use crate::train::{TrainConfig, WeightDecay};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, found {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key {key:?} set twice")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: invalid value {value:?} for {key}: {reason}")]
    BadValue {
        line: usize,
        key: String,
        value: String,
        reason: String,
    },
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Every tunable setting of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub variant: Variant,
    pub synth: SynthConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub explain: ExplainConfig,
    /// Shuffles per feature for global permutation importance.
    pub importance_repeats: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            seed: 0,
            variant: Variant::Full,
            synth: SynthConfig::default(),
            model: ModelConfig::new(crate::data::NUM_FEATURES, train.t0),
            train,
            explain: ExplainConfig::default(),
            importance_repeats: 10,
        }
    }
}

fn parse<T>(line: usize, key: &str, value: &str) -> Result<T, ConfigError>
where
    T: FromStr,
    T::Err: Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        line,
        key: key.to_owned(),
        value: value.to_owned(),
        reason: e.to_string(),
    })
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Defaults overridden by the assignments in `text`.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        let mut seen = std::collections::BTreeSet::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let trimmed = raw.split_once('#').map_or(raw, |(body, _)| body).trim();
            if trimmed.is_empty() {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                text: raw.to_owned(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Syntax {
                    line,
                    text: raw.to_owned(),
                });
            }
            if !seen.insert(key.to_owned()) {
                return Err(ConfigError::DuplicateKey {
                    line,
                    key: key.to_owned(),
                });
            }
            config.set(line, key, value)?;
        }
        Ok(config)
    }

    /// Propagates one seed to every module.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.synth.seed = seed;
        self.train.seed = seed;
        self.explain.seed = seed;
        self
    }

    fn set(&mut self, line: usize, key: &str, value: &str) -> Result<(), ConfigError> {
        macro_rules! set {
            ($field:expr) => {
                $field = parse(line, key, value)?
            };
        }
        match key {
            "seed" => {
                let seed: u64 = parse(line, key, value)?;
                *self = std::mem::take(self).with_seed(seed);
            }
            "synth.num_segments" => set!(self.synth.num_segments),
            "synth.start_year" => set!(self.synth.start_year),
            "synth.num_years" => set!(self.synth.num_years),
            "synth.target_arcs" => set!(self.synth.target_arcs),
            "synth.gamma" => set!(self.synth.gamma),
            "synth.temporal_drift" => set!(self.synth.temporal_drift),
            "synth.noise_std" => set!(self.synth.model.noise_std),
            "synth.drift_std" => set!(self.synth.model.drift_std),
            "synth.seed" => set!(self.synth.seed),
            "model.variant" => {
                self.variant = value.parse().map_err(|e: crate::model::ModelError| ConfigError::BadValue {
                    line,
                    key: key.to_owned(),
                    value: value.to_owned(),
                    reason: e.to_string(),
                })?
            }
            "model.heads" => set!(self.model.heads),
            "model.d_head" => set!(self.model.d_head),
            "model.gru_hidden" => set!(self.model.gru_hidden),
            "model.head_hidden" => set!(self.model.head_hidden),
            "model.dropout" => {
                let d: f64 = parse(line, key, value)?;
                self.model.spatial_dropout = d;
                self.model.head_dropout = d;
            }
            "model.spatial_dropout" => set!(self.model.spatial_dropout),
            "model.head_dropout" => set!(self.model.head_dropout),
            "model.self_loops" => set!(self.model.self_loops),
            "train.lr" => set!(self.train.learning_rate),
            "train.weight_decay" => set!(self.train.weight_decay),
            "train.weight_decay_mode" => {
                self.train.weight_decay_mode = match value {
                    "l2" => WeightDecay::L2,
                    "decoupled" => WeightDecay::Decoupled,
                    _ => {
                        return Err(ConfigError::BadValue {
                            line,
                            key: key.to_owned(),
                            value: value.to_owned(),
                            reason: "expected l2 or decoupled".into(),
                        })
                    }
                }
            }
            "train.epochs" => set!(self.train.max_epochs),
            "train.scheduler_factor" => set!(self.train.scheduler_factor),
            "train.scheduler_patience" => set!(self.train.scheduler_patience),
            "train.early_stop_patience" => set!(self.train.early_stop_patience),
            "train.plateau_threshold" => set!(self.train.plateau_threshold),
            "train.t0" => {
                set!(self.train.t0);
                self.model.t0 = self.train.t0;
            }
            "train.seed" => set!(self.train.seed),
            "explain.steps" => set!(self.explain.steps),
            "explain.lr" => set!(self.explain.learning_rate),
            "explain.lambda_feature_l1" => set!(self.explain.lambda_feature_l1),
            "explain.lambda_feature_entropy" => set!(self.explain.lambda_feature_entropy),
            "explain.lambda_edge_l1" => set!(self.explain.lambda_edge_l1),
            "explain.init_scale" => set!(self.explain.init_scale),
            "explain.optimizer" => {
                self.explain.optimizer = value.parse().map_err(|e: crate::explain::ExplainError| {
                    ConfigError::BadValue {
                        line,
                        key: key.to_owned(),
                        value: value.to_owned(),
                        reason: e.to_string(),
                    }
                })?
            }
            "explain.repeats" => set!(self.importance_repeats),
            "explain.seed" => set!(self.explain.seed),
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_owned(),
                })
            }
        }
        Ok(())
    }

    /// Renders every setting as `key = value` lines that [`RunConfig::parse`] reads back.
    pub fn to_text(&self) -> String {
        let s = &self.synth;
        let m = &self.model;
        let t = &self.train;
        let e = &self.explain;
        let mode = match t.weight_decay_mode {
            WeightDecay::L2 => "l2",
            WeightDecay::Decoupled => "decoupled",
        };
        let lines = [
            format!("seed = {}", self.seed),
            format!("synth.num_segments = {}", s.num_segments),
            format!("synth.start_year = {}", s.start_year),
            format!("synth.num_years = {}", s.num_years),
            format!("synth.target_arcs = {}", s.target_arcs),
            format!("synth.gamma = {:?}", s.gamma),
            format!("synth.temporal_drift = {}", s.temporal_drift),
            format!("synth.noise_std = {:?}", s.model.noise_std),
            format!("synth.drift_std = {:?}", s.model.drift_std),
            format!("synth.seed = {}", s.seed),
            format!("model.variant = {}", self.variant),
            format!("model.heads = {}", m.heads),
            format!("model.d_head = {}", m.d_head),
            format!("model.gru_hidden = {}", m.gru_hidden),
            format!("model.head_hidden = {}", m.head_hidden),
            format!("model.spatial_dropout = {:?}", m.spatial_dropout),
            format!("model.head_dropout = {:?}", m.head_dropout),
            format!("model.self_loops = {}", m.self_loops),
            format!("train.lr = {:?}", t.learning_rate),
            format!("train.weight_decay = {:?}", t.weight_decay),
            format!("train.weight_decay_mode = {mode}"),
            format!("train.epochs = {}", t.max_epochs),
            format!("train.scheduler_factor = {:?}", t.scheduler_factor),
            format!("train.scheduler_patience = {}", t.scheduler_patience),
            format!("train.early_stop_patience = {}", t.early_stop_patience),
            format!("train.plateau_threshold = {:?}", t.plateau_threshold),
            format!("train.t0 = {}", t.t0),
            format!("train.seed = {}", t.seed),
            format!("explain.steps = {}", e.steps),
            format!("explain.lr = {:?}", e.learning_rate),
            format!("explain.lambda_feature_l1 = {:?}", e.lambda_feature_l1),
            format!("explain.lambda_feature_entropy = {:?}", e.lambda_feature_entropy),
            format!("explain.lambda_edge_l1 = {:?}", e.lambda_edge_l1),
            format!("explain.init_scale = {:?}", e.init_scale),
            format!("explain.optimizer = {}", e.optimizer),
            format!("explain.repeats = {}", self.importance_repeats),
            format!("explain.seed = {}", e.seed),
        ];
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}

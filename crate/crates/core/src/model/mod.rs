//! The residual graph-attention + GRU forecaster, its ablation variants and
//! the non-spatial MLP baseline.
//!
//! Data flow for the full model, per time step `t` of the input window:
//!
//! ```text
//! x_t ──► multi-head GAT (self-loops, shared weights) ──► h_t
//! x_t ──► W_r ──────────────────────────────────────────► + ──► ELU ──► LayerNorm ──► dropout ──► z_t
//! ```
//!
//! then `z_1..z_T0` feed a single-layer GRU whose last hidden state goes
//! through a two-layer ReLU regression head to give one standardized PCI per
//! node.

mod checkpoint;
mod forward;
mod layers;
mod params;

pub use checkpoint::Checkpoint;
pub use forward::{attention_coefficients, predict, Forward, ForwardMode, ModelVars};
pub use params::{GatHead, GatLayerParams, GruParams, HeadParams, ModelParams, ResidualParams};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, LEAKY_SLOPE};
use crate::data::DataError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("model expects {expected} input features, got {got}")]
    FeatureMismatch { expected: usize, got: usize },
    #[error("model expects a window of {expected} steps, got {got}")]
    WindowMismatch { expected: usize, got: usize },
    #[error("variant {variant} is missing its {part} parameters")]
    VariantMismatch { variant: Variant, part: &'static str },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{}: {source}", path.display())]
    File {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Architecture variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Residual GAT per step, GRU over the window, regression head.
    Full,
    /// Residual GAT on the last step only, no GRU.
    Resgat,
    /// GAT without the residual branch, GRU over the window.
    StGat,
    /// Plain GAT on the last step only.
    Vanilla,
    /// Regression head over the flattened window; ignores the graph.
    Mlp,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::Resgat,
        Variant::StGat,
        Variant::Vanilla,
        Variant::Mlp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Resgat => "resgat",
            Variant::StGat => "st_gat",
            Variant::Vanilla => "vanilla",
            Variant::Mlp => "mlp",
        }
    }

    pub fn uses_graph(self) -> bool {
        self != Variant::Mlp
    }

    pub fn uses_residual(self) -> bool {
        matches!(self, Variant::Full | Variant::Resgat)
    }

    pub fn uses_gru(self) -> bool {
        matches!(self, Variant::Full | Variant::StGat)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| ModelError::InvalidConfig(format!("unknown variant {s:?}")))
    }
}

/// Dimensions and fixed hyperparameters of a model instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub f_in: usize,
    pub t0: usize,
    pub heads: usize,
    pub d_head: usize,
    pub gru_hidden: usize,
    pub head_hidden: usize,
    /// Dropout after the residual layer norm.
    pub spatial_dropout: f64,
    /// Dropout after the first head layer.
    pub head_dropout: f64,
    pub leaky_slope: f64,
    pub self_loops: bool,
}

impl ModelConfig {
    /// Defaults: 4 heads of 64 channels (256-wide spatial embedding), GRU 256, head 128.
    pub fn new(f_in: usize, t0: usize) -> Self {
        Self {
            f_in,
            t0,
            heads: 4,
            d_head: 64,
            gru_hidden: 256,
            head_hidden: 128,
            spatial_dropout: 0.0,
            head_dropout: 0.0,
            leaky_slope: LEAKY_SLOPE,
            self_loops: true,
        }
    }

    pub fn spatial_dim(&self) -> usize {
        self.heads * self.d_head
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            ("f_in", self.f_in),
            ("t0", self.t0),
            ("heads", self.heads),
            ("d_head", self.d_head),
            ("gru_hidden", self.gru_hidden),
            ("head_hidden", self.head_hidden),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::InvalidConfig(format!("{name} must be positive")));
        }
        for (name, p) in [
            ("spatial_dropout", self.spatial_dropout),
            ("head_dropout", self.head_dropout),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(ModelError::InvalidConfig(format!("{name} must lie in [0, 1)")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("transformer".parse::<Variant>().is_err());
    }

    #[test]
    fn default_embedding_is_256() {
        let c = ModelConfig::new(11, 2);
        assert_eq!(c.heads, 4);
        assert_eq!(c.spatial_dim(), 256);
        assert_eq!(c.gru_hidden, 256);
        assert_eq!(c.head_hidden, 128);
    }

    #[test]
    fn zero_heads_rejected() {
        let mut c = ModelConfig::new(11, 2);
        c.heads = 0;
        assert!(c.validate().is_err());
    }
}

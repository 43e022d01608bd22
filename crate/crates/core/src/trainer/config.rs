use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adversarial::SamplingStrategy;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Plain supervised GCN.
    #[serde(rename = "gcn", alias = "standard")]
    Standard,
    /// GCN with the virtual-adversarial regularizer only.
    #[serde(rename = "vat")]
    Vat,
    #[serde(rename = "graphat")]
    GraphAt,
    #[serde(rename = "graphvat")]
    GraphVat,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Standard, Mode::Vat, Mode::GraphAt, Mode::GraphVat];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Standard => "gcn",
            Mode::Vat => "vat",
            Mode::GraphAt => "graphat",
            Mode::GraphVat => "graphvat",
        }
    }

    pub fn uses_graph_term(self) -> bool {
        matches!(self, Mode::GraphAt | Mode::GraphVat)
    }

    pub fn uses_virtual_term(self) -> bool {
        matches!(self, Mode::Vat | Mode::GraphVat)
    }

    /// Dropout used when the config leaves it unset.
    pub fn default_dropout(self) -> f64 {
        match self {
            Mode::Standard => 0.5,
            _ => 0.0,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" | "standard" => Ok(Mode::Standard),
            "vat" | "gcn-vat" => Ok(Mode::Vat),
            "graphat" => Ok(Mode::GraphAt),
            "graphvat" => Ok(Mode::GraphVat),
            _ => Err(Error::usage(format!(
                "unknown mode {s:?} (expected gcn, vat, graphat, graphvat)"
            ))),
        }
    }
}

/// Every hyperparameter of a training run.
///
/// Regularizer weights `beta` and `alpha` multiply the *mean* divergence over
/// sampled pairs and over nodes respectively, so their scale does not depend
/// on graph size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: Mode,
    pub hidden: usize,
    pub weight_decay: f64,
    /// `None` means the mode's default (0.5 for plain GCN, 0 otherwise).
    pub dropout: Option<f64>,
    pub lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub epsilon: f64,
    pub beta: f64,
    pub k: usize,
    pub strategy: SamplingStrategy,
    pub virtual_epsilon: f64,
    pub alpha: f64,
    pub xi: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Standard,
            hidden: 16,
            weight_decay: 5e-4,
            dropout: None,
            lr: 0.01,
            max_epochs: 300,
            patience: 30,
            epsilon: 0.01,
            beta: 0.1,
            k: 1,
            strategy: SamplingStrategy::Uniform,
            virtual_epsilon: 0.05,
            alpha: 0.01,
            xi: 1e-6,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn for_mode(mode: Mode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn effective_dropout(&self) -> f64 {
        self.dropout.unwrap_or_else(|| self.mode.default_dropout())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::usage(msg));
        if self.hidden == 0 {
            return bad("hidden size must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight decay must be >= 0, got {}", self.weight_decay));
        }
        let dropout = self.effective_dropout();
        if !(0.0..1.0).contains(&dropout) {
            return bad(format!("dropout must lie in [0, 1), got {dropout}"));
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be positive".into());
        }
        if self.mode.uses_graph_term() {
            if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
                return bad(format!("epsilon must be positive, got {}", self.epsilon));
            }
            if !(self.beta >= 0.0 && self.beta.is_finite()) {
                return bad(format!("beta must be >= 0, got {}", self.beta));
            }
            if self.k == 0 {
                return bad("k must be at least 1".into());
            }
        }
        if self.mode.uses_virtual_term() {
            if !(self.virtual_epsilon > 0.0 && self.virtual_epsilon.is_finite()) {
                return bad(format!(
                    "virtual epsilon must be positive, got {}",
                    self.virtual_epsilon
                ));
            }
            if !(self.xi > 0.0 && self.xi.is_finite()) {
                return bad(format!("xi must be positive, got {}", self.xi));
            }
            if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
                return bad(format!("alpha must be >= 0, got {}", self.alpha));
            }
        }
        Ok(())
    }
}

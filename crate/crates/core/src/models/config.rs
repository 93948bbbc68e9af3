use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    Classification,
    Regression,
    Binary,
    DeepMf,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Classification,
        ModelKind::Regression,
        ModelKind::Binary,
        ModelKind::DeepMf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Classification => "classification",
            ModelKind::Regression => "regression",
            ModelKind::Binary => "binary",
            ModelKind::DeepMf => "deepmf",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classification" => Ok(ModelKind::Classification),
            "regression" => Ok(ModelKind::Regression),
            "binary" => Ok(ModelKind::Binary),
            "deepmf" => Ok(ModelKind::DeepMf),
            other => Err(Error::InvalidArgument(format!("unknown model kind `{other}`"))),
        }
    }
}

/// How the regression baseline joins its two embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegressionTrunk {
    /// Plain inner product of the user and item embeddings.
    Dot,
    /// Concatenated embeddings through the hidden MLP to one linear neuron.
    Mlp,
}

impl FromStr for RegressionTrunk {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dot" => Ok(RegressionTrunk::Dot),
            "mlp" => Ok(RegressionTrunk::Mlp),
            other => Err(Error::InvalidArgument(format!("unknown regression trunk `{other}`"))),
        }
    }
}

impl std::fmt::Display for RegressionTrunk {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RegressionTrunk::Dot => "dot",
            RegressionTrunk::Mlp => "mlp",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub embed_dim: usize,
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub seed: u64,
    pub shuffle: bool,
    pub regression_trunk: RegressionTrunk,
    pub deepmf_layers: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 15,
            batch_size: 256,
            learning_rate: 0.001,
            embed_dim: 10,
            hidden: vec![80, 25],
            dropout: 0.4,
            seed: 42,
            shuffle: true,
            regression_trunk: RegressionTrunk::Dot,
            deepmf_layers: vec![128, 64],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("embed_dim", self.embed_dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.hidden.iter().chain(&self.deepmf_layers).any(|&h| h == 0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        if self.deepmf_layers.is_empty() {
            return Err(Error::Config("deepmf needs at least one tower layer".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

//! JSON parameter checkpoints. Floats are written in shortest round-trip form
//! and parsed with exact round-tripping, so a save/load cycle is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ModelKind, TrainConfig};
use super::graph::{Body, ModelGraph};
use crate::dataset::Interaction;
use crate::engine::{Matrix, Parameterized};
use crate::error::{Error, Result};

pub const FORMAT: &str = "ncfrel-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub kind: ModelKind,
    pub v_max: u8,
    pub num_users: usize,
    pub num_items: usize,
    pub theta: Option<u8>,
    pub config: TrainConfig,
    pub adam_steps: u64,
    pub tensors: Vec<Tensor>,
    /// DeepMF tower inputs are rebuilt from these train interactions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interactions: Option<Vec<Interaction>>,
}

impl Checkpoint {
    pub fn from_model(model: &ModelGraph) -> Self {
        let tensors = model
            .params()
            .into_iter()
            .map(|p| Tensor {
                name: p.name.clone(),
                shape: [p.value.rows(), p.value.cols()],
                values: p.value.data().to_vec(),
            })
            .collect();
        let interactions = match &model.body {
            Body::Towers(t) => Some(t.source().to_vec()),
            _ => None,
        };
        Checkpoint {
            format: FORMAT.to_string(),
            kind: model.kind,
            v_max: model.v_max,
            num_users: model.num_users,
            num_items: model.num_items,
            theta: model.theta,
            config: model.config.clone(),
            adam_steps: model.adam.step_count,
            tensors,
            interactions,
        }
    }

    pub fn into_model(self) -> Result<ModelGraph> {
        if self.format != FORMAT {
            return Err(Error::Checkpoint(format!("unsupported format `{}`", self.format)));
        }
        let (u, i, v, cfg) = (self.num_users, self.num_items, self.v_max, &self.config);
        let mut model = match self.kind {
            ModelKind::Classification => ModelGraph::build_classification(u, i, v, cfg)?,
            ModelKind::Regression => ModelGraph::build_regression(u, i, v, cfg)?,
            ModelKind::Binary => {
                let theta = self
                    .theta
                    .ok_or_else(|| Error::Checkpoint("binary checkpoint without theta".into()))?;
                ModelGraph::build_binary(u, i, v, theta, cfg)?
            }
            ModelKind::DeepMf => {
                let train = self
                    .interactions
                    .as_deref()
                    .ok_or_else(|| Error::Checkpoint("deepmf checkpoint without interactions".into()))?;
                ModelGraph::build_deepmf(u, i, v, train, cfg)?
            }
        };
        let mut params = model.params_mut();
        if params.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                params.len(),
                self.tensors.len()
            )));
        }
        for (p, t) in params.iter_mut().zip(self.tensors) {
            if p.name != t.name {
                return Err(Error::Checkpoint(format!("expected tensor `{}`, found `{}`", p.name, t.name)));
            }
            if [p.value.rows(), p.value.cols()] != t.shape {
                return Err(Error::Checkpoint(format!("tensor `{}` has wrong shape {:?}", t.name, t.shape)));
            }
            p.value = Matrix::from_vec(t.shape[0], t.shape[1], t.values)?;
        }
        model.adam.step_count = self.adam_steps;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::Checkpoint(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }
}

//! JSON model checkpoints: scheme kind, configuration, correlation model,
//! every parameter tensor (shape + row-major values), the training seed and
//! a history summary. Serialization is canonical pretty JSON, so
//! save -> load -> save is byte-identical.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::rng::RngState;
use crate::source::CorrelationModel;
use crate::tensor::Tensor;
use crate::{Error, Result};

use super::{SchemeConfig, SchemeKind, SchemeModel};

/// Condensed training history carried inside a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistorySummary {
    pub epochs: usize,
    pub final_rate_nats: f64,
    pub final_d1_mse: f64,
    pub final_d2_mse: f64,
    pub final_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    tensor: Tensor,
}

/// On-disk model representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub scheme: SchemeKind,
    pub config: SchemeConfig,
    pub correlation: CorrelationModel,
    pub seed: u64,
    params: Vec<NamedTensor>,
    pub history: Option<HistorySummary>,
}

impl Checkpoint {
    pub fn from_model(
        model: &SchemeModel,
        correlation: CorrelationModel,
        seed: u64,
        history: Option<HistorySummary>,
    ) -> Self {
        let mut params = Vec::new();
        model.visit_params(&mut |name, t| {
            params.push(NamedTensor {
                name: name.to_string(),
                tensor: t.clone(),
            })
        });
        Checkpoint {
            scheme: model.kind(),
            config: model.config().clone(),
            correlation,
            seed,
            params,
            history,
        }
    }

    /// Rebuild the model. Every stored tensor must match a parameter of the
    /// reconstructed architecture by name and shape.
    pub fn to_model(&self) -> Result<SchemeModel> {
        // Architecture from config; values overwritten below.
        let mut rng = RngState::from_seed(0);
        let mut model = SchemeModel::init(self.scheme, self.config.clone(), &mut rng)?;
        let mut remaining: std::collections::HashMap<&str, &Tensor> = self
            .params
            .iter()
            .map(|nt| (nt.name.as_str(), &nt.tensor))
            .collect();
        if remaining.len() != self.params.len() {
            return Err(Error::Checkpoint("duplicate parameter names".into()));
        }
        let mut missing = Vec::new();
        let mut shape_err = None;
        model.visit_params_mut(&mut |name, t| match remaining.remove(name) {
            Some(stored) => {
                if stored.shape() != t.shape() {
                    shape_err = Some(format!(
                        "parameter {name}: stored shape {:?}, expected {:?}",
                        stored.shape(),
                        t.shape()
                    ));
                } else {
                    *t = stored.clone();
                }
            }
            None => missing.push(name.to_string()),
        });
        if let Some(e) = shape_err {
            return Err(Error::Checkpoint(e));
        }
        if !missing.is_empty() {
            return Err(Error::Checkpoint(format!("missing parameters: {missing:?}")));
        }
        if !remaining.is_empty() {
            let extra: Vec<&str> = remaining.keys().copied().collect();
            return Err(Error::Checkpoint(format!("unknown parameters: {extra:?}")));
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Write a checkpoint file.
pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    std::fs::write(path, ckpt.to_json()?)?;
    Ok(())
}

/// Read a checkpoint file.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let s = std::fs::read_to_string(path)?;
    Checkpoint::from_json(&s)
}

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::{fold_normalization, Layer, MlpParams, MlpSpec};
use super::normalize::Normalizer;
use super::NeuralError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub seed: u64,
    pub train_loss: f64,
    pub val_loss: f64,
    #[serde(default)]
    pub best_epoch: usize,
    /// Input column names, in order.
    #[serde(default)]
    pub feature_names: Vec<String>,
}

/// Serialized predictor: normalized-space weights plus the scaling that
/// maps raw features into that space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub spec: MlpSpec,
    /// `weights[layer][input][output]`.
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
    pub normalizer: Normalizer<f64>,
    pub metadata: ModelMetadata,
}

impl ModelFile {
    pub fn from_parts(
        params: &MlpParams<f64>,
        normalizer: Normalizer<f64>,
        metadata: ModelMetadata,
    ) -> Self {
        Self {
            spec: params.spec(),
            weights: params
                .layers
                .iter()
                .map(|l| (0..l.inputs).map(|i| l.row(i).to_vec()).collect())
                .collect(),
            biases: params.layers.iter().map(|l| l.bias.clone()).collect(),
            normalizer,
            metadata,
        }
    }

    pub fn params(&self) -> Result<MlpParams<f64>, NeuralError> {
        self.spec.validate()?;
        let widths = self.spec.widths();
        if self.weights.len() != widths.len() - 1 || self.biases.len() != widths.len() - 1 {
            return Err(NeuralError::InvalidSpec(
                "layer count differs from spec".into(),
            ));
        }
        let mut layers = Vec::new();
        for (k, pair) in widths.windows(2).enumerate() {
            let (inputs, outputs) = (pair[0], pair[1]);
            let w = &self.weights[k];
            if w.len() != inputs
                || w.iter().any(|r| r.len() != outputs)
                || self.biases[k].len() != outputs
            {
                return Err(NeuralError::InvalidSpec(format!(
                    "layer {k} shape differs from spec"
                )));
            }
            layers.push(Layer {
                inputs,
                outputs,
                weights: w.concat(),
                bias: self.biases[k].clone(),
            });
        }
        let p = MlpParams { layers };
        p.validate()?;
        if self.normalizer.input_shift.len() != self.spec.input_dim {
            return Err(NeuralError::DimensionMismatch {
                expected: self.spec.input_dim,
                found: self.normalizer.input_shift.len(),
            });
        }
        self.normalizer.validate()?;
        Ok(p)
    }

    /// Parameters acting on raw features and producing raw outputs.
    pub fn folded(&self) -> Result<MlpParams<f64>, NeuralError> {
        fold_normalization(&self.params()?, &self.normalizer)
    }

    pub fn to_json(&self) -> Result<String, NeuralError> {
        serde_json::to_string_pretty(self).map_err(|e| NeuralError::Json(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, NeuralError> {
        let m: Self = serde_json::from_str(text).map_err(|e| NeuralError::Json(e.to_string()))?;
        m.params()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), NeuralError> {
        std::fs::write(path, self.to_json()? + "\n")
            .map_err(|e| NeuralError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, NeuralError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| NeuralError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

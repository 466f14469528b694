use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::linear::LinearModel;
use super::tree::TreeNode;
use crate::error::{Error, Result};
use crate::features::FeatureVector;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    RandomForest,
    GbrtQuantile,
    Linear,
}

/// What a model's output means.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    /// Candidate depth.
    K,
    /// JASS postings budget.
    Rho,
    /// Natural log of response time in milliseconds.
    LogTime,
    /// Untyped target (synthetic data, tests).
    Raw,
}

impl TargetKind {
    pub fn name(self) -> &'static str {
        match self {
            TargetKind::K => "k",
            TargetKind::Rho => "rho",
            TargetKind::LogTime => "log-time",
            TargetKind::Raw => "raw",
        }
    }
}

/// A serialized regressor: random forest, quantile GBRT or linear.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub format_version: u32,
    pub kind: ModelKind,
    pub target: TargetKind,
    pub schema_version: String,
    pub n_features: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub learning_rate: Option<f64>,
    /// GBRT starting constant; 0 for other kinds.
    pub initial: f64,
    pub trees: Vec<TreeNode>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub linear: Option<LinearModel>,
    /// Tail classification threshold learned from training times.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tail_threshold_ms: Option<f64>,
}

/// Anything that maps a feature vector to a prediction.
pub trait Predictor: Send + Sync {
    fn predict(&self, x: &FeatureVector) -> Result<f64>;

    /// Scale of the prediction; `LogTime` outputs are natural logs of ms.
    fn target(&self) -> TargetKind {
        TargetKind::Raw
    }
}

impl TreeEnsemble {
    /// Raw model output for a feature row (no schema check).
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        match self.kind {
            ModelKind::RandomForest => {
                if self.trees.is_empty() {
                    return 0.0;
                }
                self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
            }
            ModelKind::GbrtQuantile => {
                let lr = self.learning_rate.unwrap_or(1.0);
                self.initial + lr * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
            }
            ModelKind::Linear => self.linear.as_ref().map_or(0.0, |m| m.predict(x)),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<TreeEnsemble> {
        let m: TreeEnsemble = serde_json::from_str(s)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported model format version {}", m.format_version)));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<TreeEnsemble> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

impl Predictor for TreeEnsemble {
    fn predict(&self, x: &FeatureVector) -> Result<f64> {
        if x.schema_version != self.schema_version || x.values.len() != self.n_features {
            return Err(Error::SchemaMismatch {
                expected: format!("{} ({} features)", self.schema_version, self.n_features),
                found: format!("{} ({} features)", x.schema_version, x.values.len()),
            });
        }
        Ok(self.predict_row(&x.values))
    }

    fn target(&self) -> TargetKind {
        self.target
    }
}

/// Predicts the same value for every query.
#[derive(Clone, Copy, Debug)]
pub struct ConstantPredictor(pub f64);

impl Predictor for ConstantPredictor {
    fn predict(&self, _: &FeatureVector) -> Result<f64> {
        Ok(self.0)
    }
}

/// Looks predictions up by query id (e.g. out-of-fold predictions from
/// cross-validation); unknown ids go to `fallback`.
#[derive(Clone)]
pub struct TablePredictor {
    pub values: std::collections::HashMap<String, f64>,
    pub fallback: std::sync::Arc<dyn Predictor>,
    pub target: TargetKind,
}

impl Predictor for TablePredictor {
    fn predict(&self, x: &FeatureVector) -> Result<f64> {
        match self.values.get(&x.query_id) {
            Some(v) => Ok(*v),
            None => self.fallback.predict(x),
        }
    }

    fn target(&self) -> TargetKind {
        self.target
    }
}

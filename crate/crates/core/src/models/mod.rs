//! Probability backends for neural rules and trainable rule-weight groups.

mod dense;
mod features;
mod store;
mod tables;

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::program::Program;
use crate::terms::{Symbol, Term};

pub use dense::DenseNet;
pub use features::{FeatureTable, FEATURE_PREFIX};
pub use store::{softmax, softmax_backward, ParamStore, WeightGroup};
pub use tables::{FixedTable, SoftmaxTable, Uniform};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("model {0} is not registered")]
    UnknownModel(String),
    #[error("model {model} expects {expected} inputs, got {found}")]
    Arity { model: String, expected: usize, found: usize },
    #[error("model {model} has no entry for input {key}")]
    UnknownInput { model: String, key: String },
    #[error("no feature vector for token {0}")]
    MissingFeature(String),
    #[error("feature vector {0} has non-finite entries")]
    NonFinite(String),
    #[error("neural input {inputs} of model {model} is not ground")]
    NonGroundInput { model: String, inputs: String },
    #[error("model {model}: {message}")]
    Invalid { model: String, message: String },
    #[error("forward cache is stale: parameters changed since it was filled")]
    StaleCache,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("model configuration: {0}")]
    Config(String),
}

/// A differentiable map from ground input terms to a distribution over the
/// flattened output domain.
pub trait NeuralModel: Send + Sync + fmt::Debug {
    fn kind(&self) -> &'static str;
    fn output_size(&self) -> usize;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    fn forward(&self, inputs: &[Term], features: &FeatureTable) -> Result<Vec<f64>, ModelError>;
    /// Adds the gradient of `Σ_k upstream[k] · p[k]` w.r.t. the parameters
    /// into `grad`.
    fn backward(&self, inputs: &[Term], features: &FeatureTable, upstream: &[f64], grad: &mut [f64]) -> Result<(), ModelError>;
    fn clone_box(&self) -> Box<dyn NeuralModel>;
}

impl Clone for Box<dyn NeuralModel> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

/// Name of a symbolic token as used in table keys: atoms by their text,
/// other terms by their printed form.
pub fn token_name(term: &Term) -> String {
    match term {
        Term::Atom(s) => s.as_str().to_owned(),
        other => other.to_string(),
    }
}

/// Table key of an input tuple; `[]` for a model without inputs.
pub fn input_key(inputs: &[Term]) -> String {
    if inputs.is_empty() {
        return "[]".to_owned();
    }
    inputs.iter().map(token_name).collect::<Vec<_>>().join(",")
}

/// Model description as found in a JSON model configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    /// Rows keyed by input key; `default` serves unlisted inputs.
    Fixed {
        #[serde(default)]
        rows: std::collections::BTreeMap<String, Vec<f64>>,
        #[serde(default)]
        default: Option<Vec<f64>>,
    },
    /// Trainable logits per input key.
    Softmax {
        #[serde(default)]
        vocab: Vec<String>,
    },
    Dense {
        hidden: usize,
        #[serde(default)]
        input_dim: Option<usize>,
    },
    Uniform,
}

/// JSON model configuration: `{"seed": 42, "models": {"name": {...}}}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub models: std::collections::BTreeMap<String, ModelSpec>,
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<ModelConfig, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::Config(e.to_string()))
    }
}

/// Registered models by name, in program order.
#[derive(Debug, Clone, Default)]
pub struct ModelRegistry {
    models: Vec<(Symbol, Box<dyn NeuralModel>)>,
}

impl ModelRegistry {
    pub fn new() -> ModelRegistry {
        ModelRegistry::default()
    }

    pub fn register(&mut self, name: Symbol, model: Box<dyn NeuralModel>) {
        match self.models.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = model,
            None => self.models.push((name, model)),
        }
    }

    pub fn get(&self, name: Symbol) -> Result<&dyn NeuralModel, ModelError> {
        self.models
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, m)| m.as_ref())
            .ok_or_else(|| ModelError::UnknownModel(name.to_string()))
    }

    pub fn index_of(&self, name: Symbol) -> Option<usize> {
        self.models.iter().position(|(n, _)| *n == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Symbol, &dyn NeuralModel)> {
        self.models.iter().map(|(n, m)| (*n, m.as_ref()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (Symbol, &mut Box<dyn NeuralModel>)> {
        self.models.iter_mut().map(|(n, m)| (*n, m))
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Builds every model the program uses from `config`. Softmax tables
    /// without a vocabulary take `tokens`; dense nets without an input
    /// dimension take the feature dimension times the rule's input count.
    pub fn build(program: &Program, config: &ModelConfig, features: &FeatureTable, tokens: &[String]) -> Result<ModelRegistry, ModelError> {
        let seed = config.seed.unwrap_or(DEFAULT_SEED);
        let mut registry = ModelRegistry::new();
        let sizes = program.model_output_sizes().map_err(|e| ModelError::Config(e.to_string()))?;
        for (index, (name, k)) in sizes.into_iter().enumerate() {
            let spec = config
                .models
                .get(name.as_str())
                .ok_or_else(|| ModelError::UnknownModel(name.to_string()))?;
            let arity = program
                .rules
                .iter()
                .filter_map(|r| r.neural())
                .find(|d| d.model == name)
                .map(|d| d.inputs.len())
                .unwrap_or(0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64));
            let model: Box<dyn NeuralModel> = match spec {
                ModelSpec::Fixed { rows, default } => Box::new(FixedTable::new(name.as_str(), k, rows.clone(), default.clone())?),
                ModelSpec::Softmax { vocab } => {
                    let keys = if vocab.is_empty() { tokens.to_vec() } else { vocab.clone() };
                    let keys = if arity == 0 { vec!["[]".to_owned()] } else { keys };
                    Box::new(SoftmaxTable::new(k, keys, &mut rng))
                }
                ModelSpec::Dense { hidden, input_dim } => {
                    let d = input_dim.unwrap_or(features.dim() * arity.max(1));
                    if d == 0 {
                        return Err(ModelError::Config(format!("dense model {name} needs an input dimension or a feature table")));
                    }
                    Box::new(DenseNet::new(d, *hidden, k, &mut rng))
                }
                ModelSpec::Uniform => Box::new(Uniform::new(k)),
            };
            registry.register(name, model);
        }
        Ok(registry)
    }
}

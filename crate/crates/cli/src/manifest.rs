//! Run manifests: one JSON file naming the grammar, datasets, features,
//! model configuration and training configuration of a run. Relative paths
//! resolve against the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use stochlog::learning::{read_dataset, QueryInstance, TrainConfig};
use stochlog::models::{token_name, FeatureTable, ModelConfig, ModelRegistry, ParamStore};
use stochlog::program::{parse_program_with, LoadOptions, Program};

use crate::Failure;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelsField {
    Path(PathBuf),
    Inline(ModelConfig),
}

impl Default for ModelsField {
    fn default() -> Self {
        ModelsField::Inline(ModelConfig::default())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub grammar: PathBuf,
    #[serde(default)]
    pub train: Option<PathBuf>,
    #[serde(default)]
    pub eval: Option<PathBuf>,
    /// CSV feature matrix for `vec:` tokens.
    #[serde(default)]
    pub features: Option<PathBuf>,
    #[serde(default)]
    pub models: ModelsField,
    #[serde(default)]
    pub config: TrainConfig,
    #[serde(default)]
    pub seed: Option<u64>,
    pub output: PathBuf,
    /// Skip the normalization check on fixed weights.
    #[serde(default)]
    pub lenient: bool,
}

/// Everything a manifest references, loaded and checked.
pub struct Run {
    pub program: Program,
    pub features: FeatureTable,
    pub models: ModelConfig,
    pub train: Vec<QueryInstance>,
    pub eval: Vec<QueryInstance>,
    pub config: TrainConfig,
    pub output: PathBuf,
}

pub fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(Failure::usage)
}

pub fn load_program(path: &Path, lenient: bool) -> Result<Program, Failure> {
    let text = read(path)?;
    let options = LoadOptions {
        check_normalization: !lenient,
    };
    parse_program_with(&text, &options).map_err(|e| Failure::usage(anyhow::anyhow!("{}:{e}", path.display())))
}

pub fn load_features(path: Option<&Path>) -> Result<FeatureTable, Failure> {
    match path {
        Some(p) => FeatureTable::from_csv(&read(p)?).map_err(|e| Failure::usage(anyhow::anyhow!("{}: {e}", p.display()))),
        None => Ok(FeatureTable::empty()),
    }
}

pub fn load_models(path: &Path) -> Result<ModelConfig, Failure> {
    ModelConfig::from_json(&read(path)?).map_err(|e| Failure::usage(anyhow::anyhow!("{}: {e}", path.display())))
}

fn load_dataset(path: &Path) -> Result<Vec<QueryInstance>, Failure> {
    read_dataset(&read(path)?).map_err(|e| Failure::usage(anyhow::anyhow!("{}: {e}", path.display())))
}

/// Sorted distinct token names; the default vocabulary of softmax tables.
pub fn vocabulary<'a>(sets: impl IntoIterator<Item = &'a [QueryInstance]>) -> Vec<String> {
    let mut tokens: Vec<String> = sets
        .into_iter()
        .flatten()
        .flat_map(|q| q.sequence.iter().map(token_name))
        .collect();
    tokens.sort();
    tokens.dedup();
    tokens
}

pub fn build_params(program: &Program, models: &ModelConfig, features: &FeatureTable, tokens: &[String]) -> Result<ParamStore, Failure> {
    let registry = ModelRegistry::build(program, models, features, tokens).map_err(|e| Failure::usage(e.into()))?;
    Ok(ParamStore::new(program, registry))
}

pub fn load_checkpoint(params: &mut ParamStore, path: &Path) -> Result<(), Failure> {
    params
        .load_checkpoint(&read(path)?)
        .map_err(|e| Failure::usage(anyhow::anyhow!("{}: {e}", path.display())))
}

impl Run {
    /// `seed` overrides the manifest's seed, which overrides the
    /// configuration's.
    pub fn load(path: &Path, seed: Option<u64>) -> Result<Run, Failure> {
        let manifest: RunManifest = serde_json::from_str(&read(path)?)
            .with_context(|| format!("manifest {}", path.display()))
            .map_err(Failure::usage)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let at = |p: &Path| base.join(p);
        let program = load_program(&at(&manifest.grammar), manifest.lenient)?;
        let features = load_features(manifest.features.as_deref().map(at).as_deref())?;
        let mut models = match &manifest.models {
            ModelsField::Path(p) => load_models(&at(p))?,
            ModelsField::Inline(m) => m.clone(),
        };
        let train = manifest.train.as_deref().map(|p| load_dataset(&at(p))).transpose()?.unwrap_or_default();
        let eval = manifest.eval.as_deref().map(|p| load_dataset(&at(p))).transpose()?.unwrap_or_default();
        let mut config = manifest.config.clone();
        if let Some(s) = seed.or(manifest.seed) {
            config.seed = s;
            models.seed = Some(s);
        } else if models.seed.is_none() {
            models.seed = Some(config.seed);
        }
        config.validate().map_err(|e| Failure::usage(e.into()))?;
        Ok(Run {
            program,
            features,
            models,
            train,
            eval,
            config,
            output: at(&manifest.output),
        })
    }

    pub fn vocabulary(&self) -> Vec<String> {
        vocabulary([self.train.as_slice(), self.eval.as_slice()])
    }

    pub fn params(&self) -> Result<ParamStore, Failure> {
        build_params(&self.program, &self.models, &self.features, &self.vocabulary())
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.output.join("checkpoint.txt")
    }

    pub fn history_path(&self) -> PathBuf {
        self.output.join("history.csv")
    }
}

//! Declarative run configuration (TOML).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{load_bio_file, split_holdout, DatasetSplit};
use crate::embeddings::{load_word_vectors, EmbeddingTable};
use crate::error::{Error, Result};
use crate::network::{Model, ModelConfig};
use crate::rng::DetRng;
use crate::tokenizer::TokenizerConfig;
use crate::training::grid::GridSpec;
use crate::training::{OptimizerConfig, TrainConfig};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub train: Option<PathBuf>,
    pub validation: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Share of the training file held out for validation when no
    /// validation file is given.
    pub holdout_fraction: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingConfig {
    /// Text-format vector file. Absent means random initialization.
    pub path: Option<PathBuf>,
    /// Dimension of randomly initialized vectors.
    pub dim: usize,
    /// Fall back to random vectors when `path` cannot be read.
    pub random_fallback: bool,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            path: None,
            dim: 50,
            random_fallback: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub embeddings: EmbeddingConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub optimizer: OptimizerConfig,
    pub tokenizer: TokenizerConfig,
    pub grid: Option<GridSpec>,
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses a config file; relative data paths are taken relative to it.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut cfg.data.train);
        resolve(base, &mut cfg.data.validation);
        resolve(base, &mut cfg.data.test);
        resolve(base, &mut cfg.embeddings.path);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.optimizer.validate()?;
        self.tokenizer.validate()?;
        if self.embeddings.dim == 0 {
            return Err(Error::Config("embeddings.dim must be positive".into()));
        }
        if let Some(f) = self.data.holdout_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Config(format!("data.holdout_fraction must be in (0, 1), got {f}")));
            }
        }
        if let Some(g) = &self.grid {
            g.validate()?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load_split(&self) -> Result<DatasetSplit> {
        let train_path = self
            .data
            .train
            .as_ref()
            .ok_or_else(|| Error::Config("data.train is required".into()))?;
        let train = load_bio_file(train_path)?;
        let (train, validation) = match &self.data.validation {
            Some(p) => (train, load_bio_file(p)?),
            None => split_holdout(&train, self.data.holdout_fraction.unwrap_or(0.2), self.train.seed)?,
        };
        let test = match &self.data.test {
            Some(p) => load_bio_file(p)?,
            None => Vec::new(),
        };
        Ok(DatasetSplit { train, validation, test })
    }

    /// Word vectors for the model. File vectors are restricted to words that
    /// occur in the split; random vectors cover train+validation words.
    pub fn build_embeddings(&self, split: &DatasetSplit) -> Result<EmbeddingTable> {
        let all_tokens = || {
            split
                .train
                .iter()
                .chain(&split.validation)
                .chain(&split.test)
                .flat_map(|s| s.tokens.iter().map(|t| t.text.as_str()))
        };
        if let Some(path) = &self.embeddings.path {
            match load_word_vectors(path) {
                Ok(table) => return Ok(table.restrict(all_tokens())),
                Err(e @ Error::Io { .. }) if !self.embeddings.random_fallback => return Err(e),
                Err(Error::Io { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        let vocab: BTreeSet<String> = split
            .train
            .iter()
            .chain(&split.validation)
            .flat_map(|s| s.tokens.iter().map(|t| t.text.clone()))
            .collect();
        let vocab = if vocab.is_empty() {
            BTreeSet::from(["<pad>".to_string()])
        } else {
            vocab
        };
        let mut rng = DetRng::new(self.train.seed).split_named("embeddings");
        EmbeddingTable::random(&vocab, self.embeddings.dim, &mut rng)
    }

    pub fn build_model(&self, split: &DatasetSplit) -> Result<Model> {
        let table = self.build_embeddings(split)?;
        Model::new(self.model.clone(), &table, &DetRng::new(self.train.seed))
    }
}

use std::path::{Path, PathBuf};

use irsegrn::data::SynthConfig;
use irsegrn::model::ModelDims;
use irsegrn::refine::{RefineConfig, RefineMode};
use irsegrn::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Which part of a split corpus a command reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub ratios: (u32, u32, u32),
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { ratios: (8, 1, 1), seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub corpus: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub output_dir: PathBuf,
    /// Optional `token v1 .. vd` text file loaded into the embeddings.
    pub embeddings: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            corpus: "corpus.jsonl".into(),
            checkpoint_dir: "checkpoints".into(),
            output_dir: "out".into(),
            embeddings: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub split: SplitName,
    pub beam_width: usize,
    pub refine_mode: RefineMode,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            split: SplitName::Test,
            beam_width: 1,
            refine_mode: RefineMode::Full,
            seed: 11,
        }
    }
}

/// Everything a run needs, as one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dims: ModelDims,
    pub train: TrainConfig,
    pub refine: RefineConfig,
    pub synth: SynthConfig,
    pub split: SplitConfig,
    pub eval: EvalConfig,
    pub paths: PathsConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| format!("at `{}`: {}", e.path(), e.inner()))?;
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }

    pub fn validate(&self) -> irsegrn::Result<()> {
        self.dims.validate()?;
        self.train.validate()?;
        self.refine.validate()?;
        self.synth.validate()
    }

    /// `--seed` overrides every seed in the document.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.train.seed = s;
            self.synth.seed = s;
            self.split.seed = s;
            self.eval.seed = s;
        }
        self
    }
}

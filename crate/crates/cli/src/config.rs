//! Run configuration file. Every section is optional; command-line flags
//! override values found here, which override built-in defaults.

use std::path::{Path, PathBuf};

use lexcluster::brown::BrownConfig;
use lexcluster::synthetic::GeneratorConfig;
use lexcluster::{ExperimentGrid, KmeansConfig, SgnsConfig};
use serde::Deserialize;

use crate::CliError;

pub const CONFIG_ENV: &str = "LEXCLUSTER_CONFIG";

/// Offsets added to the global seed, one per randomized stage.
pub mod offset {
    pub const SPLIT: u64 = 1;
    pub const EMBED: u64 = 2;
    pub const KMEANS: u64 = 3;
    pub const TRAIN: u64 = 4;
    pub const EXPERIMENT: u64 = 5;
    pub const SYNTHETIC: u64 = 6;
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerSection {
    pub stopwords_file: Option<PathBuf>,
    pub no_stopwords: Option<bool>,
    pub min_len: Option<usize>,
    pub max_len: Option<usize>,
    pub keep_urls: Option<bool>,
    pub keep_mentions: Option<bool>,
    pub keep_case: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub min_count: Option<u64>,
    pub train_fraction: Option<f64>,
    pub tokenizer: TokenizerSection,
    pub brown: Option<BrownConfig>,
    pub sgns: Option<SgnsConfig>,
    pub kmeans: Option<KmeansConfig>,
    pub lambda_grid: Option<Vec<f64>>,
    pub cv_folds: Option<usize>,
    pub experiment: Option<ExperimentGrid>,
    pub generator: Option<GeneratorConfig>,
    /// Directory of the config file; relative paths inside resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    /// Loads `path`, or the file named by the environment variable, or
    /// returns an empty configuration.
    ///
    /// A file that is a bare experiment grid is accepted as the
    /// `experiment` section.
    pub fn load(path: Option<&Path>) -> Result<RunConfig, CliError> {
        let env = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        let Some(path) = path.map(Path::to_path_buf).or(env) else {
            return Ok(RunConfig {
                base_dir: PathBuf::from("."),
                ..Default::default()
            });
        };
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Data(format!("cannot read config {}: {e}", path.display())))?;
        let mut config = match serde_json::from_str::<RunConfig>(&text) {
            Ok(c) => c,
            Err(first) => match serde_json::from_str::<ExperimentGrid>(&text) {
                Ok(grid) => RunConfig {
                    experiment: Some(grid),
                    ..Default::default()
                },
                Err(_) => {
                    return Err(CliError::Data(format!(
                        "config {}: {first}",
                        path.display()
                    )))
                }
            },
        };
        config.base_dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(config)
    }
}

//! Configuration resolution: flags beat file beats environment beats
//! defaults. The file is flat TOML; the environment supplies the completion
//! endpoint URL and token (ORACLE_LLM_URL, ORACLE_LLM_TOKEN).

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::AppError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub output_dir: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub roster: Option<PathBuf>,
    pub tournament: Option<PathBuf>,
    pub ig_steps: Option<usize>,
    pub strength_window: Option<usize>,
    #[serde(default)]
    pub model: ModelOverrides,
    #[serde(default)]
    pub llm: LlmFileConfig,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelOverrides {
    pub embedding_dim: Option<usize>,
    pub hidden_sizes: Option<Vec<usize>>,
    pub seed: Option<u64>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub split_ratio: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmFileConfig {
    pub url: Option<String>,
    pub token: Option<String>,
    pub model: Option<String>,
    pub max_tokens: Option<u32>,
    pub temperature: Option<f64>,
    pub timeout_secs: Option<u64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, AppError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| AppError::Usage(format!("config {}: {e}", path.display())))
    }
}

/// Fully resolved settings used by the commands. Flag values are applied on
/// top by each command.
#[derive(Debug, Clone)]
pub struct AppConfig {
    pub output_dir: PathBuf,
    pub data: Option<PathBuf>,
    pub roster: Option<PathBuf>,
    pub tournament: Option<PathBuf>,
    pub ig_steps: usize,
    pub strength_window: usize,
    pub model: ModelOverrides,
    pub llm_url: Option<String>,
    pub llm_token: Option<String>,
    pub llm_model: String,
    pub llm_max_tokens: u32,
    pub llm_temperature: f64,
    pub llm_timeout_secs: u64,
}

impl AppConfig {
    pub fn resolve(file: FileConfig) -> Self {
        let env_url = std::env::var("ORACLE_LLM_URL").ok().filter(|s| !s.is_empty());
        let env_token = std::env::var("ORACLE_LLM_TOKEN").ok().filter(|s| !s.is_empty());
        AppConfig {
            output_dir: file.output_dir.unwrap_or_else(|| PathBuf::from("out")),
            data: file.data,
            roster: file.roster,
            tournament: file.tournament,
            ig_steps: file.ig_steps.unwrap_or(oracle_core::DEFAULT_IG_STEPS),
            strength_window: file.strength_window.unwrap_or(10),
            model: file.model,
            llm_url: file.llm.url.or(env_url),
            llm_token: file.llm.token.or(env_token),
            llm_model: file.llm.model.unwrap_or_else(|| "mistral-7b-instruct".into()),
            llm_max_tokens: file.llm.max_tokens.unwrap_or(1024),
            llm_temperature: file.llm.temperature.unwrap_or(0.7),
            llm_timeout_secs: file.llm.timeout_secs.unwrap_or(60),
        }
    }
}

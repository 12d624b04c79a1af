use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use simplicity_core::genai::{Backoff, GenerationConfig, DEFAULT_API_KEY_VAR, DEFAULT_ENDPOINT, DEFAULT_WORD_LIMIT};
use simplicity_core::lexicon::{CommonWordList, Lexicon};
use simplicity_core::stats::bootstrap::DEFAULT_REPLICATES;
use simplicity_core::textmetrics::{AnalyticCalibration, Scorer};

use crate::error::CliError;

/// Settings read from `--config` and then overridden by flags. The resolved
/// value is embedded in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub lexicon: Option<PathBuf>,
    pub common_words: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub seed: Option<u64>,
    pub replicates: usize,
    pub jobs: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub calibration: AnalyticCalibration,
    pub generation: GenerationSettings,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            lexicon: None,
            common_words: None,
            stopwords: None,
            seed: None,
            replicates: DEFAULT_REPLICATES,
            jobs: None,
            output_dir: None,
            calibration: AnalyticCalibration::default(),
            generation: GenerationSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationSettings {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_retries: usize,
    pub word_limit: usize,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub backoff: Backoff,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        let g = GenerationConfig::default();
        GenerationSettings {
            endpoint: DEFAULT_ENDPOINT.into(),
            model: g.model,
            temperature: g.temperature,
            max_retries: g.max_retries,
            word_limit: DEFAULT_WORD_LIMIT,
            api_key_env: DEFAULT_API_KEY_VAR.into(),
            timeout_secs: 120,
            backoff: g.backoff,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| {
            CliError::Usage("this command is randomized; pass --seed or set `seed` in the config file".into())
        })
    }

    pub fn scorer(&self) -> Result<Scorer, CliError> {
        let lexicon = match &self.lexicon {
            Some(p) => Lexicon::load(p)?,
            None => Lexicon::builtin(),
        };
        let common = match &self.common_words {
            Some(p) => CommonWordList::load(p)?,
            None => CommonWordList::builtin(),
        };
        Ok(Scorer::new(lexicon, common, self.calibration)?)
    }

    pub fn generation(&self) -> GenerationConfig {
        let g = &self.generation;
        GenerationConfig {
            model: g.model.clone(),
            temperature: g.temperature,
            max_retries: g.max_retries,
            word_limit: g.word_limit,
            backoff: g.backoff.clone(),
            jobs: self.jobs.unwrap_or(4),
        }
    }

    /// Resolves a relative output path against `output_dir`.
    pub fn output(&self, path: &Path) -> PathBuf {
        match &self.output_dir {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path.to_path_buf(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let c: Config = toml::from_str("seed = 7\n[generation]\nmodel = \"m\"\n").unwrap();
        assert_eq!(c.seed, Some(7));
        assert_eq!(c.replicates, DEFAULT_REPLICATES);
        assert_eq!(c.generation.model, "m");
        assert_eq!(c.generation.word_limit, 120);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<Config>("sed = 7\n").is_err());
    }

    #[test]
    fn relative_outputs_land_in_output_dir() {
        let c = Config {
            output_dir: Some("out".into()),
            ..Config::default()
        };
        assert_eq!(c.output(Path::new("a.csv")), PathBuf::from("out/a.csv"));
        assert_eq!(c.output(Path::new("/tmp/a.csv")), PathBuf::from("/tmp/a.csv"));
    }
}

//! Run configuration: one TOML file drives backend selection, round
//! schedule parameters, and search settings.
//!
//! Credentials never live in config files. The backend section may name an
//! environment variable (`api_key_env_var`) and the key is read from the
//! process environment at backend construction time; unknown fields, which
//! would include a literal key, are rejected at parse time.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backend::BackendConfig;
use crate::pipeline::PipelineConfig;
use crate::search::SearchConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub backend: BackendConfig,
    pub pipeline: PipelineConfig,
    pub search: SearchConfig,
    /// Directory for round outputs, datasets, and the snapshot registry.
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            backend: BackendConfig::default(),
            pipeline: PipelineConfig::default(),
            search: SearchConfig::default(),
            output_dir: PathBuf::from("runs/default"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(var) = &self.backend.api_key_env_var {
            // The field must be an environment variable *name*. Anything
            // that looks like key material itself is refused outright.
            let name_like = !var.is_empty()
                && var.len() <= 64
                && var
                    .chars()
                    .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_');
            if !name_like {
                return Err(Error::Config(format!(
                    "api_key_env_var must name an environment variable \
                     (uppercase, digits, underscores), got `{var}`"
                )));
            }
        }
        if self.pipeline.problems_per_round == 0 {
            return Err(Error::Config("problems_per_round must be positive".into()));
        }
        if self.pipeline.difficulty_lo > self.pipeline.difficulty_hi {
            return Err(Error::Config("difficulty_lo must not exceed difficulty_hi".into()));
        }
        if self.search.self_consistency_samples == 0 {
            return Err(Error::Config("self_consistency_samples must be positive".into()));
        }
        Ok(())
    }

    pub fn registry_dir(&self) -> PathBuf {
        self.output_dir.join("registry")
    }

    pub fn rounds_dir(&self) -> PathBuf {
        self.output_dir.join("rounds")
    }

    /// Write the fully resolved configuration next to the run outputs so a
    /// run is reproducible from its artifacts alone.
    pub fn write_resolved(&self) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.output_dir)?;
        let path = self.output_dir.join("config.resolved.toml");
        let text = toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(&path, text)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back.pipeline, cfg.pipeline);
        assert_eq!(back.search, cfg.search);
        assert_eq!(back.output_dir, cfg.output_dir);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg: RunConfig = toml::from_str(
            "output_dir = \"out\"\n[pipeline]\nseed = 5\n",
        )
        .unwrap();
        assert_eq!(cfg.output_dir, PathBuf::from("out"));
        assert_eq!(cfg.pipeline.seed, 5);
        assert_eq!(cfg.pipeline.problems_per_round, PipelineConfig::default().problems_per_round);
    }

    #[test]
    fn literal_key_material_is_rejected() {
        // A secret pasted where a variable name belongs fails validation.
        let cfg: RunConfig = toml::from_str(
            "[backend]\nkind = \"http\"\napi_key_env_var = \"sk-abc123secret\"\n",
        )
        .unwrap_or_else(|_| {
            let mut c = RunConfig::default();
            c.backend.api_key_env_var = Some("sk-abc123secret".into());
            c
        });
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        // Unknown fields such as a literal `api_key` are a parse error,
        // both at the top level and inside the backend section.
        assert!(toml::from_str::<RunConfig>("api_key = \"sk-xyz\"\n").is_err());
        assert!(toml::from_str::<RunConfig>("[backend]\napi_key = \"sk-xyz\"\n").is_err());
    }

    #[test]
    fn env_var_name_is_accepted() {
        let mut cfg = RunConfig::default();
        cfg.backend.api_key_env_var = Some("OPENAI_API_KEY".into());
        cfg.validate().unwrap();
    }

    #[test]
    fn load_reports_malformed_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        std::fs::write(&path, "not = [valid").unwrap();
        assert!(matches!(RunConfig::load(&path), Err(Error::Config(_))));
    }

    #[test]
    fn resolved_config_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::default();
        cfg.output_dir = dir.path().join("run");
        let path = cfg.write_resolved().unwrap();
        let back = RunConfig::load(&path).unwrap();
        assert_eq!(back.pipeline, cfg.pipeline);
    }
}

// SPDX-License-Identifier: Apache-2.0

//! Bench configuration file.
//!
//! ```toml
//! engines = ["native", "ebpf-vm", "wasm"]
//! programs = ["dummy", "fibonacci"]   # empty or absent: whole corpus
//! iterations = 10
//! fuel_limit = 100000000              # optional
//! corpus_dir = "corpus"               # relative to this file
//! out_dir = "bench-out"               # relative to this file
//! formats = ["csv", "md", "json"]
//! ```
//!
//! `OFFLOAD_ITERATIONS` and `OFFLOAD_OUT_DIR` override the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EngineKind, HarnessError, ReportFormat};

pub const ENV_ITERATIONS: &str = "OFFLOAD_ITERATIONS";
pub const ENV_OUT_DIR: &str = "OFFLOAD_OUT_DIR";

fn default_engines() -> Vec<EngineKind> {
    EngineKind::ALL.to_vec()
}

fn default_iterations() -> usize {
    10
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("bench-out")
}

fn default_formats() -> Vec<ReportFormat> {
    ReportFormat::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(default = "default_engines")]
    pub engines: Vec<EngineKind>,
    #[serde(default)]
    pub programs: Vec<String>,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub fuel_limit: Option<u64>,
    #[serde(default)]
    pub corpus_dir: Option<PathBuf>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<ReportFormat>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            engines: default_engines(),
            programs: Vec::new(),
            iterations: default_iterations(),
            fuel_limit: None,
            corpus_dir: None,
            out_dir: default_out_dir(),
            formats: default_formats(),
        }
    }
}

impl BenchConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let config: BenchConfig =
            toml::from_str(text).map_err(|err| HarnessError::Config(err.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file; relative paths in it are taken from its directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|err| HarnessError::Config(format!("{}: {err}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(dir) = &config.corpus_dir {
            config.corpus_dir = Some(base.join(dir));
        }
        config.out_dir = base.join(&config.out_dir);
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.iterations == 0 {
            return Err(HarnessError::InvalidIterations);
        }
        if self.engines.is_empty() {
            return Err(HarnessError::Config("no engines selected".into()));
        }
        Ok(())
    }
}

/// Applies the environment overrides through `lookup` (normally
/// `std::env::var`).
pub fn apply_overrides(
    config: &mut BenchConfig,
    lookup: impl Fn(&str) -> Option<String>,
) -> Result<(), HarnessError> {
    if let Some(text) = lookup(ENV_ITERATIONS) {
        config.iterations = text
            .trim()
            .parse()
            .map_err(|_| HarnessError::Config(format!("{ENV_ITERATIONS}: not a count: `{text}`")))?;
    }
    if let Some(dir) = lookup(ENV_OUT_DIR) {
        config.out_dir = PathBuf::from(dir);
    }
    config.validate()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let config = BenchConfig::from_toml("").unwrap();
        assert_eq!(config, BenchConfig::default());
        assert_eq!(config.iterations, 10);
        assert_eq!(config.engines.len(), 3);
    }

    #[test]
    fn full_file() {
        let config = BenchConfig::from_toml(
            r#"
            engines = ["native", "ebpf-vm"]
            programs = ["dummy"]
            iterations = 3
            fuel_limit = 1000
            corpus_dir = "c"
            out_dir = "o"
            formats = ["md"]
            "#,
        )
        .unwrap();
        assert_eq!(config.engines, vec![EngineKind::Native, EngineKind::Ebpf]);
        assert_eq!(config.fuel_limit, Some(1000));
        assert_eq!(config.formats, vec![ReportFormat::Markdown]);
        assert!(BenchConfig::from_toml("iterations = 0").is_err());
        assert!(BenchConfig::from_toml("engines = [\"jvm\"]").is_err());
        assert!(BenchConfig::from_toml("colour = 1").is_err());
    }

    #[test]
    fn relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bench.toml");
        std::fs::write(&path, "corpus_dir = \"corpus\"\n").unwrap();
        let config = BenchConfig::load(&path).unwrap();
        assert_eq!(config.corpus_dir, Some(dir.path().join("corpus")));
        assert_eq!(config.out_dir, dir.path().join("bench-out"));
    }

    #[test]
    fn environment_wins() {
        let mut config = BenchConfig::default();
        apply_overrides(&mut config, |key| match key {
            ENV_ITERATIONS => Some("4".into()),
            ENV_OUT_DIR => Some("/tmp/x".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(config.iterations, 4);
        assert_eq!(config.out_dir, PathBuf::from("/tmp/x"));
        let bad = apply_overrides(&mut config, |key| (key == ENV_ITERATIONS).then(|| "many".into()));
        assert!(matches!(bad, Err(HarnessError::Config(_))));
        let zero = apply_overrides(&mut config, |key| (key == ENV_ITERATIONS).then(|| "0".into()));
        assert_eq!(zero, Err(HarnessError::InvalidIterations));
    }
}

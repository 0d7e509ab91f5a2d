//! Layered configuration: compiled-in defaults, overridden by an optional
//! TOML file, overridden by command-line flags. Every flag has a file
//! equivalent under `[run]`, so a config file can stand in for any
//! invocation shape.

use crate::error::CliError;
use formx_core::pipeline::PipelineConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// File equivalents of the command-line flags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Attach alignment and scaling reports to extraction output.
    pub diagnostics: bool,
    /// Seed for dataset generation.
    pub seed: u64,
    /// Worker threads for batch commands; 0 means one per CPU.
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            diagnostics: false,
            seed: 1,
            jobs: 0,
        }
    }
}

/// Everything the binary can be told: the pipeline thresholds plus the
/// run-level switches.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FileConfig {
    #[serde(flatten)]
    pub pipeline: PipelineConfig,
    pub run: RunConfig,
}

/// Flag values as they arrived from the parser; `None` / `false` means the
/// flag was absent and the file (or default) value stands.
#[derive(Debug, Clone, Copy, Default)]
pub struct FlagOverrides {
    pub diagnostics: bool,
    pub no_align: bool,
    pub no_scale: bool,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
}

/// Loads the effective configuration: defaults, then the file at `path`
/// (when given), then the flags. The merged pipeline section is validated
/// before use.
pub fn load(path: Option<&Path>, flags: &FlagOverrides) -> Result<FileConfig, CliError> {
    let mut cfg = match path {
        None => FileConfig::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", p.display())))?;
            toml::from_str(&text)
                .map_err(|e| CliError::usage(format!("bad config {}: {e}", p.display())))?
        }
    };
    if flags.diagnostics {
        cfg.run.diagnostics = true;
    }
    if flags.no_align {
        cfg.pipeline.stages.align = false;
    }
    if flags.no_scale {
        cfg.pipeline.stages.scale = false;
    }
    if let Some(seed) = flags.seed {
        cfg.run.seed = seed;
    }
    if let Some(jobs) = flags.jobs {
        cfg.run.jobs = jobs;
    }
    cfg.pipeline
        .validate()
        .map_err(|e| CliError::usage(format!("invalid configuration: {e}")))?;
    Ok(cfg)
}

/// The effective configuration rendered as TOML, suitable both for
/// documentation and as a starting config file.
pub fn dump(cfg: &FileConfig) -> String {
    toml::to_string_pretty(cfg).expect("config serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let d = FileConfig::default();
        let text = dump(&d);
        let back: FileConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("formx.toml");
        std::fs::write(&path, "[run]\nseed = 9\njobs = 3\n[stages]\nalign = true\n").unwrap();
        let flags = FlagOverrides {
            no_align: true,
            seed: Some(4),
            ..Default::default()
        };
        let cfg = load(Some(&path), &flags).unwrap();
        assert!(!cfg.pipeline.stages.align, "flag must beat the file");
        assert_eq!(cfg.run.seed, 4, "flag must beat the file");
        assert_eq!(cfg.run.jobs, 3, "file value stands when no flag given");
    }

    #[test]
    fn invalid_pipeline_values_are_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("formx.toml");
        std::fs::write(&path, "[kie]\nreject_cost = -5.0\n").unwrap();
        let err = load(Some(&path), &FlagOverrides::default()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}

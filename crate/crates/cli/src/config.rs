//! Run configuration: one TOML file per experiment.
//!
//! ```toml
//! output_dir = "out"
//! seeds = [0, 1, 2]
//! prior_source = "fit"          # or a path to a prior JSON file
//!
//! [generator]                   # every field optional
//! seed = 7
//!
//! [data]
//! n_shows = 200
//! traces_per_show = 2000
//!
//! [episode]
//! n_arms = 50
//! batch_size = 30
//! rounds = 180
//! changing_set = false
//! ```
//!
//! Relative paths are resolved against the directory holding the config file.

use std::fmt;
use std::path::{Path, PathBuf};

use impatient::synthetic::GeneratorConfig;
use serde::Deserialize;

/// A problem with the configuration or the command line, as opposed to a
/// failure while running. Reported with exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub n_shows: usize,
    pub traces_per_show: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            n_shows: 200,
            traces_per_show: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeSection {
    pub n_arms: usize,
    pub batch_size: usize,
    pub rounds: u32,
    #[serde(default)]
    pub changing_set: bool,
}

impl Default for EpisodeSection {
    fn default() -> Self {
        Self {
            n_arms: 50,
            batch_size: 30,
            rounds: 180,
            changing_set: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PriorSource {
    Fit,
    File(PathBuf),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    output_dir: PathBuf,
    seeds: Vec<u64>,
    #[serde(default = "fit")]
    prior_source: String,
    #[serde(default)]
    generator: GeneratorConfig,
    #[serde(default)]
    data: DataConfig,
    #[serde(default)]
    episode: EpisodeSection,
}

fn fit() -> String {
    "fit".into()
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub prior_source: PriorSource,
    pub generator: GeneratorConfig,
    pub data: DataConfig,
    pub episode: EpisodeSection,
}

impl RunConfig {
    pub fn from_toml(text: &str, base: &Path) -> anyhow::Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| config_error(format!("invalid config: {}", e.message())))?;
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        if raw.seeds.is_empty() {
            return Err(config_error("`seeds` must list at least one seed"));
        }
        raw.generator
            .validate()
            .map_err(|e| config_error(format!("`generator`: {e}")))?;
        if raw.data.n_shows < 2 {
            return Err(config_error("`data.n_shows` must be at least 2"));
        }
        if raw.data.traces_per_show == 0 {
            return Err(config_error("`data.traces_per_show` must be positive"));
        }
        let e = &raw.episode;
        if e.n_arms < 2 || e.batch_size == 0 || e.rounds == 0 {
            return Err(config_error(
                "`episode` needs n_arms >= 2, batch_size >= 1 and rounds >= 1",
            ));
        }
        let prior_source = match raw.prior_source.as_str() {
            "fit" => PriorSource::Fit,
            path => PriorSource::File(resolve(Path::new(path))),
        };
        Ok(Self {
            output_dir: resolve(&raw.output_dir),
            seeds: raw.seeds,
            prior_source,
            generator: raw.generator,
            data: raw.data,
            episode: raw.episode,
        })
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base).map_err(|e| config_error(format!("{}: {e}", path.display())))
    }
}

/// Parses a comma-separated seed list such as `0,1,2`.
pub fn parse_seeds(list: &str) -> anyhow::Result<Vec<u64>> {
    let seeds = list
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| config_error(format!("`--seeds`: `{s}` is not a seed")))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    if seeds.is_empty() {
        return Err(config_error("`--seeds` is empty"));
    }
    Ok(seeds)
}

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use fracpoisson::experiments::StudyConfig;
use serde::{Deserialize, Serialize};

/// Environment variable that replaces `study.seed` when set.
pub const SEED_ENV: &str = "FRACPOISSON_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// One run: where to write, how many workers, and the study itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Rayon worker threads; the library default when absent.
    #[serde(default)]
    pub workers: Option<usize>,
    /// Format of tables and fields. Summaries are always JSON.
    #[serde(default)]
    pub format: Format,
    pub study: StudyConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSource {
    Config,
    Environment,
}

#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub text: String,
    pub path: PathBuf,
    pub seed_source: SeedSource,
}

/// Parses and validates a config file. Semantic errors point at the line of
/// the offending key when it can be found.
pub fn load(path: &Path) -> Result<Loaded> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut config: RunConfig = toml::from_str(&text).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    let mut seed_source = SeedSource::Config;
    if let Ok(raw) = std::env::var(SEED_ENV) {
        config.study.seed = raw.trim().parse().map_err(|_| anyhow!("{SEED_ENV}={raw:?} is not an unsigned integer"))?;
        seed_source = SeedSource::Environment;
    }
    if config.workers == Some(0) {
        return Err(anyhow!("{}: workers must be >= 1", path.display()));
    }
    if let Err(e) = config.study.validate() {
        let context =
            key_line(&text, &e.to_string()).map(|(no, line)| format!(" (line {no}: {line})")).unwrap_or_default();
        return Err(anyhow::Error::new(e).context(format!("{}: invalid configuration{context}", path.display())));
    }
    Ok(Loaded { config, text, path: path.to_path_buf(), seed_source })
}

/// First `key = value` line whose key is named in `message`, preferring the
/// longest key.
fn key_line<'a>(text: &'a str, message: &str) -> Option<(usize, &'a str)> {
    let words: Vec<&str> = message.split(|c: char| !(c.is_alphanumeric() || c == '_')).collect();
    text.lines()
        .enumerate()
        .filter_map(|(i, line)| {
            let key = line.split('=').next()?.trim();
            (!key.is_empty() && !key.starts_with('#') && line.contains('=') && words.contains(&key)).then_some((
                i + 1,
                line.trim(),
                key.len(),
            ))
        })
        .max_by_key(|&(i, _, len)| (len, std::cmp::Reverse(i)))
        .map(|(i, line, _)| (i, line))
}

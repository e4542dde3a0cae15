//! Pipeline configuration and its flat `key = value` file format.
//!
//! ```text
//! # feedpipe.conf
//! timeout_secs = 30
//! user_agent = feedpipe/0.1 (+https://example.org/about-our-crawler)
//! max_concurrency = 4
//! retry_wait_first_secs = 5
//! retry_wait_second_secs = 15
//! seed = 0
//! overlong_subtitle_chars = 300
//! overlong_title_chars = 200
//! out_dir = out
//! ```

use std::path::PathBuf;
use std::time::Duration;

use thiserror::Error;

use crate::analytics::QualityThresholds;
use crate::fetcher::FetchOptions;

pub const DEFAULT_USER_AGENT: &str = concat!("feedpipe/", env!("CARGO_PKG_VERSION"), " (blog feed archiver)");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("{key}: invalid value {value:?}")]
    InvalidValue { key: String, value: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub timeout: Duration,
    pub user_agent: String,
    pub max_concurrency: usize,
    pub retry_waits: [Duration; 2],
    pub seed: u64,
    pub thresholds: QualityThresholds,
    pub out_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(30),
            user_agent: DEFAULT_USER_AGENT.to_string(),
            max_concurrency: 4,
            retry_waits: [Duration::from_secs(5), Duration::from_secs(15)],
            seed: 0,
            thresholds: QualityThresholds::default(),
            out_dir: PathBuf::from("out"),
        }
    }
}

fn seconds(key: &str, value: &str) -> Result<Duration, ConfigError> {
    value
        .parse::<f64>()
        .ok()
        .filter(|s| s.is_finite() && *s > 0.0)
        .map(Duration::from_secs_f64)
        .ok_or_else(|| ConfigError::InvalidValue {
            key: key.to_string(),
            value: value.to_string(),
        })
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
    })
}

impl PipelineConfig {
    /// Applies one setting. Keys are the ones shown in the module docs.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "timeout_secs" => self.timeout = seconds(key, value)?,
            "user_agent" => self.user_agent = value.to_string(),
            "max_concurrency" => self.max_concurrency = number(key, value)?,
            "retry_wait_first_secs" => self.retry_waits[0] = seconds(key, value)?,
            "retry_wait_second_secs" => self.retry_waits[1] = seconds(key, value)?,
            "seed" => self.seed = number(key, value)?,
            "overlong_subtitle_chars" => self.thresholds.subtitle_chars = number(key, value)?,
            "overlong_title_chars" => self.thresholds.title_chars = number(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            _ => {
                return Err(ConfigError::UnknownKey {
                    line: 0,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    /// Reads a config file's text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: line_no })?;
            let key = key.trim();
            config.set(key, value.trim()).map_err(|e| match e {
                ConfigError::UnknownKey { key, .. } => ConfigError::UnknownKey { line: line_no, key },
                other => other,
            })?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_concurrency == 0 {
            return Err(ConfigError::Invalid("max_concurrency must be at least 1".into()));
        }
        if self.timeout.is_zero() || self.retry_waits.iter().any(Duration::is_zero) {
            return Err(ConfigError::Invalid("durations must be positive".into()));
        }
        Ok(())
    }

    pub fn fetch_options(&self) -> FetchOptions {
        FetchOptions {
            retry_waits: self.retry_waits.to_vec(),
            max_concurrency: self.max_concurrency,
            seed: self.seed,
            ..FetchOptions::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_file() {
        let cfg = PipelineConfig::parse(
            "# comment\n\ntimeout_secs = 10\nuser_agent = a b/c\nseed=42\nretry_wait_first_secs = 0.5\n",
        )
        .unwrap();
        assert_eq!(cfg.timeout, Duration::from_secs(10));
        assert_eq!(cfg.user_agent, "a b/c");
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.retry_waits, [Duration::from_millis(500), Duration::from_secs(15)]);
        assert_eq!(cfg.max_concurrency, 4);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(PipelineConfig::parse("nonsense"), Err(ConfigError::Syntax { line: 1 }));
        assert_eq!(
            PipelineConfig::parse("\ncolour = blue"),
            Err(ConfigError::UnknownKey {
                line: 2,
                key: "colour".into()
            })
        );
        assert!(PipelineConfig::parse("timeout_secs = 0").is_err());
        assert!(PipelineConfig::parse("timeout_secs = -1").is_err());
        assert!(PipelineConfig::parse("max_concurrency = 0").is_err());
        assert!(PipelineConfig::parse("seed = x").is_err());
    }
}

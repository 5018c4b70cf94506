//! Optional `key = value` configuration file. Flags given on the command
//! line take precedence over anything set here.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: expected `key = value`")]
    Syntax { path: String, line: usize },
    #[error("{path}:{line}: unknown key `{key}`")]
    UnknownKey { path: String, line: usize, key: String },
    #[error("{path}:{line}: invalid value `{value}` for `{key}`")]
    BadValue { path: String, line: usize, key: String, value: String },
}

pub const KEYS: &[&str] = &["domain", "witness", "project", "verify", "sample", "seed", "max-steps", "json"];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Config {
    pub domain: Option<String>,
    pub witness: Option<bool>,
    pub project: Option<bool>,
    pub verify: Option<bool>,
    pub sample: Option<usize>,
    pub seed: Option<u64>,
    pub max_steps: Option<usize>,
    pub json: Option<bool>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, path: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((k, v)) = content.split_once('=') else {
                return Err(ConfigError::Syntax { path: path.to_string(), line });
            };
            let key = k.trim().replace('_', "-");
            let value = v.trim().trim_matches('"').to_string();
            if !KEYS.contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey { path: path.to_string(), line, key });
            }
            entries.insert(key, (line, value));
        }

        let mut cfg = Config::default();
        for (key, (line, value)) in entries {
            let bad = || ConfigError::BadValue { path: path.to_string(), line, key: key.clone(), value: value.clone() };
            let flag = || value.parse::<bool>().map_err(|_| bad());
            match key.as_str() {
                "domain" => cfg.domain = Some(value.clone()),
                "witness" => cfg.witness = Some(flag()?),
                "project" => cfg.project = Some(flag()?),
                "verify" => cfg.verify = Some(flag()?),
                "json" => cfg.json = Some(flag()?),
                "sample" => cfg.sample = Some(value.parse().map_err(|_| bad())?),
                "seed" => cfg.seed = Some(value.parse().map_err(|_| bad())?),
                "max-steps" => cfg.max_steps = Some(value.parse().map_err(|_| bad())?),
                _ => unreachable!("keys are checked above"),
            }
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_and_comments() {
        let cfg = Config::parse("# defaults\ndomain = q+\nwitness = true\nmax_steps = 40 # cap\n", "c").unwrap();
        assert_eq!(cfg.domain.as_deref(), Some("q+"));
        assert_eq!(cfg.witness, Some(true));
        assert_eq!(cfg.max_steps, Some(40));
        assert_eq!(cfg.project, None);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(matches!(Config::parse("domain q", "c"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(Config::parse("colour = red", "c"), Err(ConfigError::UnknownKey { .. })));
        assert!(matches!(Config::parse("\nsample = many", "c"), Err(ConfigError::BadValue { line: 2, .. })));
    }
}

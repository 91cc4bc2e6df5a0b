use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use super::{read_file, EvioError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("config is not valid UTF-8")]
    NotUtf8,
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: invalid value `{value}` for `{key}`: {reason}")]
    BadValue { line: usize, key: String, value: String, reason: String },
    #[error("invalid `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

impl ConfigError {
    pub fn invalid(key: &str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid { key: key.to_string(), reason: reason.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    key: String,
    value: String,
    line: usize,
}

/// Ordered `key = value` lines. `#` starts a comment; blank lines are
/// ignored. Keys may repeat; single-value getters return the last one.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KeyValues {
    entries: Vec<Entry>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Syntax { line: i + 1, text: raw.to_string() });
            };
            let key = k.trim();
            if key.is_empty() {
                return Err(ConfigError::Syntax { line: i + 1, text: raw.to_string() });
            }
            entries.push(Entry { key: key.to_string(), value: v.trim().to_string(), line: i + 1 });
        }
        Ok(Self { entries })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, EvioError> {
        let path = path.as_ref();
        let bytes = read_file(path)?;
        let text = String::from_utf8(bytes)
            .map_err(|_| EvioError::Invalid { offset: 0, reason: ConfigError::NotUtf8.to_string() });
        let text = text.map_err(|e| e.in_file(path))?;
        Self::parse(&text).map_err(|e| EvioError::Invalid { offset: 0, reason: e.to_string() }.in_file(path))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().rev().find(|e| e.key == key).map(|e| e.value.as_str())
    }

    pub fn get_all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.entries.iter().filter(move |e| e.key == key).map(|e| e.value.as_str())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.get(key).is_some()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.key.as_str())
    }

    fn entry(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().rev().find(|e| e.key == key)
    }

    fn parse_entry<T: FromStr>(e: &Entry) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        e.value.parse::<T>().map_err(|err| ConfigError::BadValue {
            line: e.line,
            key: e.key.clone(),
            value: e.value.clone(),
            reason: err.to_string(),
        })
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let e = self.entry(key).ok_or_else(|| ConfigError::Missing(key.to_string()))?;
        Self::parse_entry(e)
    }

    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match self.entry(key) {
            Some(e) => Self::parse_entry(e),
            None => Ok(default),
        }
    }

    /// Rejects keys outside `known`.
    pub fn check_known(&self, known: &[&str]) -> Result<(), ConfigError> {
        match self.entries.iter().find(|e| !known.contains(&e.key.as_str())) {
            Some(e) => Err(ConfigError::UnknownKey { line: e.line, key: e.key.clone() }),
            None => Ok(()),
        }
    }
}

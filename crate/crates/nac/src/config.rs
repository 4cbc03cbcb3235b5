//! `key = value` config files. Keys are the long flag names; `#` starts a
//! comment. Flags given on the command line win over the file, and the file
//! wins over built-in defaults.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{NacError, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvConfig {
    file: String,
    entries: BTreeMap<String, (u64, String)>,
}

impl KvConfig {
    pub fn parse(file: &str, text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = (i + 1) as u64;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((k, v)) = content.split_once('=') else {
                return Err(NacError::parse(file, line, "expected 'key = value'"));
            };
            let key = k.trim().trim_start_matches("--").replace('_', "-");
            if key.is_empty() {
                return Err(NacError::parse(file, line, "empty key"));
            }
            if entries.insert(key.clone(), (line, v.trim().to_string())).is_some() {
                return Err(NacError::parse(file, line, format!("duplicate key '{key}'")));
            }
        }
        Ok(Self {
            file: file.to_string(),
            entries,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| NacError::io(path, e))?;
        Self::parse(&path.display().to_string(), &text)
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|e| NacError::parse(&self.file, *line, format!("{key}: {e}"))),
        }
    }

    /// Rejects keys the command does not know about.
    pub fn check_keys(&self, known: &[&str]) -> Result<()> {
        for (k, (line, _)) in &self.entries {
            if !known.contains(&k.as_str()) {
                return Err(NacError::parse(&self.file, *line, format!("unknown key '{k}'")));
            }
        }
        Ok(())
    }
}

/// Resolves one setting and records the winning value under `key`.
#[derive(Debug, Default)]
pub struct Resolver<'a> {
    file: Option<&'a KvConfig>,
    pub resolved: BTreeMap<String, String>,
}

impl<'a> Resolver<'a> {
    pub fn new(file: Option<&'a KvConfig>) -> Self {
        Self {
            file,
            resolved: BTreeMap::new(),
        }
    }

    pub fn pick<T>(&mut self, key: &str, cli: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let from_file = match self.file {
            Some(f) => f.get(key)?,
            None => None,
        };
        let v = cli.or(from_file).unwrap_or(default);
        self.resolved.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    /// Like [`pick`](Self::pick) for settings without a default.
    pub fn pick_opt<T>(&mut self, key: &str, cli: Option<T>) -> Result<Option<T>>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let from_file = match self.file {
            Some(f) => f.get(key)?,
            None => None,
        };
        let v = cli.or(from_file);
        if let Some(v) = &v {
            self.resolved.insert(key.to_string(), v.to_string());
        }
        Ok(v)
    }

    pub fn record(&mut self, key: &str, value: impl Display) {
        self.resolved.insert(key.to_string(), value.to_string());
    }
}

//! `key = value` configuration files. Lines starting with `#` are comments.
//! Relative paths in a config file are resolved against its directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{read_file, Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Config {
    entries: BTreeMap<String, String>,
    base_dir: Option<PathBuf>,
}

impl Config {
    pub fn parse(text: &str, file: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(file, i + 1, "expected `key = value`"))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::parse(file, i + 1, "empty key"));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::parse(file, i + 1, format!("key `{k}` given twice")));
            }
        }
        Ok(Self {
            entries,
            base_dir: None,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut c = Self::parse(&read_file(path)?, &path.display().to_string())?;
        c.base_dir = path.parent().map(Path::to_path_buf);
        Ok(c)
    }

    /// Applies `KEY=VALUE` overrides, replacing existing keys.
    pub fn with_overrides(mut self, sets: &[String]) -> Result<Self> {
        for s in sets {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("--set expects KEY=VALUE, got `{s}`")))?;
            self.entries.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(self)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Usage(format!("config key `{key}`: cannot parse `{v}`")))
            })
            .transpose()
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(|v| match &self.base_dir {
            Some(dir) if Path::new(v).is_relative() => dir.join(v),
            _ => PathBuf::from(v),
        })
    }

    /// Errors on keys outside `allowed`. Entries in `prefixes` allow any
    /// `prefix.suffix` key.
    pub fn check_keys(&self, allowed: &[&str], prefixes: &[&str]) -> Result<()> {
        for k in self.keys() {
            let ok = allowed.contains(&k)
                || k.split_once('.').is_some_and(|(p, _)| prefixes.contains(&p));
            if !ok {
                return Err(Error::Usage(format!("unknown config key `{k}`")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_override() {
        let c = Config::parse("# c\nk = 10\n\npredictors=NQC,Max\n", "c").unwrap();
        assert_eq!(c.get("k"), Some("10"));
        assert_eq!(c.parsed::<usize>("k").unwrap(), Some(10));
        let c = c.with_overrides(&["k=20".into()]).unwrap();
        assert_eq!(c.get("k"), Some("20"));
        assert!(Config::parse("k=1\nk=2", "c").is_err());
        assert!(Config::parse("novalue", "c").is_err());
        assert!(c.check_keys(&["k", "predictors"], &[]).is_ok());
        assert!(c.check_keys(&["k"], &[]).is_err());
    }
}

//! `key = value` text configuration: one pair per line, `#` starts a comment.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KvError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: key {key:?} set twice")]
    Duplicate { line: usize, key: String },
    #[error("key {key:?}: cannot parse {value:?}")]
    BadValue { key: String, value: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvMap {
    entries: BTreeMap<String, String>,
}

impl KvMap {
    pub fn parse(text: &str) -> Result<KvMap, KvError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(KvError::Syntax { line: i + 1 })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(KvError::Syntax { line: i + 1 });
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(KvError::Duplicate {
                    line: i + 1,
                    key: k.to_string(),
                });
            }
        }
        Ok(KvMap { entries })
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<V: FromStr>(&self, key: &str) -> Result<Option<V>, KvError> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| KvError::BadValue {
                key: key.to_string(),
                value: v.clone(),
            }),
        }
    }

    pub fn get_or<V: FromStr>(&self, key: &str, default: V) -> Result<V, KvError> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Fails on the first key not in `known`.
    pub fn check_keys(&self, known: &[&str]) -> Result<(), KvError> {
        match self.keys().find(|k| !known.contains(k)) {
            Some(k) => Err(KvError::UnknownKey(k.to_string())),
            None => Ok(()),
        }
    }

    /// Sorted `key = value` lines.
    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_pairs() {
        let m = KvMap::parse("# header\nseed = 3\n\nname = run  # trailing\n").unwrap();
        assert_eq!(m.get::<u64>("seed").unwrap(), Some(3));
        assert_eq!(m.get_str("name"), Some("run"));
        assert_eq!(KvMap::parse(&m.render()).unwrap(), m);
    }

    #[test]
    fn reports_errors() {
        assert_eq!(KvMap::parse("a = 1\nnope\n").unwrap_err(), KvError::Syntax { line: 2 });
        assert!(matches!(
            KvMap::parse("a=1\na=2").unwrap_err(),
            KvError::Duplicate { .. }
        ));
        let m = KvMap::parse("a = x").unwrap();
        assert!(m.get::<u32>("a").is_err());
    }
}

//! Flat `key = value` configuration files.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Parsed key/value pairs. Blank lines and `#` comments are skipped; later
/// duplicates are rejected.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvFile {
    entries: BTreeMap<String, String>,
}

impl KvFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", i + 1)));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {k}", i + 1)));
            }
        }
        Ok(KvFile { entries })
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get_raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Parses `key` if present.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("bad value for {key}: {v:?}"))),
        }
    }

    /// Overwrites `slot` when `key` is present.
    pub fn read_into<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<()> {
        if let Some(v) = self.get(key)? {
            *slot = v;
        }
        Ok(())
    }

    /// Fails on any key outside `known`.
    pub fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        for k in self.entries.keys() {
            if !known.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown key {k}")));
            }
        }
        Ok(())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Canonical text form: sorted `key=value` lines.
    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_overrides() {
        let mut kv = KvFile::parse("# c\nlr1 = 0.5\n\nvariant=full\n").unwrap();
        assert_eq!(kv.get::<f64>("lr1").unwrap(), Some(0.5));
        assert_eq!(kv.get_raw("variant"), Some("full"));
        kv.set("lr1", 0.25);
        let mut x = 0.0;
        kv.read_into("lr1", &mut x).unwrap();
        assert_eq!(x, 0.25);
        assert_eq!(kv.to_text(), "lr1=0.25\nvariant=full\n");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(KvFile::parse("novalue\n").is_err());
        assert!(KvFile::parse("a=1\na=2\n").is_err());
        let kv = KvFile::parse("a=x\n").unwrap();
        assert!(kv.get::<f64>("a").is_err());
        assert!(kv.reject_unknown(&["b"]).is_err());
        assert!(kv.reject_unknown(&["a"]).is_ok());
    }
}

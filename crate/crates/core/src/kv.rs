//! Flat `key = value` text format shared by parameter files and run configs.
//!
//! Blank lines and everything after a `#` are ignored. Keys keep the order in
//! which they first appear; a repeated key overwrites the earlier value.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvMap {
    entries: Vec<(String, String)>,
}

impl KvMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = KvMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Parse(format!("line {}: empty key", lineno + 1)));
            }
            map.insert(key, value.trim());
        }
        Ok(map)
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<String>) {
        let key = key.into();
        let value = value.into();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    /// Parses the value under `key` with `FromStr`, `None` when absent.
    pub fn get_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Parse(format!("invalid value for `{key}`: {v}"))),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let map = KvMap::parse("# header\n\nn = 3   # vertices\nalpha=0.3\n").unwrap();
        assert_eq!(map.get("n"), Some("3"));
        assert_eq!(map.get("alpha"), Some("0.3"));
        assert_eq!(map.keys().count(), 2);
    }

    #[test]
    fn missing_equals_is_an_error() {
        assert!(KvMap::parse("n 3").is_err());
        assert!(KvMap::parse(" = 3").is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut map = KvMap::new();
        map.insert("link", "mean");
        map.insert("pi_plus", "0.9");
        map.insert("link", "harmonic");
        let back = KvMap::parse(&map.to_text()).unwrap();
        assert_eq!(back, map);
        assert_eq!(back.get("link"), Some("harmonic"));
    }
}

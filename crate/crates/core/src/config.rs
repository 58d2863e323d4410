//! Line-oriented `key=value` text used for configs and checkpoint manifests.
//!
//! Blank lines and lines starting with `#` are ignored; keys are unique.

use std::collections::HashSet;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut out = KeyValues::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(format!("config line {}", i + 1), format!("expected key=value, got '{line}'")))?;
            let key = k.trim();
            if key.is_empty() {
                return Err(Error::parse(format!("config line {}", i + 1), "empty key"));
            }
            if out.get_str(key).is_some() {
                return Err(Error::parse(format!("config line {}", i + 1), format!("duplicate key '{key}'")));
            }
            out.entries.push((key.to_string(), v.trim().to_string()));
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Sets or replaces a key, keeping first-insertion order.
    pub fn set(&mut self, key: &str, value: impl Display) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.get_str(key)
            .map(|v| v.parse::<T>().map_err(|e| Error::parse(format!("config key '{key}'"), format!("'{v}': {e}"))))
            .transpose()
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        self.get(key)?.ok_or_else(|| Error::parse("config", format!("missing key '{key}'")))
    }

    /// Overwrites `target` when `key` is present.
    pub fn read_into<T: FromStr>(&self, key: &str, target: &mut T) -> Result<()>
    where
        T::Err: Display,
    {
        if let Some(v) = self.get(key)? {
            *target = v;
        }
        Ok(())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    /// Errors on keys outside `known`.
    pub fn check_known(&self, known: &[&str]) -> Result<()> {
        let known: HashSet<&str> = known.iter().copied().collect();
        match self.keys().find(|k| !known.contains(k)) {
            Some(k) => Err(Error::parse("config", format!("unknown key '{k}'"))),
            None => Ok(()),
        }
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_round_trip() {
        let kv = KeyValues::parse("# comment\n a = 1\n\nb=x=y\n").unwrap();
        assert_eq!(kv.get::<i32>("a").unwrap(), Some(1));
        assert_eq!(kv.get_str("b"), Some("x=y"));
        assert_eq!(kv.get::<i32>("missing").unwrap(), None);
        assert_eq!(KeyValues::parse(&kv.to_text()).unwrap(), kv);
    }

    #[test]
    fn errors_are_reported() {
        assert!(KeyValues::parse("novalue\n").is_err());
        assert!(KeyValues::parse("a=1\na=2\n").is_err());
        let kv = KeyValues::parse("a=notanumber").unwrap();
        assert!(kv.get::<f64>("a").unwrap_err().to_string().contains("'a'"));
        assert!(kv.require::<f64>("b").is_err());
        assert!(kv.check_known(&["b"]).is_err());
        assert!(kv.check_known(&["a"]).is_ok());
    }
}

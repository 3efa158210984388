//! Flat `key = value` text used by config files, manifests and reports.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Ordered key-value pairs. Blank lines and `#` comments are ignored when
/// parsing; duplicate keys are rejected.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(line, format!("line {} is not `key = value`", lineno + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::config("", format!("line {} has an empty key", lineno + 1)));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::config(k, "given more than once"));
            }
        }
        Ok(Self { entries })
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses `key` into `T` if present.
    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Error::config(key, format!("cannot parse `{v}`: {e}")))
            })
            .transpose()
    }

    /// Fails on the first key outside `allowed`.
    pub fn reject_unknown(&self, allowed: &[&str]) -> Result<()> {
        match self.keys().find(|k| !allowed.contains(k)) {
            Some(k) => Err(Error::config(k, "unknown key")),
            None => Ok(()),
        }
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Parses a comma-separated list such as `0.9,1.1`.
pub fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|e| Error::config(key, format!("cannot parse `{s}`: {e}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_print() {
        let kv = KeyValues::parse("# header\nb = 2\n\na=hello world # trailing\n").unwrap();
        assert_eq!(kv.get("a"), Some("hello world"));
        assert_eq!(kv.parsed::<u32>("b").unwrap(), Some(2));
        assert_eq!(kv.parsed::<u32>("c").unwrap(), None);
        assert_eq!(kv.to_text(), "a = hello world\nb = 2\n");
        assert_eq!(KeyValues::parse(&kv.to_text()).unwrap(), kv);
    }

    #[test]
    fn errors_name_the_key() {
        let err = KeyValues::parse("x = 1\nx = 2").unwrap_err().to_string();
        assert!(err.contains('x'));
        let kv = KeyValues::parse("lr = fast").unwrap();
        assert!(kv.parsed::<f64>("lr").unwrap_err().to_string().contains("lr"));
        assert!(kv.reject_unknown(&["epochs"]).unwrap_err().to_string().contains("lr"));
        assert!(KeyValues::parse("novalue").is_err());
    }

    #[test]
    fn lists() {
        assert_eq!(parse_list::<usize>("s", "16, 64,128").unwrap(), vec![16, 64, 128]);
        assert!(parse_list::<usize>("s", "16,x").is_err());
    }
}

//! Flat `key = value` run configuration. Flags override file values; every
//! resolved value is recorded so the run can be written back out and
//! hashed.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use lie_filters::{Error, Result};

/// Keys that name output locations; they are kept out of the hash and the
/// written config so reruns into another directory compare equal.
const OUTPUT_KEYS: &[&str] = &["out"];

#[derive(Clone, Debug, Default)]
pub struct Resolver {
    file: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
}

pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let (k, v) = t
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("config line {}: expected key = value", n + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

impl Resolver {
    pub fn from_file(path: Option<&Path>) -> Result<Self> {
        let file = match path {
            Some(p) => parse_config(&std::fs::read_to_string(p)?)?,
            None => BTreeMap::new(),
        };
        Ok(Self {
            file,
            resolved: BTreeMap::new(),
        })
    }

    fn raw(&self, key: &str) -> Option<&String> {
        self.file.get(key)
    }

    fn record(&mut self, key: &str, value: String) {
        self.resolved.insert(key.to_string(), value);
    }

    /// Flag, then file, then `default`.
    pub fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = self.maybe(key, flag)?.unwrap_or(default);
        self.record(key, v.to_string());
        Ok(v)
    }

    /// Flag, then file; an error naming `key` when neither is set.
    pub fn require<T>(&mut self, key: &str, flag: Option<T>) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = self
            .maybe(key, flag)?
            .ok_or_else(|| Error::InvalidArgument(format!("--{} is required", key.replace('_', "-"))))?;
        self.record(key, v.to_string());
        Ok(v)
    }

    /// Flag, then file, else unset. Unset values are recorded as `none`.
    pub fn optional<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = self.maybe(key, flag)?;
        self.record(key, v.as_ref().map_or_else(|| "none".to_string(), |v| v.to_string()));
        Ok(v)
    }

    fn maybe<T>(&self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.raw(key) {
            Some(s) if s != "none" => s
                .parse()
                .map(Some)
                .map_err(|e| Error::Parse(format!("config key {key}: {e}"))),
            _ => Ok(None),
        }
    }

    pub fn text(&self) -> String {
        self.resolved
            .iter()
            .filter(|(k, _)| !OUTPUT_KEYS.contains(&k.as_str()))
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// FNV-1a over [`Resolver::text`], as 16 hex digits.
    pub fn hash(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.text().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

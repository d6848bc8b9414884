//! Flat `key = value` configuration files.
//!
//! Keys are the long flag names (`max-pts`, `lr`, ...); underscores are
//! accepted in place of dashes. `#` starts a comment.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

pub const KEYS: &[&str] = &[
    "mode",
    "grid",
    "max-pts",
    "delta-mu",
    "lambda",
    "canny-sigma",
    "canny-low",
    "canny-high",
    "eta",
    "expert-iters",
    "bounded-experts",
    "tile",
    "lr",
    "reg",
    "prune",
    "iters",
    "tol",
];

#[derive(Debug, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, (usize, String)>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", i + 1))?;
            let key = key.trim().replace('_', "-");
            if !KEYS.contains(&key.as_str()) {
                return Err(format!("line {}: unknown key `{key}`", i + 1));
            }
            values.insert(key, (i + 1, value.trim().to_string()));
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// `flag` if given, else the file's value for `key`, else `default`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, String> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.values.get(key) {
            Some((line, raw)) => raw
                .parse()
                .map_err(|_| format!("config line {line}: invalid value `{raw}` for `{key}`")),
            None => Ok(default),
        }
    }
}

//! TOML defaults merged underneath command-line flags.
//!
//! ```toml
//! seed = 7
//! format = "json"
//!
//! [map]
//! b_end = 5.0
//! f_points = 301
//! ```
//!
//! Section keys are the long flag names with `-` written as `_`.

use crate::{usage, Format};
use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::{Path, PathBuf};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub format: Option<Format>,
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub levels: Option<toml::Table>,
    pub map: Option<toml::Table>,
    pub run: Option<toml::Table>,
    pub synth: Option<toml::Table>,
    pub pump: Option<toml::Table>,
    pub fit: Option<toml::Table>,
}

pub fn load(path: Option<&Path>) -> Result<ConfigFile> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("config {}", path.display()))
}

/// Flag values that were given, layered over the config section.
pub fn merge<T: Serialize + DeserializeOwned>(flags: &T, section: Option<&toml::Table>) -> Result<T> {
    let mut base = match section {
        Some(t) => serde_json::to_value(t)?,
        None => Value::Object(Default::default()),
    };
    let Value::Object(given) = serde_json::to_value(flags)? else {
        unreachable!("argument structs serialize to objects")
    };
    let obj = base.as_object_mut().expect("toml tables are objects");
    for (k, v) in given {
        let unset = match &v {
            Value::Null | Value::Bool(false) => true,
            Value::Array(a) => a.is_empty(),
            _ => false,
        };
        if !unset {
            obj.insert(k, v);
        }
    }
    serde_json::from_value(base).map_err(|e| usage(format!("config: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Serialize, Deserialize, PartialEq, Default)]
    #[serde(default, deny_unknown_fields)]
    struct A {
        n: Option<usize>,
        x: Option<f64>,
        flag: bool,
        list: Vec<String>,
    }

    #[test]
    fn flags_win_over_config() {
        let t: toml::Table = toml::from_str("n = 3\nx = 2\nflag = true\nlist = ['a']").unwrap();
        let flags = A { n: Some(5), ..A::default() };
        let m = merge(&flags, Some(&t)).unwrap();
        assert_eq!(m, A { n: Some(5), x: Some(2.0), flag: true, list: vec!["a".into()] });
        assert_eq!(merge(&flags, None).unwrap(), flags);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let t: toml::Table = toml::from_str("bogus = 1").unwrap();
        assert!(merge(&A::default(), Some(&t)).is_err());
        assert!(toml::from_str::<ConfigFile>("[nope]\n").is_err());
    }
}

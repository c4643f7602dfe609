//! Loading of YAML / JSON configuration files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;

use crate::error::{Error, Result};

/// Reads and parses a configuration file. `.json` files are parsed as JSON, anything
/// else as YAML (which also accepts JSON documents).
pub fn load_file<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::config(path, format!("cannot read file: {e}")))?;
    parse_str(&text, path)
}

pub fn parse_str<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    let is_json = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("json"))
        .unwrap_or(false);
    if is_json {
        serde_json::from_str(text).map_err(|e| Error::config(path, e))
    } else {
        serde_yaml::from_str(text).map_err(|e| Error::config(path, e))
    }
}

/// Resolves `p` against the directory containing `base` unless it is absolute.
pub fn resolve_relative(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.parent().unwrap_or_else(|| Path::new(".")).join(p)
    }
}

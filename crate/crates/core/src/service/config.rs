//! TOML config files. Every unknown key is reported at once.

use crate::error::{Error, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::path::Path;

fn collect_unknown(input: &toml::Table, known: &toml::Table, optional: &[&str], prefix: &str, out: &mut Vec<String>) {
    for (k, v) in input {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match known.get(k) {
            Some(toml::Value::Table(kt)) => {
                if let toml::Value::Table(vt) = v {
                    collect_unknown(vt, kt, optional, &path, out);
                }
            }
            Some(_) => {}
            None if optional.contains(&path.as_str()) => {}
            None => out.push(path),
        }
    }
}

/// Parses `text` into `T`, whose `Default` value spells out the schema.
/// `optional` names dotted keys that are absent from the serialized default.
pub fn parse_config<T: DeserializeOwned + Serialize + Default>(text: &str, optional: &[&str]) -> Result<T> {
    let input: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(format!("invalid TOML: {e}")))?;
    let known = toml::Table::try_from(T::default()).map_err(|e| Error::Config(format!("schema: {e}")))?;
    let mut unknown = Vec::new();
    collect_unknown(&input, &known, optional, "", &mut unknown);
    if !unknown.is_empty() {
        return Err(Error::Config(format!("unknown keys: {}", unknown.join(", "))));
    }
    toml::from_str(text).map_err(|e| Error::Config(format!("invalid config: {}", e.message())))
}

pub fn load_config<T: DeserializeOwned + Serialize + Default>(path: &Path, optional: &[&str]) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text, optional)
}

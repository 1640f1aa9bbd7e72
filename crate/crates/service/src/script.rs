//! Key scripts: one key name per line, `#` starts a comment.

use hda_access::screenreader::Key;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: unknown key {name:?}")]
pub struct ScriptError {
    pub line: usize,
    pub name: String,
}

pub fn parse_script(text: &str) -> Result<Vec<Key>, ScriptError> {
    let mut keys = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let key = line.parse().map_err(|_| ScriptError {
            line: i + 1,
            name: line.to_owned(),
        })?;
        keys.push(key);
    }
    Ok(keys)
}

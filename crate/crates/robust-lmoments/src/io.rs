//! Sample files, `key=value` config files and atomic output.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: '{token}' is not a number")]
    NotNumeric { line: usize, token: String },
    #[error("line {line}: value {token} is not finite")]
    NonFinite { line: usize, token: String },
    #[error("empty sample")]
    EmptySample,
    #[error("line {line}: expected key=value, got '{text}'")]
    MalformedLine { line: usize, text: String },
    #[error("line {line}: duplicate key '{key}'")]
    DuplicateKey { line: usize, key: String },
}

/// Parse observations separated by whitespace and/or commas, one or more per
/// line. Blank lines and `#` comments are skipped; a single non-numeric
/// first line is treated as a header.
pub fn parse_sample(text: &str) -> Result<Vec<f64>, IoError> {
    let mut values = Vec::new();
    let mut seen_data = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .collect();
        let parsed: Vec<Result<f64, _>> = tokens.iter().map(|t| t.parse::<f64>()).collect();
        if !seen_data && parsed.iter().all(|p| p.is_err()) && parsed.len() == 1 {
            seen_data = true;
            continue;
        }
        seen_data = true;
        for (token, p) in tokens.iter().zip(parsed) {
            let v = p.map_err(|_| IoError::NotNumeric {
                line: idx + 1,
                token: token.to_string(),
            })?;
            if !v.is_finite() {
                return Err(IoError::NonFinite {
                    line: idx + 1,
                    token: token.to_string(),
                });
            }
            values.push(v);
        }
    }
    if values.is_empty() {
        return Err(IoError::EmptySample);
    }
    Ok(values)
}

pub fn read_sample(path: &Path) -> Result<Vec<f64>, IoError> {
    parse_sample(&read_to_string(path)?)
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

/// One `key=value` per line, `#` starts a comment. Keys are lowercased.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, IoError> {
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| IoError::MalformedLine {
            line: idx + 1,
            text: line.to_string(),
        })?;
        let key = key.trim().to_ascii_lowercase();
        if key.is_empty() {
            return Err(IoError::MalformedLine {
                line: idx + 1,
                text: line.to_string(),
            });
        }
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(IoError::DuplicateKey { line: idx + 1, key });
        }
    }
    Ok(map)
}

pub fn read_to_string(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.to_path_buf(),
        source,
    })
}

/// Write `contents` to a temporary file next to `path`, then rename it over
/// `path`, so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), IoError> {
    let err = |source| IoError::Write {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(err)?;
    tmp.write_all(contents.as_bytes()).map_err(err)?;
    tmp.as_file().sync_all().map_err(err)?;
    tmp.persist(path).map_err(|e| err(e.error))?;
    Ok(())
}

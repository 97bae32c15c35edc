//! Flat `key = value` files with dotted keys.
//!
//! ```text
//! # comment
//! cache.size_kb = 16
//! sweep.fifo_depths = 8,16,24,32
//! ```
//!
//! Blank lines and `#` comments are ignored. A key may appear once.

use std::collections::BTreeMap;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KvError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("`{key}`: cannot parse `{value}`")]
    BadValue { key: String, value: String },
}

/// Parsed pairs in key order.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>, KvError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(KvError::Syntax { line: i + 1 })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || k.contains(char::is_whitespace) {
            return Err(KvError::Syntax { line: i + 1 });
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(KvError::Duplicate {
                line: i + 1,
                key: k.to_string(),
            });
        }
    }
    Ok(out)
}

/// Splits `key=value` as given on a command line.
pub fn parse_pair(s: &str) -> Result<(String, String), KvError> {
    let (k, v) = s.split_once('=').ok_or(KvError::Syntax { line: 0 })?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

pub fn value<T: FromStr>(key: &str, v: &str) -> Result<T, KvError> {
    v.parse().map_err(|_| KvError::BadValue {
        key: key.to_string(),
        value: v.to_string(),
    })
}

/// Integers with an optional `0x` prefix.
pub fn int_value(key: &str, v: &str) -> Result<u64, KvError> {
    let parsed = match v.strip_prefix("0x").or_else(|| v.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16).ok(),
        None => v.parse().ok(),
    };
    parsed.ok_or_else(|| KvError::BadValue {
        key: key.to_string(),
        value: v.to_string(),
    })
}

/// Comma-separated list; empty items are rejected.
pub fn list_value<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, KvError> {
    v.split(',').map(|item| value(key, item.trim())).collect()
}

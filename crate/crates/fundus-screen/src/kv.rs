//! Flat `key=value` text blocks.
//!
//! The pipeline serializes its config structs in a single shared format:
//! one `key=value` pair per line, `#` starts a comment, blank lines are
//! ignored. The same block is embedded in model files, sidecar configs, and
//! run metadata.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KvError {
    #[error("line {line}: expected key=value, got {text:?}")]
    Malformed { line: usize, text: String },
    #[error("line {line}: bad value for {key}: {reason}")]
    BadValue {
        line: usize,
        key: String,
        reason: String,
    },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
}

/// Parses a flat key-value block into `(key, value)` pairs in file order.
pub fn parse(text: &str) -> Result<Vec<(String, String)>, KvError> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| KvError::Malformed {
            line: i + 1,
            text: raw.to_string(),
        })?;
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

/// Writes pairs back out as one `key=value` per line.
pub fn emit(pairs: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        out.push_str(k);
        out.push('=');
        out.push_str(v);
        out.push('\n');
    }
    out
}

/// Anything that can absorb and emit flat key-value pairs.
///
/// `set` returns `Ok(false)` when the key does not belong to this config, so
/// layered configs can try each section in turn and reject leftovers.
pub trait KvConfig {
    fn set(&mut self, key: &str, value: &str) -> Result<bool, String>;
    fn pairs(&self) -> Vec<(String, String)>;

    fn to_kv(&self) -> String {
        emit(&self.pairs())
    }

    fn apply_kv(&mut self, text: &str) -> Result<(), KvError> {
        for (i, (key, value)) in parse(text)?.into_iter().enumerate() {
            match self.set(&key, &value) {
                Ok(true) => {}
                Ok(false) => return Err(KvError::UnknownKey { line: i + 1, key }),
                Err(reason) => {
                    return Err(KvError::BadValue {
                        line: i + 1,
                        key,
                        reason,
                    })
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn parse_num<T: std::str::FromStr>(value: &str, what: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| format!("{what}: {e} (got {value:?})"))
}

pub(crate) fn parse_bool(value: &str) -> Result<bool, String> {
    match value {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        other => Err(format!("expected true/false, got {other:?}")),
    }
}

pub(crate) fn parse_usize_list(value: &str) -> Result<Vec<usize>, String> {
    value
        .split(',')
        .map(|s| parse_num::<usize>(s.trim(), "list entry"))
        .collect()
}

pub(crate) fn fmt_usize_list(list: &[usize]) -> String {
    list.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_skips_comments_and_blanks() {
        let pairs = parse("# header\n\na=1\n b = two \n").unwrap();
        assert_eq!(
            pairs,
            vec![
                ("a".to_string(), "1".to_string()),
                ("b".to_string(), "two".to_string())
            ]
        );
    }

    #[test]
    fn parse_rejects_missing_equals() {
        let err = parse("a=1\nnope\n").unwrap_err();
        assert!(matches!(err, KvError::Malformed { line: 2, .. }));
    }

    #[test]
    fn emit_round_trips() {
        let pairs = vec![
            ("x".to_string(), "1".to_string()),
            ("y".to_string(), "2.5".to_string()),
        ];
        assert_eq!(parse(&emit(&pairs)).unwrap(), pairs);
    }
}

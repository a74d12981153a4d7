//! Optional TOML configuration file. A key is looked up first in the table
//! named after the subcommand (`[simulate]`, ...), then at top level.
//! Command-line flags always win.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use toml::{Table, Value};

use crate::CliError;

#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    root: Table,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        text.parse::<Table>()
            .map(|root| Self { root })
            .map_err(|e| e.message().to_string())
    }
}

/// Resolves parameters of one subcommand against flags and the config file.
pub struct Layer<'a> {
    file: Option<&'a ConfigFile>,
    section: &'static str,
}

impl<'a> Layer<'a> {
    pub fn new(file: Option<&'a ConfigFile>, section: &'static str) -> Self {
        Self { file, section }
    }

    fn lookup(&self, key: &str) -> Option<&'a Value> {
        let root = &self.file?.root;
        root.get(self.section)
            .and_then(Value::as_table)
            .and_then(|t| t.get(key))
            .or_else(|| root.get(key).filter(|v| !v.is_table()))
    }

    fn bad(&self, key: &str, want: &str, got: &Value) -> CliError {
        CliError::Config(format!("config key '{key}' must be {want}, got {got}"))
    }

    pub fn f64(&self, flag: Option<f64>, key: &str) -> Result<Option<f64>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        self.lookup(key).map(|v| as_f64(v).ok_or_else(|| self.bad(key, "a number", v))).transpose()
    }

    pub fn uint<T: TryFrom<i64>>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        self.lookup(key)
            .map(|v| {
                v.as_integer()
                    .filter(|i| *i >= 0)
                    .and_then(|i| T::try_from(i).ok())
                    .ok_or_else(|| self.bad(key, "a nonnegative integer", v))
            })
            .transpose()
    }

    pub fn string(&self, flag: Option<String>, key: &str) -> Result<Option<String>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        self.lookup(key)
            .map(|v| v.as_str().map(str::to_string).ok_or_else(|| self.bad(key, "a string", v)))
            .transpose()
    }

    pub fn path(&self, flag: Option<PathBuf>, key: &str) -> Result<Option<PathBuf>, CliError> {
        Ok(flag.or(self.string(None, key)?.map(PathBuf::from)))
    }

    /// A list given as a comma-separated flag, or as a number, array or
    /// comma-separated string in the file. An empty string is an empty list.
    pub fn list<T: FromStr>(&self, flag: Option<String>, key: &str) -> Result<Option<Vec<T>>, CliError> {
        if let Some(text) = flag {
            return parse_list(&text, key).map(Some);
        }
        let Some(v) = self.lookup(key) else {
            return Ok(None);
        };
        match v {
            Value::String(s) => parse_list(s, key).map(Some),
            Value::Array(items) => items
                .iter()
                .map(|item| match item {
                    Value::String(s) => parse_item(s, key),
                    other => parse_item(&other.to_string(), key),
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
            Value::Integer(_) | Value::Float(_) => parse_item(&v.to_string(), key).map(|x| Some(vec![x])),
            other => Err(self.bad(key, "a list", other)),
        }
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn parse_item<T: FromStr>(s: &str, key: &str) -> Result<T, CliError> {
    s.trim()
        .parse()
        .map_err(|_| CliError::Config(format!("cannot parse '{}' in {key}", s.trim())))
}

pub fn parse_list<T: FromStr>(text: &str, key: &str) -> Result<Vec<T>, CliError> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',').map(|s| parse_item(s, key)).collect()
}

/// Turns a missing required parameter into a config error.
pub fn require<T>(value: Option<T>, name: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Config(format!("missing required parameter '{name}' (flag or config key)")))
}

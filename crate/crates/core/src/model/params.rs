use std::cell::RefCell;
use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// `key=value` parameters addressed to a model constructor.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ModelParams {
    values: BTreeMap<String, String>,
}

impl ModelParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse<S: AsRef<str>>(items: &[S]) -> Result<Self> {
        let mut p = ModelParams::new();
        for item in items {
            let item = item.as_ref();
            let (k, v) = item.split_once('=').ok_or_else(|| {
                Error::InvalidInput(format!("parameter '{item}' is not of the form key=value"))
            })?;
            p.set(k.trim(), v.trim());
        }
        Ok(p)
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn reader(&self) -> ParamReader<'_> {
        ParamReader {
            params: self,
            used: RefCell::new(Vec::new()),
        }
    }
}

/// Typed access to [`ModelParams`] that remembers which keys were consumed.
pub struct ParamReader<'a> {
    params: &'a ModelParams,
    used: RefCell<Vec<String>>,
}

impl ParamReader<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.used.borrow_mut().push(key.to_string());
        self.params.get(key)
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => parse_f64(key, v),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| {
                Error::InvalidInput(format!(
                    "parameter {key}: '{v}' is not a nonnegative integer"
                ))
            }),
        }
    }

    /// Comma-separated list; a single value is a list of length one.
    pub fn list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.raw(key) {
            None => Ok(default.to_vec()),
            Some(v) => v.split(',').map(|s| parse_f64(key, s.trim())).collect(),
        }
    }

    pub fn string(&self, key: &str) -> Option<String> {
        self.raw(key).map(str::to_string)
    }

    /// Fails if any supplied key was never consumed.
    pub fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        let unknown: Vec<&str> = self
            .params
            .values
            .keys()
            .filter(|k| !used.contains(k))
            .map(String::as_str)
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "unknown model parameter(s): {}",
                unknown.join(", ")
            )))
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    let x: f64 = v
        .parse()
        .map_err(|_| Error::InvalidInput(format!("parameter {key}: '{v}' is not a number")))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::InvalidInput(format!(
            "parameter {key} must be finite"
        )))
    }
}

//! Flat `key = value` experiment configuration.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::Vec2;

/// Parsed configuration. Every lookup records the key and the resolved value,
/// so that unknown keys can be rejected and the manifest lists exactly what
/// the run used.
#[derive(Debug, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
    source: Option<PathBuf>,
    used: RefCell<BTreeSet<String>>,
    resolved: RefCell<BTreeMap<String, String>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::format(k + 1, format!("expected key = value, got {line:?}")));
            };
            let key = key.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(Error::format(k + 1, format!("bad key {key:?}")));
            }
            if values.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(Error::format(k + 1, format!("duplicate key {key:?}")));
            }
        }
        Ok(Config {
            values,
            ..Config::default()
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Config::parse(&text).map_err(|e| match e {
            Error::Format { line, msg } => Error::config(format!("{}:{line}: {msg}", path.display())),
            other => other,
        })?;
        cfg.source = Some(path.to_path_buf());
        Ok(cfg)
    }

    /// Directory of the config file, against which relative paths resolve.
    pub fn base_dir(&self) -> Option<&Path> {
        self.source.as_deref().and_then(Path::parent)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.used.borrow_mut().insert(key.to_string());
        self.values.get(key).map(String::as_str)
    }

    fn record(&self, key: &str, value: String) {
        self.resolved.borrow_mut().insert(key.to_string(), value);
    }

    fn typed<T>(&self, key: &str, parse: impl Fn(&str) -> Option<T>, what: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(s) => {
                let v = parse(s).ok_or_else(|| Error::config(format!("{key}: expected {what}, got {s:?}")))?;
                self.record(key, s.to_string());
                Ok(Some(v))
            }
        }
    }

    pub fn f64_opt(&self, key: &str) -> Result<Option<f64>> {
        self.typed(key, parse_f64, "a finite number")
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.f64_opt(key)? {
            Some(v) => Ok(v),
            None => {
                self.record(key, default.to_string());
                Ok(default)
            }
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.typed(key, |s| s.parse::<usize>().ok(), "a non-negative integer")? {
            Some(v) => Ok(v),
            None => {
                self.record(key, default.to_string());
                Ok(default)
            }
        }
    }

    pub fn str_or(&self, key: &str, default: &str) -> Result<String> {
        let v = self.raw(key).unwrap_or(default).to_string();
        self.record(key, v.clone());
        Ok(v)
    }

    pub fn str_opt(&self, key: &str) -> Option<String> {
        let v = self.raw(key)?.to_string();
        self.record(key, v.clone());
        Some(v)
    }

    pub fn list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        let parse = |s: &str| s.split(',').map(|t| parse_f64(t.trim())).collect::<Option<Vec<f64>>>();
        match self.typed(key, parse, "a comma-separated list of numbers")? {
            Some(v) if v.is_empty() => Err(Error::config(format!("{key}: empty list"))),
            Some(v) => Ok(v),
            None => {
                self.record(key, join(default));
                Ok(default.to_vec())
            }
        }
    }

    pub fn point_or(&self, key: &str, default: Vec2) -> Result<Vec2> {
        let parse = |s: &str| {
            let (a, b) = s.split_once(',')?;
            Some(Vec2::new(parse_f64(a.trim())?, parse_f64(b.trim())?))
        };
        match self.typed(key, parse, "a point x,y")? {
            Some(v) => Ok(v),
            None => {
                self.record(key, format!("{},{}", default.x, default.y));
                Ok(default)
            }
        }
    }

    /// Rejects keys that were never looked up.
    pub fn check_unused(&self) -> Result<()> {
        let used = self.used.borrow();
        let unknown: Vec<&str> = self
            .values
            .keys()
            .filter(|k| !used.contains(*k))
            .map(String::as_str)
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::config(format!("unknown configuration keys: {}", unknown.join(", "))))
        }
    }

    /// Every key the run looked up, with its resolved value.
    pub fn resolved(&self) -> BTreeMap<String, String> {
        self.resolved.borrow().clone()
    }
}

fn parse_f64(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_resolve() {
        let cfg = Config::parse("# header\nn = 64  # grid\nepsilons=0.1, 0.05\nstart = 0.5,-0.25\n").unwrap();
        assert_eq!(cfg.usize_or("n", 10).unwrap(), 64);
        assert_eq!(cfg.list_or("epsilons", &[1.0]).unwrap(), vec![0.1, 0.05]);
        assert_eq!(cfg.point_or("start", Vec2::ZERO).unwrap(), Vec2::new(0.5, -0.25));
        assert_eq!(cfg.f64_or("q", 6.0).unwrap(), 6.0);
        cfg.check_unused().unwrap();
        let r = cfg.resolved();
        assert_eq!(r["q"], "6");
        assert_eq!(r["n"], "64");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(Config::parse("n 64"), Err(Error::Format { line: 1, .. })));
        assert!(matches!(Config::parse("a=1\na=2"), Err(Error::Format { line: 2, .. })));
        let cfg = Config::parse("n = many\nextra = 1").unwrap();
        assert!(matches!(cfg.usize_or("n", 1), Err(Error::Config(_))));
        assert!(cfg.check_unused().unwrap_err().to_string().contains("extra"));
        let cfg = Config::parse("eps = nan").unwrap();
        assert!(cfg.f64_opt("eps").is_err());
    }
}

//! Flat `key = value` configuration with `[section]` headers.
//!
//! Keys are addressed as `section.key`; keys before the first header live
//! in the `run` section. `#` starts a comment.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq)]
struct Entry {
    value: String,
    /// Line in the file, or `None` for `--set` overrides.
    line: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, Entry>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        let mut section = String::from("run");
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let s = raw.split('#').next().unwrap_or("").trim();
            if s.is_empty() {
                continue;
            }
            if let Some(rest) = s.strip_prefix('[') {
                let Some(name) = rest.strip_suffix(']') else {
                    return Err(CliError::config(
                        Some(line),
                        s,
                        "unterminated section header",
                    ));
                };
                let name = name.trim();
                if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                    return Err(CliError::config(Some(line), name, "invalid section name"));
                }
                section = name.to_string();
                continue;
            }
            let Some((k, v)) = s.split_once('=') else {
                return Err(CliError::config(Some(line), s, "expected `key = value`"));
            };
            let k = k.trim();
            if k.is_empty() || !k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(CliError::config(Some(line), k, "invalid key"));
            }
            let key = format!("{section}.{k}");
            if entries.contains_key(&key) {
                return Err(CliError::config(Some(line), &key, "duplicate key"));
            }
            entries.insert(
                key,
                Entry {
                    value: v.trim().to_string(),
                    line: Some(line),
                },
            );
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Applies a `section.key=value` override.
    pub fn set(&mut self, spec: &str) -> Result<(), CliError> {
        let Some((k, v)) = spec.split_once('=') else {
            return Err(CliError::config(
                None,
                spec,
                "override must be `section.key=value`",
            ));
        };
        let k = k.trim();
        if !k.contains('.') {
            return Err(CliError::config(None, k, "override key needs a section"));
        }
        self.entries.insert(
            k.to_string(),
            Entry {
                value: v.trim().to_string(),
                line: None,
            },
        );
        Ok(())
    }

    /// All entries, for the summary echo.
    pub fn echo(&self) -> BTreeMap<String, String> {
        self.entries
            .iter()
            .map(|(k, e)| (k.clone(), e.value.clone()))
            .collect()
    }

    fn raw(&self, key: &str) -> Option<&Entry> {
        self.entries.get(key)
    }

    fn parse_value<T: std::str::FromStr>(
        &self,
        key: &str,
        e: &Entry,
        what: &str,
    ) -> Result<T, CliError> {
        e.value.parse().map_err(|_| {
            CliError::config(e.line, key, &format!("expected {what}, got `{}`", e.value))
        })
    }

    pub fn require_str(&self, key: &str) -> Result<String, CliError> {
        self.raw(key)
            .map(|e| e.value.clone())
            .ok_or_else(|| CliError::config(None, key, "missing key"))
    }

    pub fn str_or(&self, key: &str, default: &str) -> String {
        self.raw(key)
            .map_or_else(|| default.to_string(), |e| e.value.clone())
    }

    fn checked_f64(&self, key: &str, e: &Entry, lo: f64, hi: f64) -> Result<f64, CliError> {
        let v: f64 = self.parse_value(key, e, "a number")?;
        if !(v >= lo && v <= hi) {
            return Err(CliError::config(
                e.line,
                key,
                &format!("{v} outside [{lo}, {hi}]"),
            ));
        }
        Ok(v)
    }

    fn checked_u64(&self, key: &str, e: &Entry, lo: u64, hi: u64) -> Result<u64, CliError> {
        let v: u64 = self.parse_value(key, e, "a non-negative integer")?;
        if v < lo || v > hi {
            return Err(CliError::config(
                e.line,
                key,
                &format!("{v} outside [{lo}, {hi}]"),
            ));
        }
        Ok(v)
    }

    pub fn require_f64(&self, key: &str, lo: f64, hi: f64) -> Result<f64, CliError> {
        let e = self
            .raw(key)
            .ok_or_else(|| CliError::config(None, key, "missing key"))?;
        self.checked_f64(key, e, lo, hi)
    }

    pub fn f64_or(&self, key: &str, default: f64, lo: f64, hi: f64) -> Result<f64, CliError> {
        match self.raw(key) {
            Some(e) => self.checked_f64(key, e, lo, hi),
            None => Ok(default),
        }
    }

    pub fn require_u64(&self, key: &str, lo: u64, hi: u64) -> Result<u64, CliError> {
        let e = self
            .raw(key)
            .ok_or_else(|| CliError::config(None, key, "missing key"))?;
        self.checked_u64(key, e, lo, hi)
    }

    pub fn u64_or(&self, key: &str, default: u64, lo: u64, hi: u64) -> Result<u64, CliError> {
        match self.raw(key) {
            Some(e) => self.checked_u64(key, e, lo, hi),
            None => Ok(default),
        }
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool, CliError> {
        match self.raw(key) {
            Some(e) => self.parse_value(key, e, "true or false"),
            None => Ok(default),
        }
    }

    /// Integer list: `4,6,8` or an inclusive range `4..12`.
    pub fn require_levels(&self, key: &str) -> Result<Vec<u32>, CliError> {
        let e = self
            .raw(key)
            .ok_or_else(|| CliError::config(None, key, "missing key"))?;
        let bad = || {
            CliError::config(
                e.line,
                key,
                &format!("expected `a..b` or a list, got `{}`", e.value),
            )
        };
        let v: Vec<u32> = if let Some((a, b)) = e.value.split_once("..") {
            let a: u32 = a.trim().parse().map_err(|_| bad())?;
            let b: u32 = b.trim().parse().map_err(|_| bad())?;
            if b < a {
                return Err(bad());
            }
            (a..=b).collect()
        } else {
            e.value
                .split(',')
                .map(|s| s.trim().parse().map_err(|_| bad()))
                .collect::<Result<_, _>>()?
        };
        if v.is_empty() || v.iter().any(|&n| n > 30) {
            return Err(CliError::config(e.line, key, "levels must lie in [0, 30]"));
        }
        Ok(v)
    }

    /// Comma-separated numbers.
    pub fn f64_list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, CliError> {
        let Some(e) = self.raw(key) else {
            return Ok(default.to_vec());
        };
        e.value
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        CliError::config(e.line, key, &format!("bad number `{}`", s.trim()))
                    })
            })
            .collect()
    }

    /// Points separated by `;`, coordinates by `,`.
    pub fn points_or(
        &self,
        key: &str,
        default: &str,
        dim: usize,
    ) -> Result<Vec<Vec<f64>>, CliError> {
        let (text, line) = match self.raw(key) {
            Some(e) => (e.value.as_str(), e.line),
            None => (default, None),
        };
        text.split(';')
            .map(|p| {
                let v: Vec<f64> = p
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| {
                        CliError::config(line, key, &format!("bad point `{}`", p.trim()))
                    })?;
                if v.len() != dim {
                    return Err(CliError::config(
                        line,
                        key,
                        &format!(
                            "point `{}` has {} coordinates, dimension is {dim}",
                            p.trim(),
                            v.len()
                        ),
                    ));
                }
                Ok(v)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_overrides() {
        let mut c = Config::parse("seed = 3\n[noise]\nlevels = 4..6 # comment\ndt=1e-3\n").unwrap();
        assert_eq!(c.require_u64("run.seed", 0, 10).unwrap(), 3);
        assert_eq!(c.require_levels("noise.levels").unwrap(), vec![4, 5, 6]);
        c.set("noise.dt=2e-3").unwrap();
        assert_eq!(c.require_f64("noise.dt", 0.0, 1.0).unwrap(), 2e-3);
    }

    #[test]
    fn errors_name_line_and_key() {
        let e = Config::parse("[noise]\ndt\n").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
        let c = Config::parse("[noise]\ndt = -1\n").unwrap();
        let e = c.require_f64("noise.dt", 1e-9, 1.0).unwrap_err();
        assert!(e.to_string().contains("noise.dt") && e.to_string().contains("line 2"));
        let e = Config::parse("")
            .unwrap()
            .require_f64("noise.dt", 0.0, 1.0)
            .unwrap_err();
        assert!(e.to_string().contains("`noise.dt`: missing key"), "{e}");
    }
}

//! `key = value` text files: mixture specifications and experiment
//! settings.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are unique.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::generators::{ComponentSpec, Family, MixtureSpec};
use crate::rankings::Permutation;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, (String, usize)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(line_no, format!("expected key=value, got `{line}`")))?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(Error::parse(line_no, "empty key"));
            }
            if entries
                .insert(key.clone(), (value.trim().to_string(), line_no))
                .is_some()
            {
                return Err(Error::parse(line_no, format!("duplicate key `{key}`")));
            }
        }
        Ok(KeyValues { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    fn line(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |(_, l)| *l)
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Error::parse(self.line(key), format!("`{key}`: {e}")))
            })
            .transpose()
    }

    pub fn required<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.parsed(key)?
            .ok_or_else(|| Error::parse(0, format!("missing required key `{key}`")))
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        let Some(value) = self.get(key) else {
            return Ok(None);
        };
        value
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<T>()
                    .map_err(|e| Error::parse(self.line(key), format!("`{key}`: {e}")))
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    /// Fails on keys outside `allowed`.
    pub fn reject_unknown(&self, allowed: impl Fn(&str) -> bool) -> Result<()> {
        for (key, (_, line)) in &self.entries {
            if !allowed(key) {
                return Err(Error::parse(*line, format!("unknown key `{key}`")));
            }
        }
        Ok(())
    }
}

/// Reads a mixture specification.
///
/// ```text
/// n = 4
/// k = 2
/// weights = 0.5, 0.5
/// component.0.family = mnl
/// component.0.beta = 1.0
/// component.0.utilities = 1, 0, -1, 0.5
/// component.1.family = mallows
/// component.1.phi = 0.5
/// component.1.center = 3 2 1 0
/// ```
///
/// `weights` may be omitted for equal weights.
pub fn parse_mixture_spec(text: &str) -> Result<MixtureSpec> {
    let kv = KeyValues::parse(text)?;
    let n: usize = kv.required("n")?;
    let k: usize = kv.required("k")?;
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    kv.reject_unknown(|key| {
        matches!(key, "n" | "k" | "weights")
            || key
                .strip_prefix("component.")
                .and_then(|rest| rest.split_once('.'))
                .is_some_and(|(idx, field)| {
                    idx.parse::<usize>().is_ok_and(|i| i < k)
                        && matches!(field, "family" | "beta" | "sigma" | "phi" | "utilities" | "center")
                })
    })?;
    let mut components = Vec::with_capacity(k);
    for i in 0..k {
        let key = |field: &str| format!("component.{i}.{field}");
        let family: Family = kv.required(&key("family"))?;
        let component = match family {
            Family::Mnl | Family::Gaussian => {
                let utilities: Vec<f64> = kv
                    .list(&key("utilities"))?
                    .ok_or_else(|| Error::parse(0, format!("missing `{}`", key("utilities"))))?;
                if utilities.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        actual: utilities.len(),
                    });
                }
                if family == Family::Mnl {
                    ComponentSpec::mnl(utilities, kv.required(&key("beta"))?)?
                } else {
                    ComponentSpec::gaussian(utilities, kv.required(&key("sigma"))?)?
                }
            }
            Family::Mallows => {
                let center_text = kv
                    .get(&key("center"))
                    .ok_or_else(|| Error::parse(0, format!("missing `{}`", key("center"))))?;
                let order = center_text
                    .split_whitespace()
                    .map(|s| {
                        s.parse::<usize>()
                            .map_err(|e| Error::parse(0, format!("`{}`: {e}", key("center"))))
                    })
                    .collect::<Result<Vec<_>>>()?;
                if order.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        actual: order.len(),
                    });
                }
                ComponentSpec::mallows(Permutation::from_order(order)?, kv.required(&key("phi"))?)?
            }
        };
        components.push(component);
    }
    match kv.list::<f64>("weights")? {
        Some(weights) => MixtureSpec::new(components, weights),
        None => MixtureSpec::uniform(components),
    }
}

fn join<T: std::fmt::Display>(items: &[T], sep: &str) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(sep)
}

/// Writes a mixture specification readable by [`parse_mixture_spec`].
pub fn format_mixture_spec(spec: &MixtureSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "n = {}", spec.n());
    let _ = writeln!(out, "k = {}", spec.k());
    let _ = writeln!(out, "weights = {}", join(spec.weights(), ", "));
    for (i, c) in spec.components().iter().enumerate() {
        let _ = writeln!(out, "component.{i}.family = {}", c.family().name());
        match c {
            ComponentSpec::Mnl { utilities, beta } => {
                let _ = writeln!(out, "component.{i}.beta = {beta}");
                let _ = writeln!(out, "component.{i}.utilities = {}", join(utilities, ", "));
            }
            ComponentSpec::Gaussian { utilities, sigma } => {
                let _ = writeln!(out, "component.{i}.sigma = {sigma}");
                let _ = writeln!(out, "component.{i}.utilities = {}", join(utilities, ", "));
            }
            ComponentSpec::Mallows { center, phi } => {
                let _ = writeln!(out, "component.{i}.phi = {phi}");
                let _ = writeln!(out, "component.{i}.center = {}", join(center.order(), " "));
            }
        }
    }
    out
}

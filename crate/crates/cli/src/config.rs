//! Flat `section.key = value` configuration with typed defaults.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use toml::Value;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Int,
    Float,
    Str,
    Bool,
    /// Comma-separated string or array of numbers.
    FloatList,
}

fn defaults() -> Vec<(&'static str, Kind, Value)> {
    use Kind::*;
    let int = |v: i64| Value::Integer(v);
    let float = Value::Float;
    let s = |v: &str| Value::String(v.to_string());
    vec![
        ("run.seed", Int, int(42)),
        ("run.n_seeds", Int, int(3)),
        ("run.updates", Int, int(10)),
        ("run.min_eval", Int, int(15)),
        ("run.jobs", Int, int(1)),
        ("run.benchmark_step", Int, int(5)),
        (
            "run.strategies",
            Str,
            s("MeanRate-static,model-static,FV,HV,DE,SE,MCD,MVN,HetReg"),
        ),
        ("run.lambda", Str, s("none")),
        ("run.scoring", Str, s("heldout")),
        ("world.n_hotspots", Int, int(200)),
        ("world.n_species", Int, int(50)),
        ("world.feature_dim", Int, int(8)),
        ("world.rate_sparsity", Float, float(0.6)),
        ("world.checklists_per_hotspot", Int, int(40)),
        ("world.test_fraction", Float, float(0.5)),
        ("world.val_fraction", Float, float(0.2)),
        ("priors.source", Str, s("auto")),
        ("priors.noise", Float, float(0.2)),
        ("priors.tau", Float, float(1.0)),
        ("priors.max_history", Int, int(5)),
        ("priors.de_members", Int, int(5)),
        ("priors.se_heads", Int, int(5)),
        ("priors.mcd_passes", Int, int(30)),
        ("priors.dropout", Float, float(0.2)),
        ("train.members", Int, int(5)),
        ("train.learning_rate", Float, float(1e-3)),
        ("train.batch_size", Int, int(128)),
        ("train.max_epochs", Int, int(50)),
        ("train.warmup_epochs", Int, int(5)),
        ("train.lambda_mu", Float, float(0.1)),
        ("train.lambda_sigma", Float, float(0.1)),
        ("train.hidden", Int, int(64)),
        ("train.loss", Str, s("glt")),
        ("ingest.min_test_checklists", Int, int(30)),
        ("ingest.test_fraction", Float, float(0.5)),
        ("ingest.val_fraction", Float, float(0.2)),
        ("sweep.strategy", Str, s("FV")),
        (
            "sweep.lambdas",
            FloatList,
            Value::Array([0.1, 0.25, 0.5, 1.0].map(Value::Float).to_vec()),
        ),
        ("report.step", Int, int(5)),
        ("report.verbose", Bool, Value::Boolean(false)),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    values: BTreeMap<String, Value>,
    kinds: BTreeMap<String, Kind>,
    explicit: BTreeSet<String>,
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.clone())),
        }
    }
}

impl Config {
    pub fn defaults() -> Self {
        let mut values = BTreeMap::new();
        let mut kinds = BTreeMap::new();
        for (k, kind, v) in defaults() {
            values.insert(k.to_string(), v);
            kinds.insert(k.to_string(), kind);
        }
        Self {
            values,
            kinds,
            explicit: BTreeSet::new(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().trim().to_string()))?;
        let mut flat = Vec::new();
        flatten("", &table, &mut flat);
        let mut cfg = Self::defaults();
        for (k, v) in flat {
            cfg.set(&k, v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Sets a key, checking that it exists and that the value has its type.
    pub fn set(&mut self, key: &str, value: Value) -> Result<(), CliError> {
        let kind = *self
            .kinds
            .get(key)
            .ok_or_else(|| CliError::Config(format!("unknown configuration key `{key}`")))?;
        let value = match (kind, value) {
            (Kind::Int, v @ Value::Integer(i)) if i >= 0 => v,
            (Kind::Float, v @ Value::Float(_)) => v,
            (Kind::Float, Value::Integer(i)) => Value::Float(i as f64),
            (Kind::Str, v @ Value::String(_)) => v,
            (Kind::Bool, v @ Value::Boolean(_)) => v,
            (Kind::FloatList, Value::String(s)) => Value::Array(
                parse_float_list(&s)
                    .map_err(|m| CliError::Config(format!("`{key}`: {m}")))?
                    .into_iter()
                    .map(Value::Float)
                    .collect(),
            ),
            (Kind::FloatList, Value::Array(items)) => {
                let floats = items
                    .into_iter()
                    .map(|v| match v {
                        Value::Float(f) => Ok(Value::Float(f)),
                        Value::Integer(i) => Ok(Value::Float(i as f64)),
                        _ => Err(CliError::Config(format!("`{key}` must hold numbers"))),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Value::Array(floats)
            }
            (kind, v) => {
                return Err(CliError::Config(format!(
                    "`{key}` expects {}, got `{v}`",
                    match kind {
                        Kind::Int => "a non-negative integer",
                        Kind::Float => "a number",
                        Kind::Str => "a string",
                        Kind::Bool => "a boolean",
                        Kind::FloatList => "a list of numbers",
                    }
                )))
            }
        };
        self.values.insert(key.to_string(), value);
        self.explicit.insert(key.to_string());
        Ok(())
    }

    pub fn is_explicit(&self, key: &str) -> bool {
        self.explicit.contains(key)
    }

    fn get(&self, key: &str) -> &Value {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("no default for configuration key `{key}`"))
    }

    pub fn usize(&self, key: &str) -> usize {
        match self.get(key) {
            Value::Integer(i) => *i as usize,
            v => panic!("`{key}` holds {v}"),
        }
    }

    pub fn u64(&self, key: &str) -> u64 {
        self.usize(key) as u64
    }

    pub fn f64(&self, key: &str) -> f64 {
        match self.get(key) {
            Value::Float(f) => *f,
            v => panic!("`{key}` holds {v}"),
        }
    }

    pub fn str(&self, key: &str) -> &str {
        match self.get(key) {
            Value::String(s) => s,
            v => panic!("`{key}` holds {v}"),
        }
    }

    pub fn bool(&self, key: &str) -> bool {
        matches!(self.get(key), Value::Boolean(true))
    }

    pub fn floats(&self, key: &str) -> Vec<f64> {
        match self.get(key) {
            Value::Array(items) => items.iter().filter_map(Value::as_float).collect(),
            v => panic!("`{key}` holds {v}"),
        }
    }

    /// A section's keys (or a single key) with their current values.
    pub fn section(&self, prefix: &str) -> BTreeMap<String, Value> {
        self.values
            .iter()
            .filter(|(k, _)| {
                k.as_str() == prefix
                    || (k.starts_with(prefix) && k[prefix.len()..].starts_with('.'))
            })
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }
}

pub fn parse_float_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse::<f64>()
                .map_err(|_| format!("`{p}` is not a number"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_and_dotted_keys_flatten() {
        let cfg = Config::parse("run.seed = 7\n[priors]\ntau = 2\n").unwrap();
        assert_eq!(cfg.u64("run.seed"), 7);
        assert_eq!(cfg.f64("priors.tau"), 2.0);
        assert!(cfg.is_explicit("priors.tau"));
        assert!(!cfg.is_explicit("run.updates"));
        assert_eq!(cfg.usize("run.updates"), 10);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = Config::parse("world.n_hotspot = 3\n").unwrap_err();
        assert!(err.to_string().contains("world.n_hotspot"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn type_mismatch_is_named() {
        let err = Config::parse("run.updates = \"ten\"\n").unwrap_err();
        assert!(err.to_string().contains("run.updates"));
        assert!(Config::parse("run.updates = -1\n").is_err());
    }

    #[test]
    fn lambda_lists() {
        let cfg = Config::parse("sweep.lambdas = \"0.1, 1\"\n").unwrap();
        assert_eq!(cfg.floats("sweep.lambdas"), vec![0.1, 1.0]);
        let cfg = Config::parse("sweep.lambdas = [0.5, 1]\n").unwrap();
        assert_eq!(cfg.floats("sweep.lambdas"), vec![0.5, 1.0]);
        assert!(Config::parse("sweep.lambdas = \"a\"\n").is_err());
    }
}

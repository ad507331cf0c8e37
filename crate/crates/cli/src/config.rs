//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Command-line flags
//! override file values.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use optstop_core::catalog::{parse_policy_list, PolicySpec};
use optstop_core::curve::percentile;
use optstop_core::evaluation::{ExploreExploitConfig, DEFAULT_K_SET, DEFAULT_MIN_COUNT};
use optstop_core::io::{load_curves, CurveFormat};
use optstop_core::synthetic::{generate_synthetic, SyntheticParams};
use optstop_core::{CurveDataset, SuccessSpec, UnseenAction};

use crate::CliError;

const KEYS: &[&str] = &[
    "curves_path",
    "curves_format",
    "synthetic_n",
    "synthetic_horizon",
    "synthetic_seed",
    "a_max_min",
    "a_max_max",
    "lambda_min",
    "lambda_max",
    "noise_sd",
    "target",
    "target_percentile",
    "k_set",
    "buckets",
    "min_count",
    "epsilon",
    "folds",
    "trials",
    "cap",
    "master_seed",
    "fold_seed",
    "policies",
    "refit_period",
    "exploration_percentile",
    "unseen_action",
    "out",
    "overwrite",
];

/// Raw key/value pairs, file first, then overrides.
#[derive(Debug, Default, Clone)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("config line {}: expected `key = value`", i + 1))
            })?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(CliError::Config(format!(
                    "config line {}: unknown key `{key}`",
                    i + 1
                )));
            }
            if values
                .insert(key.to_string(), value.trim().to_string())
                .is_some()
            {
                return Err(CliError::Config(format!(
                    "config line {}: duplicate key `{key}`",
                    i + 1
                )));
            }
        }
        Ok(RawConfig { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        RawConfig::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        debug_assert!(KEYS.contains(&key));
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn remove(&mut self, key: &str) {
        self.values.remove(key);
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| CliError::Config(format!("`{key}`: cannot parse `{v}`")))
            })
            .transpose()
    }

    fn required<T: std::str::FromStr>(&self, key: &str) -> Result<T, CliError> {
        self.parsed(key)?
            .ok_or_else(|| CliError::Config(format!("`{key}` is required")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetSpec {
    Absolute(f64),
    Percentile(f64),
}

#[derive(Debug, Clone)]
pub enum DataSource {
    File(PathBuf, CurveFormat),
    Synthetic {
        n: usize,
        horizon: usize,
        params: SyntheticParams,
        seed: u64,
    },
}

impl DataSource {
    pub fn load(&self) -> Result<CurveDataset, CliError> {
        match self {
            DataSource::File(path, format) => Ok(load_curves(path, *format)?),
            DataSource::Synthetic {
                n,
                horizon,
                params,
                seed,
            } => Ok(generate_synthetic(*n, *horizon, params, *seed)?),
        }
    }
}

/// Typed experiment configuration. Seeds have no defaults.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    raw: RawConfig,
}

impl ExperimentConfig {
    pub fn new(raw: RawConfig) -> Self {
        ExperimentConfig { raw }
    }

    pub fn set_synthetic_shape(&mut self, n: Option<usize>, horizon: Option<usize>) {
        if let Some(n) = n {
            self.raw.set("synthetic_n", n);
        }
        if let Some(h) = horizon {
            self.raw.set("synthetic_horizon", h);
        }
    }

    pub fn data_source(&self) -> Result<DataSource, CliError> {
        let file = self.raw.get("curves_path");
        let synthetic_keys = [
            "synthetic_n",
            "synthetic_horizon",
            "synthetic_seed",
            "a_max_min",
            "a_max_max",
            "lambda_min",
            "lambda_max",
            "noise_sd",
        ];
        let has_synthetic = synthetic_keys.iter().any(|k| self.raw.get(k).is_some());
        match (file, has_synthetic) {
            (Some(_), true) => Err(CliError::Config(
                "give either `curves_path` or a synthetic block, not both".into(),
            )),
            (None, false) => Err(CliError::Config(
                "no data: set `curves_path` or `synthetic_n`/`synthetic_horizon`/`synthetic_seed`"
                    .into(),
            )),
            (Some(path), false) => {
                let path = PathBuf::from(path);
                let format = match self.raw.get("curves_format") {
                    Some(f) => f
                        .parse()
                        .map_err(|e: optstop_core::Error| CliError::Config(e.to_string()))?,
                    None => CurveFormat::from_path(&path),
                };
                Ok(DataSource::File(path, format))
            }
            (None, true) => {
                let d = SyntheticParams::default();
                let params = SyntheticParams {
                    a_max_min: self.raw.parsed("a_max_min")?.unwrap_or(d.a_max_min),
                    a_max_max: self.raw.parsed("a_max_max")?.unwrap_or(d.a_max_max),
                    lambda_min: self.raw.parsed("lambda_min")?.unwrap_or(d.lambda_min),
                    lambda_max: self.raw.parsed("lambda_max")?.unwrap_or(d.lambda_max),
                    noise_sd: self.raw.parsed("noise_sd")?.unwrap_or(d.noise_sd),
                };
                Ok(DataSource::Synthetic {
                    n: self.raw.required("synthetic_n")?,
                    horizon: self.raw.required("synthetic_horizon")?,
                    params,
                    seed: self.raw.required("synthetic_seed")?,
                })
            }
        }
    }

    pub fn target(&self) -> Result<TargetSpec, CliError> {
        match (
            self.raw.parsed("target")?,
            self.raw.parsed("target_percentile")?,
        ) {
            (Some(a), None) => Ok(TargetSpec::Absolute(a)),
            (None, Some(p)) => Ok(TargetSpec::Percentile(p)),
            (Some(_), Some(_)) => Err(CliError::Config(
                "give either `target` or `target_percentile`, not both".into(),
            )),
            (None, None) => Err(CliError::Config(
                "`target` or `target_percentile` is required".into(),
            )),
        }
    }

    /// Resolves the target against the dataset's final values.
    pub fn success_spec(&self, dataset: &CurveDataset) -> Result<SuccessSpec, CliError> {
        let value = match self.target()? {
            TargetSpec::Absolute(a) => a,
            TargetSpec::Percentile(p) => percentile(&dataset.final_values(), p)?,
        };
        Ok(SuccessSpec::new(value)?)
    }

    pub fn k_set(&self) -> Result<Vec<usize>, CliError> {
        match self.raw.get("k_set") {
            None => Ok(DEFAULT_K_SET.to_vec()),
            Some(list) => {
                let ks: Vec<usize> = list
                    .split(',')
                    .map(|k| {
                        k.trim()
                            .parse()
                            .map_err(|_| CliError::Config(format!("`k_set`: cannot parse `{k}`")))
                    })
                    .collect::<Result<_, _>>()?;
                if ks.is_empty() || ks.contains(&0) {
                    return Err(CliError::Config(
                        "`k_set` needs positive bucket counts".into(),
                    ));
                }
                Ok(ks)
            }
        }
    }

    pub fn buckets(&self) -> Result<Option<usize>, CliError> {
        self.raw.parsed("buckets")
    }

    pub fn min_count(&self) -> Result<usize, CliError> {
        Ok(self.raw.parsed("min_count")?.unwrap_or(DEFAULT_MIN_COUNT))
    }

    pub fn epsilon(&self) -> Result<f64, CliError> {
        Ok(self.raw.parsed("epsilon")?.unwrap_or(0.01))
    }

    pub fn folds(&self) -> Result<usize, CliError> {
        Ok(self.raw.parsed("folds")?.unwrap_or(5))
    }

    pub fn trials(&self) -> Result<usize, CliError> {
        Ok(self.raw.parsed("trials")?.unwrap_or(4000))
    }

    pub fn cap(&self) -> Result<Option<f64>, CliError> {
        self.raw.parsed("cap")
    }

    pub fn master_seed(&self) -> Result<u64, CliError> {
        self.raw.required("master_seed")
    }

    pub fn fold_seed(&self) -> Result<u64, CliError> {
        self.raw.required("fold_seed")
    }

    pub fn policies(&self) -> Result<Vec<PolicySpec>, CliError> {
        let list = self.raw.get("policies").unwrap_or("random");
        parse_policy_list(list).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn unseen_action(&self) -> Result<UnseenAction, CliError> {
        match self.raw.get("unseen_action") {
            None | Some("stop") => Ok(UnseenAction::Stop),
            Some("continue-as-deepest-ancestor") => Ok(UnseenAction::ContinueAsAncestor),
            Some(other) => Err(CliError::Config(format!(
                "`unseen_action`: unknown value `{other}`"
            ))),
        }
    }

    /// Settings for the online algorithms; needs `fold_seed` only when used.
    pub fn online(&self, needed: bool) -> Result<ExploreExploitConfig, CliError> {
        let d = ExploreExploitConfig::default();
        let fold_seed = if needed {
            self.fold_seed()?
        } else {
            self.raw.parsed("fold_seed")?.unwrap_or(0)
        };
        let config = ExploreExploitConfig {
            k_set: self.k_set()?,
            folds: self.folds()?,
            min_count: self.min_count()?,
            epsilon: self.epsilon()?,
            refit_period: self.raw.parsed("refit_period")?.unwrap_or(d.refit_period),
            exploration_percentile: self
                .raw
                .parsed("exploration_percentile")?
                .unwrap_or(d.exploration_percentile),
            fold_seed,
        };
        config
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(config)
    }

    pub fn out(&self) -> Option<PathBuf> {
        self.raw.get("out").map(PathBuf::from)
    }

    pub fn overwrite(&self) -> Result<bool, CliError> {
        Ok(self.raw.parsed("overwrite")?.unwrap_or(false))
    }
}

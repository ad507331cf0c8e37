//! Policies addressable by name: `random`, `fixed:<t>`, `luby`,
//! `above-median`, `above-median-algorithm`, `sh:<n>:<eta>:<R>`,
//! `hyperband:<R>:<eta>`, `optimal:<policy-file>`, `explore-exploit`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::baselines::{hyperband, successive_halving, BracketSpec, LubyPolicy, DEFAULT_ETA};
use crate::curve::{population_medians, CurveDataset, SuccessSpec};
use crate::error::{Error, Result};
use crate::evaluation::{above_median_algorithm, explore_exploit_policy, ExploreExploitConfig};
use crate::policy::FixedThreshold;
use crate::rules::{AboveMedianRule, FittedRule};
use crate::simulator::{restart_factory, RunSwitchingPolicy};

#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    Random,
    Fixed(usize),
    Luby,
    AboveMedian,
    AboveMedianAlgorithm,
    /// `None` fields fall back to eta = 3 and R = horizon.
    SuccessiveHalving {
        n: usize,
        eta: Option<usize>,
        max_budget: Option<usize>,
    },
    Hyperband {
        max_budget: Option<usize>,
        eta: Option<usize>,
    },
    Optimal(PathBuf),
    ExploreExploit,
}

fn parse_num(field: &str, what: &str, name: &str) -> Result<usize> {
    field.parse().map_err(|_| {
        Error::param(format!(
            "policy `{name}`: {what} `{field}` is not a non-negative integer"
        ))
    })
}

impl FromStr for PolicySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let name = s.trim();
        let (head, rest) = match name.split_once(':') {
            Some((h, r)) => (h, Some(r)),
            None => (name, None),
        };
        let fields: Vec<&str> = rest.map(|r| r.split(':').collect()).unwrap_or_default();
        let arity = |min: usize, max: usize| {
            if fields.len() < min || fields.len() > max {
                Err(Error::param(format!(
                    "policy `{name}`: wrong number of parameters"
                )))
            } else {
                Ok(())
            }
        };
        let spec = match head {
            "random" => {
                arity(0, 0)?;
                PolicySpec::Random
            }
            "fixed" => {
                arity(1, 1)?;
                PolicySpec::Fixed(parse_num(fields[0], "threshold", name)?)
            }
            "luby" => {
                arity(0, 0)?;
                PolicySpec::Luby
            }
            "above-median" => {
                arity(0, 0)?;
                PolicySpec::AboveMedian
            }
            "above-median-algorithm" => {
                arity(0, 0)?;
                PolicySpec::AboveMedianAlgorithm
            }
            "explore-exploit" => {
                arity(0, 0)?;
                PolicySpec::ExploreExploit
            }
            "sh" => {
                arity(1, 3)?;
                PolicySpec::SuccessiveHalving {
                    n: parse_num(fields[0], "n", name)?,
                    eta: fields
                        .get(1)
                        .map(|f| parse_num(f, "eta", name))
                        .transpose()?,
                    max_budget: fields.get(2).map(|f| parse_num(f, "R", name)).transpose()?,
                }
            }
            "hyperband" => {
                arity(0, 2)?;
                PolicySpec::Hyperband {
                    max_budget: fields
                        .first()
                        .map(|f| parse_num(f, "R", name))
                        .transpose()?,
                    eta: fields
                        .get(1)
                        .map(|f| parse_num(f, "eta", name))
                        .transpose()?,
                }
            }
            "optimal" => {
                let path = rest.filter(|r| !r.is_empty()).ok_or_else(|| {
                    Error::param("policy `optimal` needs a policy file: optimal:<path>")
                })?;
                PolicySpec::Optimal(PathBuf::from(path))
            }
            _ => return Err(Error::param(format!("unknown policy `{name}`"))),
        };
        Ok(spec)
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::Random => write!(f, "random"),
            PolicySpec::Fixed(t) => write!(f, "fixed:{t}"),
            PolicySpec::Luby => write!(f, "luby"),
            PolicySpec::AboveMedian => write!(f, "above-median"),
            PolicySpec::AboveMedianAlgorithm => write!(f, "above-median-algorithm"),
            PolicySpec::ExploreExploit => write!(f, "explore-exploit"),
            PolicySpec::SuccessiveHalving { n, eta, max_budget } => {
                write!(f, "sh:{n}")?;
                if let Some(e) = eta {
                    write!(f, ":{e}")?;
                }
                if let Some(r) = max_budget {
                    write!(f, ":{r}")?;
                }
                Ok(())
            }
            PolicySpec::Hyperband { max_budget, eta } => {
                write!(f, "hyperband")?;
                if let Some(r) = max_budget {
                    write!(f, ":{r}")?;
                }
                if let Some(e) = eta {
                    write!(f, ":{e}")?;
                }
                Ok(())
            }
            PolicySpec::Optimal(path) => write!(f, "optimal:{}", path.display()),
        }
    }
}

/// Parses a comma-separated policy list.
pub fn parse_policy_list(list: &str) -> Result<Vec<PolicySpec>> {
    let specs: Vec<PolicySpec> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    if specs.is_empty() {
        return Err(Error::param("policy list is empty"));
    }
    Ok(specs)
}

/// Reads a fitted policy file and checks it was trained for `spec`.
pub fn load_fitted_rule(path: &Path, spec: &SuccessSpec) -> Result<FittedRule> {
    let text = std::fs::read_to_string(path)?;
    let rule: FittedRule = serde_json::from_str(&text)?;
    rule.check_target(spec)?;
    Ok(rule)
}

pub type BoxedFactory = Box<dyn Fn() -> Box<dyn RunSwitchingPolicy> + Send + Sync>;

/// Builds a per-trial policy factory for `policy` on `dataset`.
pub fn build_factory(
    policy: &PolicySpec,
    dataset: &CurveDataset,
    spec: &SuccessSpec,
    online: &ExploreExploitConfig,
) -> Result<BoxedFactory> {
    let horizon = dataset.horizon();
    let factory: BoxedFactory = match policy {
        PolicySpec::Random => Box::new(restart_factory(FixedThreshold::never())),
        PolicySpec::Fixed(t) => Box::new(restart_factory(FixedThreshold::new(*t)?)),
        PolicySpec::Luby => {
            Box::new(|| Box::new(LubyPolicy::default()) as Box<dyn RunSwitchingPolicy>)
        }
        PolicySpec::AboveMedian => Box::new(restart_factory(AboveMedianRule::new(
            population_medians(dataset),
        )?)),
        PolicySpec::SuccessiveHalving { n, eta, max_budget } => {
            let bracket = BracketSpec::new(
                *n,
                eta.unwrap_or(DEFAULT_ETA),
                max_budget.unwrap_or(horizon),
            )?;
            Box::new(move || Box::new(successive_halving(bracket)) as Box<dyn RunSwitchingPolicy>)
        }
        PolicySpec::Hyperband { max_budget, eta } => {
            let template = hyperband(max_budget.unwrap_or(horizon), eta.unwrap_or(DEFAULT_ETA))?;
            Box::new(move || Box::new(template.clone()) as Box<dyn RunSwitchingPolicy>)
        }
        PolicySpec::Optimal(path) => Box::new(restart_factory(load_fitted_rule(path, spec)?)),
        PolicySpec::ExploreExploit => {
            let config = online.clone();
            explore_exploit_policy(config.clone())?;
            Box::new(move || {
                Box::new(explore_exploit_policy(config.clone()).expect("validated"))
                    as Box<dyn RunSwitchingPolicy>
            })
        }
        PolicySpec::AboveMedianAlgorithm => {
            let config = online.clone();
            above_median_algorithm(config.clone())?;
            Box::new(move || {
                Box::new(above_median_algorithm(config.clone()).expect("validated"))
                    as Box<dyn RunSwitchingPolicy>
            })
        }
    };
    Ok(factory)
}

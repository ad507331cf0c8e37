//! Python bindings for the optstop core library.

use std::path::PathBuf;

use optstop_core::baselines::{hyperband_brackets as core_brackets, luby_length, threshold_sweep};
use optstop_core::catalog::{build_factory, parse_policy_list, PolicySpec};
use optstop_core::curve::percentile;
use optstop_core::evaluation::{
    fit_quantile_rule, select_best_quantile_policy, CvReport, ExploreExploitConfig,
    DEFAULT_MIN_COUNT,
};
use optstop_core::io::{load_curves, write_jsonl, CurveFormat};
use optstop_core::rules::CurveRule;
use optstop_core::simulator::{default_cap, SimReport};
use optstop_core::synthetic::{generate_synthetic, strong_signal_benchmark, SyntheticParams};
use optstop_core::{
    curve_rule_stats, population_medians, simulate_time_to_success, Curve, CurveDataset,
    FittedRule, PolicyStats, SuccessSpec,
};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

create_exception!(optstop, OptstopError, PyException);

fn err(e: optstop_core::Error) -> PyErr {
    OptstopError::new_err(e.to_string())
}

/// Report JSON carries non-finite numbers as "inf", "-inf" or "nan"; they
/// come back to Python as floats.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| OptstopError::new_err(e.to_string()))?;
    let hook = py.eval(
        c"lambda d: {k: float(v) if v in ('inf', '-inf', 'nan') else v for k, v in d.items()}",
        None,
        None,
    )?;
    let kwargs = PyDict::new(py);
    kwargs.set_item("object_hook", hook)?;
    py.import("json")?
        .call_method("loads", (text,), Some(&kwargs))
}

fn spec(target: f64) -> PyResult<SuccessSpec> {
    SuccessSpec::new(target).map_err(err)
}

fn stats_dict<'py>(py: Python<'py>, s: &PolicyStats) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("q", s.q)?;
    d.set_item("c", s.c)?;
    d.set_item("ratio", s.ratio)?;
    d.set_item("expected_time", s.expected_time)?;
    Ok(d)
}

/// A set of learning curves sharing one horizon.
#[pyclass(frozen, module = "optstop")]
struct Dataset {
    inner: CurveDataset,
}

#[pymethods]
impl Dataset {
    /// Builds a dataset from per-curve value lists, with optional per-step costs.
    #[new]
    #[pyo3(signature = (values, costs=None, ids=None))]
    fn new(
        values: Vec<Vec<f64>>,
        costs: Option<Vec<Vec<f64>>>,
        ids: Option<Vec<String>>,
    ) -> PyResult<Self> {
        let n = values.len();
        if costs.as_ref().is_some_and(|c| c.len() != n)
            || ids.as_ref().is_some_and(|i| i.len() != n)
        {
            return Err(OptstopError::new_err(
                "values, costs and ids must have the same length",
            ));
        }
        let mut costs = costs.map(|c| c.into_iter());
        let curves = values
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                let id = ids
                    .as_ref()
                    .map_or_else(|| i.to_string(), |ids| ids[i].clone());
                Curve::new(id, v, costs.as_mut().and_then(Iterator::next))
            })
            .collect::<optstop_core::Result<Vec<_>>>()
            .map_err(err)?;
        Ok(Dataset {
            inner: CurveDataset::new(curves).map_err(err)?,
        })
    }

    /// Reads JSONL or CSV; the format follows the extension unless given.
    #[staticmethod]
    #[pyo3(signature = (path, format=None))]
    fn load(path: PathBuf, format: Option<&str>) -> PyResult<Self> {
        let format = match format {
            Some(f) => f.parse().map_err(err)?,
            None => CurveFormat::from_path(&path),
        };
        Ok(Dataset {
            inner: load_curves(&path, format).map_err(err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (n, horizon, seed, a_max_min=0.3, a_max_max=0.95, lambda_min=1.0, lambda_max=20.0, noise_sd=0.01))]
    #[allow(clippy::too_many_arguments)]
    fn synthetic(
        n: usize,
        horizon: usize,
        seed: u64,
        a_max_min: f64,
        a_max_max: f64,
        lambda_min: f64,
        lambda_max: f64,
        noise_sd: f64,
    ) -> PyResult<Self> {
        let params = SyntheticParams {
            a_max_min,
            a_max_max,
            lambda_min,
            lambda_max,
            noise_sd,
        };
        Ok(Dataset {
            inner: generate_synthetic(n, horizon, &params, seed).map_err(err)?,
        })
    }

    /// The 200 x 50 strong-signal benchmark.
    #[staticmethod]
    fn benchmark() -> Self {
        Dataset {
            inner: strong_signal_benchmark(),
        }
    }

    fn save_jsonl(&self, path: PathBuf) -> PyResult<()> {
        let file = std::fs::File::create(path).map_err(|e| err(e.into()))?;
        write_jsonl(std::io::BufWriter::new(file), &self.inner).map_err(err)
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn values(&self) -> Vec<Vec<f64>> {
        self.inner
            .curves()
            .iter()
            .map(|c| c.values.clone())
            .collect()
    }

    fn final_values(&self) -> Vec<f64> {
        self.inner.final_values()
    }

    fn medians(&self) -> Vec<f64> {
        population_medians(&self.inner)
    }

    /// Nearest-rank percentile of the final values, for use as a target.
    fn target_percentile(&self, p: f64) -> PyResult<f64> {
        percentile(&self.inner.final_values(), p).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(curves={}, horizon={})",
            self.inner.len(),
            self.inner.horizon()
        )
    }
}

/// A fitted stopping rule over quantile-discretized prefixes.
#[pyclass(frozen, module = "optstop")]
struct Policy {
    inner: FittedRule,
    #[pyo3(get)]
    buckets: usize,
}

#[pymethods]
impl Policy {
    #[getter]
    fn target(&self) -> f64 {
        self.inner.discretizer.trained_target().target
    }

    /// Exact success probability, cost and expected restart time on `dataset`.
    fn stats<'py>(&self, py: Python<'py>, dataset: &Dataset) -> PyResult<Bound<'py, PyDict>> {
        let spec = spec(self.target())?;
        stats_dict(py, &curve_rule_stats(&self.inner, &dataset.inner, &spec))
    }

    /// Whether a run with the given observed values should keep going.
    fn keep_going(&self, values: Vec<f64>) -> bool {
        let mut state = Default::default();
        let mut go = true;
        for v in values {
            go = self.inner.observe(&mut state, v);
        }
        go
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| OptstopError::new_err(e.to_string()))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: FittedRule =
            serde_json::from_str(text).map_err(|e| OptstopError::new_err(e.to_string()))?;
        let buckets = inner.discretizer.buckets();
        Ok(Policy { inner, buckets })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| err(e.into()))
    }

    fn __repr__(&self) -> String {
        format!("Policy(target={}, buckets={})", self.target(), self.buckets)
    }
}

/// Fits a stopping rule; `buckets=None` picks K from `k_set` by cross-validation.
#[pyfunction]
#[pyo3(signature = (dataset, target, buckets=None, k_set=vec![2, 3, 4], min_count=DEFAULT_MIN_COUNT, epsilon=0.01, folds=5, fold_seed=0))]
#[allow(clippy::too_many_arguments)]
fn fit(
    py: Python<'_>,
    dataset: &Dataset,
    target: f64,
    buckets: Option<usize>,
    k_set: Vec<usize>,
    min_count: usize,
    epsilon: f64,
    folds: usize,
    fold_seed: u64,
) -> PyResult<Policy> {
    let spec = spec(target)?;
    let data = &dataset.inner;
    py.detach(|| {
        let buckets = match buckets {
            Some(k) => k,
            None => {
                select_best_quantile_policy(
                    data, &spec, &k_set, folds, min_count, epsilon, fold_seed,
                )?
                .k_best
            }
        };
        let (inner, _) = fit_quantile_rule(data, &spec, buckets, min_count, epsilon)?;
        Ok(Policy { inner, buckets })
    })
    .map_err(err)
}

/// Expected time of every fixed restart threshold.
#[pyfunction]
fn sweep<'py>(py: Python<'py>, dataset: &Dataset, target: f64) -> PyResult<Bound<'py, PyAny>> {
    let ts: Vec<usize> = (1..=dataset.inner.horizon()).collect();
    let rows = threshold_sweep(&dataset.inner, &spec(target)?, &ts).map_err(err)?;
    to_py(py, &rows)
}

/// Monte Carlo time-to-success for each named policy (comma-separated or a list).
#[pyfunction]
#[pyo3(signature = (dataset, target, policies, trials=4000, seed=0, cap=None, fold_seed=0))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    dataset: &Dataset,
    target: f64,
    policies: Bound<'py, PyAny>,
    trials: usize,
    seed: u64,
    cap: Option<f64>,
    fold_seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let names: String = match policies.extract::<Vec<String>>() {
        Ok(list) if !policies.is_instance_of::<pyo3::types::PyString>() => list.join(","),
        _ => policies.extract()?,
    };
    let specs = parse_policy_list(&names).map_err(err)?;
    let spec = spec(target)?;
    let data = &dataset.inner;
    let online = ExploreExploitConfig {
        fold_seed,
        ..ExploreExploitConfig::default()
    };
    let cap = cap.unwrap_or_else(|| default_cap(data));
    let reports = py
        .detach(|| {
            let run = |p: &PolicySpec| {
                let f = build_factory(p, data, &spec, &online)?;
                simulate_time_to_success(f.as_ref(), data, &spec, trials, cap, seed)
            };
            let random = run(&PolicySpec::Random)?;
            specs
                .iter()
                .map(|p| Ok(SimReport::new(p.to_string(), &spec, &run(p)?, &random)))
                .collect::<optstop_core::Result<Vec<_>>>()
        })
        .map_err(err)?;
    to_py(py, &reports)
}

/// Cross-validated comparison of bucket counts.
#[pyfunction]
#[pyo3(signature = (dataset, target, k_set=vec![2, 3, 4], folds=5, min_count=DEFAULT_MIN_COUNT, epsilon=0.01, fold_seed=0))]
#[allow(clippy::too_many_arguments)]
fn cv<'py>(
    py: Python<'py>,
    dataset: &Dataset,
    target: f64,
    k_set: Vec<usize>,
    folds: usize,
    min_count: usize,
    epsilon: f64,
    fold_seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let spec = spec(target)?;
    let data = &dataset.inner;
    let report = py
        .detach(|| {
            let best = select_best_quantile_policy(
                data, &spec, &k_set, folds, min_count, epsilon, fold_seed,
            )?;
            CvReport::new(&best, data, &spec)
        })
        .map_err(err)?;
    to_py(py, &report)
}

/// Length of the i-th run (1-based) of the Luby restart schedule.
#[pyfunction]
fn luby(i: u64) -> PyResult<u64> {
    luby_length(i).map_err(err)
}

/// Hyperband brackets as `(n_s, r_s)` pairs, most aggressive first.
#[pyfunction]
#[pyo3(signature = (max_budget, eta=3))]
fn hyperband_brackets(max_budget: usize, eta: usize) -> PyResult<Vec<(usize, usize)>> {
    core_brackets(max_budget, eta).map_err(err)
}

#[pymodule]
fn optstop(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("OptstopError", m.py().get_type::<OptstopError>())?;
    m.add_class::<Dataset>()?;
    m.add_class::<Policy>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(cv, m)?)?;
    m.add_function(wrap_pyfunction!(luby, m)?)?;
    m.add_function(wrap_pyfunction!(hyperband_brackets, m)?)?;
    Ok(())
}

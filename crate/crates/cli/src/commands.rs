use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use optstop_core::baselines::threshold_sweep;
use optstop_core::catalog::{build_factory, PolicySpec};
use optstop_core::evaluation::{improvement_over_random, select_best_quantile_policy, CvReport};
use optstop_core::io::write_jsonl;
use optstop_core::num::float_or_inf;
use optstop_core::simulator::{default_cap, SimReport};
use optstop_core::{
    build_trie, find_stopping_rule, fit_discretizer, simulate_time_to_success, CurveDataset,
    FittedRule, SuccessSpec,
};
use serde::Serialize;

use crate::config::{DataSource, ExperimentConfig};
use crate::CliError;

fn open_output(path: &Path, overwrite: bool) -> Result<BufWriter<File>, CliError> {
    if path.exists() && !overwrite {
        return Err(CliError::Config(format!(
            "{} exists; pass --overwrite to replace it",
            path.display()
        )));
    }
    let file = File::create(path).map_err(optstop_core::Error::from)?;
    Ok(BufWriter::new(file))
}

/// Runs `body` against the configured output file, or stdout.
fn with_output(
    config: &ExperimentConfig,
    body: impl FnOnce(&mut dyn Write) -> Result<(), CliError>,
) -> Result<(), CliError> {
    match config.out() {
        Some(path) => {
            let mut w = open_output(&path, config.overwrite()?)?;
            body(&mut w)?;
            w.flush().map_err(optstop_core::Error::from)?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            body(&mut w)?;
            w.flush().map_err(optstop_core::Error::from)?;
        }
    }
    Ok(())
}

fn write_json_line<T: Serialize>(w: &mut dyn Write, value: &T) -> Result<(), CliError> {
    serde_json::to_writer(&mut *w, value).map_err(optstop_core::Error::from)?;
    writeln!(w).map_err(optstop_core::Error::from)?;
    Ok(())
}

fn load(config: &ExperimentConfig) -> Result<(CurveDataset, SuccessSpec), CliError> {
    let dataset = config.data_source()?.load()?;
    let spec = config.success_spec(&dataset)?;
    Ok((dataset, spec))
}

pub fn gen(config: &ExperimentConfig) -> Result<(), CliError> {
    let source = config.data_source()?;
    if !matches!(source, DataSource::Synthetic { .. }) {
        return Err(CliError::Config(
            "`gen` needs a synthetic block, not `curves_path`".into(),
        ));
    }
    let path = config
        .out()
        .ok_or_else(|| CliError::Config("`gen` needs an output path (--out)".into()))?;
    let dataset = source.load()?;
    let mut w = open_output(&path, config.overwrite()?)?;
    write_jsonl(&mut w, &dataset)?;
    w.flush().map_err(optstop_core::Error::from)?;
    Ok(())
}

#[derive(Serialize)]
struct FitReport {
    target: f64,
    buckets: usize,
    /// "fixed" when K was given, "cv" when chosen by cross-validation.
    k_selection: &'static str,
    q: f64,
    c: f64,
    #[serde(with = "float_or_inf")]
    ratio: f64,
    #[serde(with = "float_or_inf")]
    expected_time: f64,
    iterations: usize,
    lower: f64,
    upper: f64,
    continue_prefixes: usize,
    discretizer_nodes: usize,
    #[serde(with = "float_or_inf")]
    improvement_over_random: f64,
}

/// Fits the policy; writes the policy file to `out` (if any) and the report
/// line to stdout.
pub fn fit(config: &ExperimentConfig) -> Result<(), CliError> {
    let (dataset, spec) = load(config)?;
    let min_count = config.min_count()?;
    let epsilon = config.epsilon()?;
    let (buckets, k_selection) = match config.buckets()? {
        Some(k) => (k, "fixed"),
        None => {
            let best = select_best_quantile_policy(
                &dataset,
                &spec,
                &config.k_set()?,
                config.folds()?,
                min_count,
                epsilon,
                config.fold_seed()?,
            )?;
            (best.k_best, "cv")
        }
    };
    let discretizer = fit_discretizer(&dataset, &spec, buckets, min_count)?;
    let runs = discretizer.discretize_all(&dataset, &spec)?;
    let found = find_stopping_rule(&build_trie(&runs, None)?, epsilon)?;
    let rule = FittedRule {
        tree: found.rule.with_unseen_action(config.unseen_action()?),
        discretizer,
    };
    let report = FitReport {
        target: spec.target,
        buckets,
        k_selection,
        q: found.stats.q,
        c: found.stats.c,
        ratio: found.stats.ratio,
        expected_time: found.stats.expected_time,
        iterations: found.iterations,
        lower: found.lower,
        upper: found.upper,
        continue_prefixes: rule.tree.continue_count(),
        discretizer_nodes: rule.discretizer.node_count(),
        improvement_over_random: improvement_over_random(
            found.stats.expected_time,
            &dataset,
            &spec,
        )?,
    };
    if let Some(path) = config.out() {
        let mut w = open_output(&path, config.overwrite()?)?;
        serde_json::to_writer(&mut w, &rule).map_err(optstop_core::Error::from)?;
        writeln!(w).map_err(optstop_core::Error::from)?;
        w.flush().map_err(optstop_core::Error::from)?;
    }
    let stdout = io::stdout();
    write_json_line(&mut stdout.lock(), &report)
}

pub fn sweep(config: &ExperimentConfig) -> Result<(), CliError> {
    let (dataset, spec) = load(config)?;
    let ts: Vec<usize> = (1..=dataset.horizon()).collect();
    let rows = threshold_sweep(&dataset, &spec, &ts)?;
    with_output(config, |w| {
        let mut csv = csv::Writer::from_writer(w);
        for row in &rows {
            csv.serialize(row)
                .map_err(|e| optstop_core::Error::from(io::Error::other(e)))?;
        }
        csv.flush().map_err(optstop_core::Error::from)?;
        Ok(())
    })
}

pub fn simulate(config: &ExperimentConfig) -> Result<(), CliError> {
    let (dataset, spec) = load(config)?;
    let policies = config.policies()?;
    let needs_online = policies.iter().any(|p| {
        matches!(
            p,
            PolicySpec::ExploreExploit | PolicySpec::AboveMedianAlgorithm
        )
    });
    let online = config.online(needs_online)?;
    let trials = config.trials()?;
    let cap = config.cap()?.unwrap_or_else(|| default_cap(&dataset));
    let seed = config.master_seed()?;
    let run = |policy: &PolicySpec| -> Result<_, CliError> {
        let factory = build_factory(policy, &dataset, &spec, &online)?;
        Ok(simulate_time_to_success(
            factory.as_ref(),
            &dataset,
            &spec,
            trials,
            cap,
            seed,
        )?)
    };
    let random = run(&PolicySpec::Random)?;
    let reports = policies
        .iter()
        .map(|p| {
            let result = if *p == PolicySpec::Random {
                random
            } else {
                run(p)?
            };
            Ok(SimReport::new(p.to_string(), &spec, &result, &random))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    with_output(config, |w| {
        reports.iter().try_for_each(|r| write_json_line(w, r))
    })
}

pub fn cv(config: &ExperimentConfig) -> Result<(), CliError> {
    let (dataset, spec) = load(config)?;
    let folds = config.folds()?;
    if folds < 2 || folds > dataset.len() {
        return Err(CliError::Config(format!(
            "folds must lie in 2..={} for this dataset, got {folds}",
            dataset.len()
        )));
    }
    let best = select_best_quantile_policy(
        &dataset,
        &spec,
        &config.k_set()?,
        folds,
        config.min_count()?,
        config.epsilon()?,
        config.fold_seed()?,
    )?;
    let report = CvReport::new(&best, &dataset, &spec)?;
    with_output(config, |w| write_json_line(w, &report))
}

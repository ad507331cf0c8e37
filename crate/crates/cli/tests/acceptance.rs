//! Acceptance suite: one PASS/FAIL line per criterion.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use optstop_core::baselines::{best_threshold, luby_length, threshold_sweep};
use optstop_core::catalog::{build_factory, PolicySpec};
use optstop_core::curve::percentile;
use optstop_core::evaluation::{
    kfold_cv, select_best_quantile_policy, CvEstimate, ExploreExploitConfig,
};
use optstop_core::policy::delta_value;
use optstop_core::rules::{curve_rule_stats, AboveMedianRule};
use optstop_core::simulator::{default_cap, restart_factory, SimResult};
use optstop_core::synthetic::{
    generate_synthetic, strong_signal_benchmark, SyntheticParams, STRONG_SIGNAL_SEED,
};
use optstop_core::{
    brute_force_optimal, build_trie, delta, evaluate_rule, find_stopping_rule, fit_discretizer,
    population_medians, simulate_time_to_success, Curve, CurveDataset, DiscretizedRun, FittedRule,
    FixedThreshold, RunSwitchingPolicy, SuccessSpec, Token,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, &'static str, fn() -> Outcome);

const ORACLE_DATASETS: usize = 100;
const BRUTE_LIMIT: usize = 64;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Random token datasets: 1..=6 runs of length 1..=5, at least one success.
fn oracle_datasets(count: usize, seed: u64) -> Vec<Vec<DiscretizedRun>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let runs: Vec<DiscretizedRun> = (0..rng.random_range(1..=6))
            .map(|_| {
                let len = rng.random_range(1..=5);
                let mut tokens: Vec<Token> = (0..len)
                    .map(|_| Token::Bucket(rng.random_range(1..=3)))
                    .collect();
                if rng.random_bool(0.4) {
                    tokens[len - 1] = Token::Success;
                }
                let costs = if rng.random_bool(0.5) {
                    vec![1.0; len]
                } else {
                    (0..len)
                        .map(|_| [0.5, 1.0, 2.0][rng.random_range(0..3)])
                        .collect()
                };
                DiscretizedRun::new(tokens, costs, "").unwrap()
            })
            .collect();
        if runs.iter().any(DiscretizedRun::succeeded) {
            out.push(runs);
        }
    }
    out
}

fn ac1_oracle_optimality() -> Outcome {
    let start = Instant::now();
    let mut worst = f64::INFINITY;
    for (i, runs) in oracle_datasets(ORACLE_DATASETS, 1).iter().enumerate() {
        let bf = brute_force_optimal(runs, None, BRUTE_LIMIT).map_err(|e| e.to_string())?;
        let found = find_stopping_rule(&build_trie(runs, None).unwrap(), 0.01)
            .map_err(|e| e.to_string())?;
        let rel = found.stats.ratio / bf.r_star;
        worst = worst.min(rel);
        ensure(found.stats.ratio >= bf.r_star / 1.01, || {
            format!(
                "dataset {i}: ratio {} < r* {} / 1.01",
                found.stats.ratio, bf.r_star
            )
        })?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 10.0, || format!("took {secs:.2}s"))?;
    Ok(format!(
        "{ORACLE_DATASETS} datasets, min ratio/r* = {worst:.6}, {secs:.2}s"
    ))
}

type Factory = Box<dyn Fn() -> Box<dyn RunSwitchingPolicy> + Sync>;

/// Ten rules with positive success probability on the benchmark.
fn random_rules(data: &CurveDataset, spec: &SuccessSpec) -> Vec<(String, f64, Factory)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut rules: Vec<(String, f64, Factory)> = Vec::new();
    while rules.len() < 5 {
        let t = rng.random_range(1..=data.horizon());
        let rule = FixedThreshold::new(t).unwrap();
        let exact = curve_rule_stats(&rule, data, spec).expected_time;
        if exact.is_finite() {
            rules.push((format!("fixed:{t}"), exact, Box::new(restart_factory(rule))));
        }
    }
    let median = AboveMedianRule::new(population_medians(data)).unwrap();
    let exact = curve_rule_stats(&median, data, spec).expected_time;
    rules.push((
        "above-median".into(),
        exact,
        Box::new(restart_factory(median)),
    ));
    while rules.len() < 10 {
        let k = rng.random_range(2..=4);
        let disc = fit_discretizer(data, spec, k, 4).unwrap();
        let trie = build_trie(&disc.discretize_all(data, spec).unwrap(), None).unwrap();
        let r = rng.random_range(0.0..0.03);
        let (_, tree) = delta(&trie, r);
        let rule = FittedRule {
            tree,
            discretizer: disc,
        };
        let exact = curve_rule_stats(&rule, data, spec).expected_time;
        if exact.is_finite() {
            rules.push((
                format!("tree(K={k},r={r:.4})"),
                exact,
                Box::new(restart_factory(rule)),
            ));
        }
    }
    rules
}

fn ac2_restart_identity() -> Outcome {
    let start = Instant::now();
    let data = strong_signal_benchmark();
    let spec = SuccessSpec::new(percentile(&data.final_values(), 90.0).unwrap()).unwrap();
    let mut worst: f64 = 0.0;
    for (i, (name, exact, factory)) in random_rules(&data, &spec).into_iter().enumerate() {
        let sim = simulate_time_to_success(
            factory.as_ref(),
            &data,
            &spec,
            100_000,
            default_cap(&data),
            100 + i as u64,
        )
        .map_err(|e| e.to_string())?;
        let z = (sim.mean_time - exact).abs() / sim.std_error;
        worst = worst.max(z);
        ensure(sim.censored == 0 && z <= 3.0, || {
            format!(
                "{name}: mean {} vs exact {exact} ({z:.2} se, {} censored)",
                sim.mean_time, sim.censored
            )
        })?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.2}s"))?;
    Ok(format!(
        "10 rules x 1e5 trials, max |mean - c/q| = {worst:.2} se, {secs:.1}s"
    ))
}

fn ac3_sign_test() -> Outcome {
    let grid: Vec<f64> = (0..50).map(|i| i as f64 * 0.04).collect();
    for (i, runs) in oracle_datasets(ORACLE_DATASETS, 1).iter().enumerate() {
        let trie = build_trie(runs, None).unwrap();
        let r_star = brute_force_optimal(runs, None, BRUTE_LIMIT)
            .map_err(|e| e.to_string())?
            .r_star;
        let below = delta_value(&trie, 0.9 * r_star);
        let above = delta_value(&trie, 1.1 * r_star);
        ensure(below > 0.0 && above < 0.0, || {
            format!("dataset {i}: delta(0.9r*) = {below}, delta(1.1r*) = {above}")
        })?;
        let at_zero = delta_value(&trie, 0.0);
        ensure(at_zero == trie.total_success_mass(), || {
            format!(
                "dataset {i}: delta(0) = {at_zero} != {}",
                trie.total_success_mass()
            )
        })?;
        let values: Vec<f64> = grid.iter().map(|&r| delta_value(&trie, r)).collect();
        ensure(values.windows(2).all(|w| w[1] <= w[0]), || {
            format!("dataset {i}: delta increases on the grid")
        })?;
    }
    Ok(format!(
        "{ORACLE_DATASETS} datasets: sign at r*(1+-0.1), delta(0) exact, monotone on 50 points"
    ))
}

fn ac4_lower_bound() -> Outcome {
    let params = SyntheticParams {
        noise_sd: 0.02,
        ..SyntheticParams::default()
    };
    let data = generate_synthetic(6, 5, &params, 4).unwrap();
    let spec = SuccessSpec::new(percentile(&data.final_values(), 70.0).unwrap()).unwrap();
    // K = number of curves with distinct values keeps every prefix apart
    let disc = fit_discretizer(&data, &spec, data.len(), 1).unwrap();
    let runs = disc.discretize_all(&data, &spec).unwrap();
    let mut seen = std::collections::BTreeSet::new();
    for (run, curve) in runs.iter().zip(data.curves()) {
        for t in 1..=run.len() {
            let key = (
                run.tokens[..t].to_vec(),
                curve.values[..t]
                    .iter()
                    .map(|v| v.to_bits())
                    .collect::<Vec<_>>(),
            );
            seen.insert(key);
        }
    }
    let prefixes: std::collections::BTreeSet<_> = seen.iter().map(|(t, _)| t.clone()).collect();
    ensure(prefixes.len() == seen.len(), || {
        "discretization merges distinct raw prefixes".into()
    })?;
    let bf = brute_force_optimal(&runs, None, BRUTE_LIMIT).map_err(|e| e.to_string())?;
    let bound = 1.0 / bf.r_star;

    let dir = tempfile::tempdir().unwrap();
    let policy_path = dir.path().join("optimal.json");
    let found = find_stopping_rule(&build_trie(&runs, None).unwrap(), 0.01).unwrap();
    let fitted = FittedRule {
        tree: found.rule,
        discretizer: disc,
    };
    std::fs::write(&policy_path, serde_json::to_string(&fitted).unwrap()).unwrap();

    let online = ExploreExploitConfig {
        fold_seed: 0,
        ..ExploreExploitConfig::default()
    };
    let mut names: Vec<String> = vec![
        "random".into(),
        "luby".into(),
        "above-median".into(),
        "sh:3:3:5".into(),
        "sh:6:2:5".into(),
        "sh:9:3:5".into(),
        "hyperband".into(),
        "hyperband:5:2".into(),
        "explore-exploit".into(),
        "above-median-algorithm".into(),
        format!("optimal:{}", policy_path.display()),
    ];
    names.extend((1..=data.horizon()).map(|t| format!("fixed:{t}")));
    let mut tightest = f64::INFINITY;
    for name in &names {
        let policy: PolicySpec = name.parse().unwrap();
        let factory = build_factory(&policy, &data, &spec, &online).map_err(|e| e.to_string())?;
        let sim: SimResult = simulate_time_to_success(
            factory.as_ref(),
            &data,
            &spec,
            100_000,
            default_cap(&data),
            7,
        )
        .map_err(|e| e.to_string())?;
        if sim.censored == sim.trials {
            // never succeeds within the cap: an infinite mean respects any bound
            continue;
        }
        let floor = bound * (1.0 - 3.0 * sim.relative_std_error());
        tightest = tightest.min(sim.mean_time / bound);
        ensure(sim.mean_time >= floor, || {
            format!(
                "{name}: mean {} below 1/r* = {bound} (floor {floor})",
                sim.mean_time
            )
        })?;
    }
    Ok(format!(
        "{} policies x 1e5 trials, 1/r* = {bound:.4}, min mean/(1/r*) = {tightest:.4}",
        names.len()
    ))
}

fn ac5_estimators() -> Outcome {
    let e = CvEstimate::from_pairs(&[(0.1, 1.0), (0.9, 1.0)]);
    ensure(e.low_variance == 2.0, || {
        format!("low_variance = {}", e.low_variance)
    })?;
    ensure(e.naive == 50.0 / 9.0, || {
        format!("naive = {} vs 50/9 = {}", e.naive, 50.0 / 9.0)
    })?;

    let rows: Vec<Curve> = vec![
        Curve::unit("a", vec![0.2, 0.95]).unwrap(),
        Curve::unit("b", vec![0.3, 0.6, 0.97]).unwrap(),
        Curve::unit("c", vec![0.1, 0.92]).unwrap(),
        Curve::unit("d", vec![0.4, 0.5, 0.93]).unwrap(),
        Curve::unit("e", vec![0.2, 0.3, 0.4]).unwrap(),
    ];
    let data = CurveDataset::new(rows).unwrap();
    let spec = SuccessSpec::new(0.9).unwrap();
    let loo = kfold_cv(&data, &spec, 2, data.len(), 1, 0.01, 5).map_err(|e| e.to_string())?;
    ensure(loo.naive == f64::INFINITY, || {
        format!("leave-one-out naive = {}", loo.naive)
    })?;
    ensure(loo.low_variance.is_finite(), || {
        format!("leave-one-out low_variance = {}", loo.low_variance)
    })?;
    Ok(format!(
        "naive = 50/9, low_variance = 2; leave-one-out naive = inf, low_variance = {:.4}",
        loo.low_variance
    ))
}

fn ac6_luby() -> Outcome {
    let expected = [1, 1, 2, 1, 1, 2, 4, 1, 1, 2, 1, 1, 2, 4, 8, 1];
    let got: Vec<u64> = (1..=16).map(|i| luby_length(i).unwrap()).collect();
    ensure(got == expected, || format!("got {got:?}"))?;
    Ok("positions 1..16 = 1,1,2,1,1,2,4,1,1,2,1,1,2,4,8,1".into())
}

const REL: f64 = 1e-12;

fn ac7_dominance() -> Outcome {
    let mut checked = 0;
    for (i, runs) in oracle_datasets(ORACLE_DATASETS, 3).iter().enumerate() {
        let found = find_stopping_rule(&build_trie(runs, None).unwrap(), 0.01).unwrap();
        let horizon = runs.iter().map(DiscretizedRun::len).max().unwrap();
        let best_fixed = (1..=horizon)
            .map(|t| {
                evaluate_rule(&FixedThreshold::new(t).unwrap(), runs, None)
                    .unwrap()
                    .expected_time
            })
            .fold(f64::INFINITY, f64::min);
        let random = evaluate_rule(&FixedThreshold::never(), runs, None)
            .unwrap()
            .expected_time;
        let opt = found.stats.expected_time;
        ensure(
            opt <= best_fixed * (1.0 + REL) && best_fixed <= random,
            || {
                format!(
                    "token dataset {i}: optimal {opt}, best fixed {best_fixed}, random {random}"
                )
            },
        )?;
        checked += 1;
    }
    for seed in 0..20u64 {
        let data = generate_synthetic(40, 12, &SyntheticParams::default(), 1000 + seed).unwrap();
        let spec = SuccessSpec::new(percentile(&data.final_values(), 80.0).unwrap()).unwrap();
        for k in [2, 3, 4] {
            let disc = fit_discretizer(&data, &spec, k, 1).unwrap();
            let runs = disc.discretize_all(&data, &spec).unwrap();
            let found = find_stopping_rule(&build_trie(&runs, None).unwrap(), 0.01).unwrap();
            let rule = FittedRule {
                tree: found.rule,
                discretizer: disc,
            };
            let opt = curve_rule_stats(&rule, &data, &spec).expected_time;
            let ts: Vec<usize> = (1..=data.horizon()).collect();
            let best_fixed = best_threshold(&threshold_sweep(&data, &spec, &ts).unwrap())
                .unwrap()
                .expected_time;
            let random = curve_rule_stats(&FixedThreshold::never(), &data, &spec).expected_time;
            ensure(
                opt <= best_fixed * (1.0 + REL) && best_fixed <= random,
                || {
                    format!("curve dataset seed {seed} K {k}: optimal {opt}, best fixed {best_fixed}, random {random}")
                },
            )?;
            checked += 1;
        }
    }
    Ok(format!(
        "{checked} datasets: optimal <= best fixed threshold <= random"
    ))
}

// Frozen from the generator at the published seed; they change only if the
// generator or the fitting pipeline changes.
const FIXTURE_TARGET: f64 = 0.8738721782508629;
const FIXTURE_K_BEST: usize = 2;
const FIXTURE_HELDOUT_QUANTILE: f64 = 81.14285714285712;
const FIXTURE_HELDOUT_FIXED: f64 = 521.5;
const FIXTURE_HELDOUT_MEDIAN: f64 = 160.5625;
const FIXTURE_HELDOUT_RANDOM: f64 = 590.5;

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * b.abs()
}

fn ac8_strong_signal() -> Outcome {
    let train = strong_signal_benchmark();
    let heldout =
        generate_synthetic(200, 50, &SyntheticParams::default(), STRONG_SIGNAL_SEED + 1).unwrap();
    let spec = SuccessSpec::new(percentile(&train.final_values(), 90.0).unwrap()).unwrap();
    let best = select_best_quantile_policy(&train, &spec, &[2, 3, 4], 5, 4, 0.01, 0)
        .map_err(|e| e.to_string())?;
    let ts: Vec<usize> = (1..=train.horizon()).collect();
    let fixed = FixedThreshold::new(
        best_threshold(&threshold_sweep(&train, &spec, &ts).unwrap())
            .unwrap()
            .t,
    )
    .unwrap();
    let median = AboveMedianRule::new(population_medians(&train)).unwrap();

    let exact_q = curve_rule_stats(&best.rule, &heldout, &spec).expected_time;
    let exact_f = curve_rule_stats(&fixed, &heldout, &spec).expected_time;
    let exact_m = curve_rule_stats(&median, &heldout, &spec).expected_time;
    let exact_r = curve_rule_stats(&FixedThreshold::never(), &heldout, &spec).expected_time;

    let trials = 20_000;
    let cap = default_cap(&heldout);
    let sim = |f: &(dyn Fn() -> Box<dyn RunSwitchingPolicy> + Sync)| {
        simulate_time_to_success(f, &heldout, &spec, trials, cap, 8).unwrap()
    };
    let q = sim(&restart_factory(best.rule.clone()));
    let f = sim(&restart_factory(fixed));
    let m = sim(&restart_factory(median));
    let beats = |other: &SimResult| {
        other.mean_time - q.mean_time > 3.0 * (other.std_error.powi(2) + q.std_error.powi(2)).sqrt()
    };
    ensure(beats(&f), || {
        format!(
            "quantile {} +- {} vs fixed {} +- {}",
            q.mean_time, q.std_error, f.mean_time, f.std_error
        )
    })?;
    ensure(beats(&m), || {
        format!(
            "quantile {} +- {} vs above-median {} +- {}",
            q.mean_time, q.std_error, m.mean_time, m.std_error
        )
    })?;

    ensure(
        spec.target == FIXTURE_TARGET && best.k_best == FIXTURE_K_BEST,
        || format!("fixture drift: target {}, K {}", spec.target, best.k_best),
    )?;
    for (name, got, want) in [
        ("quantile", exact_q, FIXTURE_HELDOUT_QUANTILE),
        ("fixed", exact_f, FIXTURE_HELDOUT_FIXED),
        ("above-median", exact_m, FIXTURE_HELDOUT_MEDIAN),
        ("random", exact_r, FIXTURE_HELDOUT_RANDOM),
    ] {
        ensure(rel_close(got, want), || {
            format!("fixture drift: held-out {name} {got} vs {want}")
        })?;
    }
    Ok(format!(
        "held-out mean time: quantile {:.1}+-{:.1}, fixed {:.1}+-{:.1}, above-median {:.1}+-{:.1}; \
         improvement over random {:.2}x, over fixed {:.2}x, over above-median {:.2}x",
        q.mean_time,
        q.std_error,
        f.mean_time,
        f.std_error,
        m.mean_time,
        m.std_error,
        exact_r / exact_q,
        exact_f / exact_q,
        exact_m / exact_q
    ))
}

fn run_cli(args: &[&str], dir: &Path, threads: Option<&str>) -> Result<Vec<u8>, String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_optstop"));
    cmd.args(args).current_dir(dir);
    if let Some(t) = threads {
        cmd.env("RAYON_NUM_THREADS", t);
    }
    let out = cmd.output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!(
            "`optstop {}` failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        )
    })?;
    Ok(out.stdout)
}

fn ac9_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("exp.cfg"),
        "curves_path = curves.jsonl\ntarget_percentile = 90\nmaster_seed = 11\nfold_seed = 3\ntrials = 400\n\
         policies = random,fixed:20,luby,above-median,sh:9:3:30,hyperband,explore-exploit,above-median-algorithm,optimal:policy.json\n",
    )
    .unwrap();
    let mut checked = 0;
    let files = |name: &str| std::fs::read(d.join(name)).unwrap();
    let mut gens = Vec::new();
    for _ in 0..2 {
        run_cli(
            &[
                "gen",
                "--n",
                "60",
                "--horizon",
                "30",
                "--seed",
                "5",
                "--out",
                "curves.jsonl",
                "--overwrite",
            ],
            d,
            None,
        )?;
        gens.push(files("curves.jsonl"));
    }
    ensure(gens[0] == gens[1], || "gen output differs".into())?;
    checked += 1;
    let mut fits = Vec::new();
    for _ in 0..2 {
        let report = run_cli(
            &[
                "fit",
                "--config",
                "exp.cfg",
                "--out",
                "policy.json",
                "--overwrite",
            ],
            d,
            None,
        )?;
        fits.push((report, files("policy.json")));
    }
    ensure(fits[0] == fits[1], || "fit output differs".into())?;
    checked += 1;
    for cmd in ["sweep", "cv"] {
        let a = run_cli(&[cmd, "--config", "exp.cfg"], d, None)?;
        let b = run_cli(&[cmd, "--config", "exp.cfg"], d, None)?;
        ensure(a == b && !a.is_empty(), || format!("{cmd} output differs"))?;
        checked += 1;
    }
    let a = run_cli(&["simulate", "--config", "exp.cfg"], d, Some("1"))?;
    let b = run_cli(&["simulate", "--config", "exp.cfg"], d, Some("4"))?;
    let c = run_cli(&["simulate", "--config", "exp.cfg"], d, Some("4"))?;
    ensure(a == b && b == c && !a.is_empty(), || {
        "simulate output differs across runs or thread counts".into()
    })?;
    checked += 1;
    Ok(format!(
        "{checked} commands byte-identical on rerun; simulate identical at 1 and 4 threads"
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("AC1", "oracle optimality", ac1_oracle_optimality),
        (
            "AC2",
            "restart expected time identity",
            ac2_restart_identity,
        ),
        ("AC3", "delta sign test", ac3_sign_test),
        ("AC4", "lower bound for every baseline", ac4_lower_bound),
        (
            "AC5",
            "cross-validation estimator arithmetic",
            ac5_estimators,
        ),
        ("AC6", "Luby sequence", ac6_luby),
        ("AC7", "dominance on training data", ac7_dominance),
        ("AC8", "strong-signal benchmark", ac8_strong_signal),
        ("AC9", "CLI determinism", ac9_determinism),
    ];
    let mut failed = 0;
    for (id, title, check) in criteria {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("{id} PASS {title}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("{id} FAIL {title}: {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

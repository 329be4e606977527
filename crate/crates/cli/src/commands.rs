//! Subcommand implementations. Every command computes all of its results
//! before writing anything, then writes each file atomically and finishes
//! with the manifest.

use crate::config::{RunConfig, DEFAULT_RUNS, DEFAULT_STEPS};
use crate::error::CliError;
use crate::output::{
    default_out, records_csv, sibling, write_atomic, write_csv, write_json, Manifest, SeedRecord,
    Table, Versions,
};
use crate::Command;
use agentsim_core::calibrate::{calibrate_b, CalibrationError, CalibrationSpec};
use agentsim_core::montecarlo::{compensated_sum, estimate_r0, mean_variance, run_sir_ensemble, EnsembleSpec, PeakStats};
use agentsim_core::ode::{integrate_sir, OdeSirParams};
use agentsim_core::sir::run_epidemic_with;
use agentsim_core::stats::{
    autocov, classify_equilibrium, ergodicity_diagnostic, runs_test, EquilibriumReport,
    ErgodicityDiagnostic, RunsTest,
};
use agentsim_core::{OrderPolicy, RngStream, SeedSpec};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub fn execute(command: &Command) -> Result<(), CliError> {
    let started = Instant::now();
    let mut cfg = command.config()?;
    let name = command.name();
    let (seed, outputs, manifest_path) = match name {
        "simulate" => simulate(&mut cfg)?,
        "ensemble" => ensemble(&mut cfg)?,
        "calibrate" => calibrate(&mut cfg)?,
        "analyze" => analyze(&mut cfg)?,
        "ode" => ode(&mut cfg)?,
        _ => unreachable!("clap only yields known subcommands"),
    };
    let manifest = Manifest {
        command: name,
        config: &cfg,
        seed,
        versions: Versions::current(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
    };
    write_json(&manifest_path, &manifest)
}

type Done = (Option<SeedRecord>, Vec<PathBuf>, PathBuf);

fn workers(cfg: &RunConfig) -> Result<Option<usize>, CliError> {
    match cfg.workers {
        Some(0) => Err(CliError::config_key("workers", "command line or config file", "workers must be at least 1")),
        w => Ok(w),
    }
}

fn seed_record(cfg: &mut RunConfig) -> (u64, SeedRecord) {
    let (value, source) = cfg.resolve_seed();
    (value, SeedRecord { value, source })
}

fn sir_table(times: &[f64], counts: impl Iterator<Item = [f64; 3]>) -> Table {
    let mut t = Table::new(vec!["t".into(), "S".into(), "I".into(), "R".into()]);
    for (&time, c) in times.iter().zip(counts) {
        t.rows.push(vec![time, c[0], c[1], c[2]]);
    }
    t
}

fn simulate(cfg: &mut RunConfig) -> Result<Done, CliError> {
    let params = cfg.sir_params(true)?;
    let steps = *cfg.steps.get_or_insert(DEFAULT_STEPS);
    let policy = *cfg.policy.get_or_insert(OrderPolicy::Fixed);
    let (seed, record) = seed_record(cfg);
    let out = cfg.out.get_or_insert_with(|| default_out("run.csv")).clone();

    let run = run_epidemic_with(&params, steps, SeedSpec::new(seed, 0), policy).map_err(CliError::run)?;

    let counts = run.counts.iter().map(|c| c.map(|v| v as f64));
    write_csv(&out, &sir_table(&run.times, counts))?;
    let infections = sibling(&out, "infections.csv");
    write_atomic(
        &infections,
        &records_csv(&run.records, &["infectee", "infector", "time"]),
    )?;
    let mut outputs = vec![out.clone(), infections];
    if let Some(snap) = &cfg.snapshot {
        let json = run.final_state.to_json_pretty().map_err(CliError::run)?;
        write_atomic(snap, format!("{json}\n").as_bytes())?;
        outputs.push(snap.clone());
    }
    Ok((Some(record), outputs, sibling(&out, "manifest.json")))
}

#[derive(Serialize)]
struct R0Summary {
    mean: f64,
    std_error: f64,
    runs: usize,
}

#[derive(Serialize)]
struct FinalSize {
    mean: f64,
    variance: f64,
    min: usize,
    max: usize,
}

#[derive(Serialize)]
struct EnsembleSummary {
    runs: usize,
    steps: usize,
    seed: u64,
    b: f64,
    r0_estimate: R0Summary,
    extinction_fraction: f64,
    peak: PeakStats,
    final_size: FinalSize,
}

fn ensemble(cfg: &mut RunConfig) -> Result<Done, CliError> {
    let params = cfg.sir_params(true)?;
    let steps = *cfg.steps.get_or_insert(DEFAULT_STEPS);
    let policy = *cfg.policy.get_or_insert(OrderPolicy::Fixed);
    let runs = *cfg.runs.get_or_insert(DEFAULT_RUNS);
    let workers = workers(cfg)?;
    let (seed, record) = seed_record(cfg);
    let dir = cfg.out.get_or_insert_with(|| default_out("ensemble")).clone();

    let spec = EnsembleSpec::new(runs, steps, seed).policy(policy).workers(workers);
    let ens = run_sir_ensemble(&params, &spec).map_err(CliError::run)?;
    let r0 = estimate_r0(&params, runs, seed, workers).map_err(CliError::run)?;

    let sizes: Vec<f64> = ens.final_sizes().iter().map(|&s| s as f64).collect();
    let (size_mean, size_var) = mean_variance(&sizes);
    let summary = EnsembleSummary {
        runs,
        steps,
        seed,
        b: params.b,
        r0_estimate: R0Summary {
            mean: r0.mean,
            std_error: r0.std_error,
            runs,
        },
        extinction_fraction: ens.extinction_fraction(),
        peak: ens.peak_stats(),
        final_size: FinalSize {
            mean: size_mean,
            variance: size_var,
            min: ens.final_sizes().into_iter().min().unwrap_or(0),
            max: ens.final_sizes().into_iter().max().unwrap_or(0),
        },
    };

    let res = &ens.result;
    let mut mean = Table::new(
        ["t", "S_mean", "I_mean", "R_mean", "S_var", "I_var", "R_var"]
            .map(String::from)
            .to_vec(),
    );
    for ((&t, m), v) in res.times.iter().zip(&res.mean).zip(&res.variance) {
        let mut row = vec![t];
        row.extend(m);
        row.extend(v);
        mean.rows.push(row);
    }

    let mut outputs = Vec::with_capacity(runs + 2);
    let width = runs.saturating_sub(1).to_string().len().max(5);
    for (i, run) in ens.epidemics.iter().enumerate() {
        let path = dir.join("runs").join(format!("run_{i:0width$}.csv"));
        let counts = run.counts.iter().map(|c| c.map(|v| v as f64));
        write_csv(&path, &sir_table(&run.times, counts))?;
        outputs.push(path);
    }
    let mean_path = dir.join("mean.csv");
    write_csv(&mean_path, &mean)?;
    let summary_path = dir.join("summary.json");
    write_json(&summary_path, &summary)?;
    outputs.extend([mean_path, summary_path]);
    Ok((Some(record), outputs, dir.join("manifest.json")))
}

#[derive(Serialize)]
struct CalibrationReport<'a> {
    target_r0: f64,
    #[serde(flatten)]
    result: &'a agentsim_core::calibrate::Calibration,
}

fn calibrate(cfg: &mut RunConfig) -> Result<Done, CliError> {
    let params = cfg.sir_params(false)?;
    let target = RunConfig::require(&cfg.target_r0, "target_r0")?;
    let runs = *cfg.runs.get_or_insert(DEFAULT_RUNS);
    let b_min = *cfg.b_min.get_or_insert(0.0);
    let b_max = *cfg.b_max.get_or_insert(0.2);
    let workers = workers(cfg)?;
    let (seed, record) = seed_record(cfg);
    let mut spec = CalibrationSpec::new(target, b_min, b_max, runs, seed);
    spec.tolerance = *cfg.tol.get_or_insert(spec.tolerance);
    spec.max_evaluations = *cfg.max_evaluations.get_or_insert(spec.max_evaluations);
    spec.workers = workers;
    let out = cfg.out.get_or_insert_with(|| default_out("calib.json")).clone();

    let result = calibrate_b(&spec, &params).map_err(|e| match e {
        CalibrationError::Spec(m) => CliError::config(m),
        CalibrationError::BracketFailure { target, evaluations } => {
            let grid: Vec<String> = evaluations
                .iter()
                .map(|e| format!("{}:{:.4}", e.b, e.estimate))
                .collect();
            CliError::run(format!(
                "target R0 {target} is not bracketed by the grid over [{b_min}, {b_max}] (b:estimate {})",
                grid.join(" ")
            ))
        }
        other => CliError::run(other),
    })?;
    write_json(
        &out,
        &CalibrationReport {
            target_r0: target,
            result: &result,
        },
    )?;
    Ok((Some(record), vec![out.clone()], sibling(&out, "manifest.json")))
}

/// Reads one named numeric column from a CSV with a header row.
pub fn read_column(path: &Path, column: &str) -> Result<Vec<f64>, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
    let headers = rdr.headers().map_err(|e| CliError::io(path, e))?.clone();
    let idx = headers.iter().position(|h| h == column).ok_or_else(|| {
        CliError::input(format!(
            "{}: no column `{column}` (have: {})",
            path.display(),
            headers.iter().collect::<Vec<_>>().join(", ")
        ))
    })?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::io(path, e))?;
        let cell = rec.get(idx).unwrap_or("");
        let v: f64 = cell.trim().parse().map_err(|_| {
            CliError::input(format!(
                "{}: row {} column `{column}`: `{cell}` is not a number",
                path.display(),
                row + 2
            ))
        })?;
        out.push(v);
    }
    Ok(out)
}

#[derive(Serialize)]
struct AutocovReport {
    /// `autocov[k - 1]` is the lag-`k` autocovariance.
    autocov: Vec<f64>,
    ergodicity: ErgodicityDiagnostic,
    permutations: usize,
}

#[derive(Serialize)]
struct AnalysisReport {
    input: PathBuf,
    column: String,
    n: usize,
    mean: f64,
    equilibrium: EquilibriumReport,
    /// Runs test over the whole series; absent when it cannot be computed.
    runs_test: Option<RunsTest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    runs_test_error: Option<String>,
    autocovariance: AutocovReport,
}

fn analyze(cfg: &mut RunConfig) -> Result<Done, CliError> {
    let input = RunConfig::require(&cfg.input, "in")?;
    let column = cfg.column.get_or_insert_with(|| "I".into()).clone();
    let window = *cfg.window.get_or_insert(30);
    let alpha = *cfg.alpha.get_or_insert(0.05);
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::config_key("alpha", "command line or config file", "alpha must lie in (0, 1)"));
    }
    let series = read_column(&input, &column)?;
    let n = series.len();
    if n < 2 {
        return Err(CliError::input(format!("{}: need at least two values", input.display())));
    }
    let max_lag = *cfg.max_lag.get_or_insert((n / 4).clamp(1, 20));
    let permutations = *cfg.permutations.get_or_insert(200);
    let (seed, record) = seed_record(cfg);
    let out = cfg.out.get_or_insert_with(|| default_out("report.json")).clone();

    let equilibrium = classify_equilibrium(&series, window, alpha)
        .map_err(|e| CliError::config_key("window", "command line or config file", e.to_string()))?;
    let (runs_test, runs_test_error) = match runs_test(&series) {
        Ok(t) => (Some(t), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let autocov: Vec<f64> = (1..=max_lag)
        .map(|k| autocov(&series, k))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::config_key("max_lag", "command line or config file", e.to_string()))?;
    let mut rng = RngStream::new(SeedSpec::new(seed, 0));
    let ergodicity =
        ergodicity_diagnostic(&series, max_lag, permutations, &mut rng).map_err(CliError::run)?;
    let report = AnalysisReport {
        input,
        column,
        n,
        mean: compensated_sum(series.iter().copied()) / n as f64,
        equilibrium,
        runs_test,
        runs_test_error,
        autocovariance: AutocovReport {
            autocov,
            ergodicity,
            permutations,
        },
    };
    write_json(&out, &report)?;
    Ok((Some(record), vec![out.clone()], sibling(&out, "manifest.json")))
}

fn ode(cfg: &mut RunConfig) -> Result<Done, CliError> {
    let params = OdeSirParams {
        beta: RunConfig::require(&cfg.beta, "beta")?,
        gamma: RunConfig::require(&cfg.gamma, "gamma")?,
        s0: *cfg.s0.get_or_insert(399.0),
        i0: *cfg.i0.get_or_insert(1.0),
        r0: *cfg.r0.get_or_insert(0.0),
    };
    let dt = *cfg.dt.get_or_insert(0.1);
    let horizon = *cfg.horizon.get_or_insert(DEFAULT_STEPS as f64);
    let out = cfg.out.get_or_insert_with(|| default_out("ode.csv")).clone();

    let points = integrate_sir(&params, dt, horizon).map_err(|e| match e {
        agentsim_core::ode::OdeError::Params(m) => CliError::config(m),
        other => CliError::run(other),
    })?;
    let mut t = Table::new(["t", "S", "I", "R"].map(String::from).to_vec());
    t.rows = points.iter().map(|p| vec![p.t, p.s, p.i, p.r]).collect();
    write_csv(&out, &t)?;
    Ok((None, vec![out.clone()], sibling(&out, "manifest.json")))
}

//! Monte Carlo ensembles over seeds.
//!
//! Replicate `i` always uses stream `(master_seed, i)`, so any single run can
//! be reproduced in isolation and results do not depend on how many runs or
//! workers were used. Runs execute concurrently; results are collected and
//! reduced in stream order with compensated summation.

use crate::model::Model;
use crate::rng::{RngStream, SeedSpec};
use crate::scheduler::{run_discrete_time_with, EngineError, OrderPolicy, StepOptions, Trajectory};
use crate::sir::{count_secondary_cases, EpidemicRun, SirError, SirModel, SirParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnsembleError {
    #[error("an ensemble needs at least one run")]
    NoRuns,
    #[error("replicate {stream_id}: {source}")]
    Run {
        stream_id: u64,
        #[source]
        source: EngineError,
    },
    #[error("could not build worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Sir(#[from] SirError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub n_runs: usize,
    pub steps: usize,
    pub master_seed: u64,
    pub options: StepOptions,
    /// Worker threads; `None` uses the ambient rayon pool.
    pub workers: Option<usize>,
}

impl EnsembleSpec {
    pub fn new(n_runs: usize, steps: usize, master_seed: u64) -> Self {
        Self {
            n_runs,
            steps,
            master_seed,
            options: StepOptions::default(),
            workers: None,
        }
    }

    pub fn policy(mut self, policy: OrderPolicy) -> Self {
        self.options.policy = policy;
        self
    }

    pub fn workers(mut self, workers: Option<usize>) -> Self {
        self.workers = workers;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub seed: SeedSpec,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub names: Vec<String>,
    pub times: Vec<f64>,
    pub runs: Vec<RunRecord>,
    /// `mean[t][j]`: mean of aggregate `j` at recorded time `t`.
    pub mean: Vec<Vec<f64>>,
    /// Unbiased sample variance, zero for a single run.
    pub variance: Vec<Vec<f64>>,
}

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Mean and unbiased variance of a sample, accumulated in the given order.
pub fn mean_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = compensated_sum(values.iter().copied()) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean)));
    (mean, ss / (n - 1) as f64)
}

/// Runs replicate `stream_id` in isolation.
pub fn run_replicate<M: Model>(
    model: &M,
    spec: &EnsembleSpec,
    stream_id: u64,
) -> Result<RunRecord, EnsembleError> {
    let seed = SeedSpec::new(spec.master_seed, stream_id);
    let mut rng = RngStream::new(seed);
    let run_err = |source| EnsembleError::Run { stream_id, source };
    let initial = model
        .initial_state(&mut rng)
        .map_err(|e| run_err(EngineError::Model { step: 0, source: e }))?;
    let trajectory =
        run_discrete_time_with(model, initial, spec.steps, &spec.options, &mut rng).map_err(run_err)?;
    Ok(RunRecord { seed, trajectory })
}

pub(crate) fn in_pool<T: Send>(
    workers: Option<usize>,
    job: impl FnOnce() -> T + Send,
) -> Result<T, EnsembleError> {
    match workers {
        None => Ok(job()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| EnsembleError::Pool(e.to_string()))?;
            Ok(pool.install(job))
        }
    }
}

pub fn run_ensemble<M: Model>(model: &M, spec: &EnsembleSpec) -> Result<EnsembleResult, EnsembleError> {
    if spec.n_runs == 0 {
        return Err(EnsembleError::NoRuns);
    }
    let runs = in_pool(spec.workers, || {
        (0..spec.n_runs as u64)
            .into_par_iter()
            .map(|i| run_replicate(model, spec, i))
            .collect::<Result<Vec<_>, _>>()
    })??;

    let first = &runs[0].trajectory;
    let (names, times) = (first.names.clone(), first.times.clone());
    let width = names.len();
    let mut mean = Vec::with_capacity(times.len());
    let mut variance = Vec::with_capacity(times.len());
    let mut column = Vec::with_capacity(runs.len());
    for t in 0..times.len() {
        let mut m_row = Vec::with_capacity(width);
        let mut v_row = Vec::with_capacity(width);
        for j in 0..width {
            column.clear();
            column.extend(runs.iter().map(|r| r.trajectory.aggregates[t][j]));
            let (m, v) = mean_variance(&column);
            m_row.push(m);
            v_row.push(v);
        }
        mean.push(m_row);
        variance.push(v_row);
    }
    Ok(EnsembleResult {
        names,
        times,
        runs,
        mean,
        variance,
    })
}

/// An SIR ensemble with each run's epidemic summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SirEnsemble {
    pub params: SirParams,
    pub result: EnsembleResult,
    pub epidemics: Vec<EpidemicRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakStats {
    /// Peak of the ensemble-mean I curve.
    pub mean_curve_peak: f64,
    pub mean_curve_peak_time: f64,
    /// Median of per-run peaks among runs that infected anyone beyond the index.
    pub median_peak_non_extinct: Option<f64>,
    pub max_peak: f64,
}

impl SirEnsemble {
    /// Fraction of runs in which the index case infected nobody.
    pub fn extinction_fraction(&self) -> f64 {
        let extinct = self
            .epidemics
            .iter()
            .filter(|e| e.total_infected() == 1)
            .count();
        extinct as f64 / self.epidemics.len() as f64
    }

    pub fn final_sizes(&self) -> Vec<usize> {
        self.epidemics.iter().map(EpidemicRun::total_infected).collect()
    }

    pub fn peak_stats(&self) -> PeakStats {
        let i_col = 1;
        let (mut peak, mut peak_t) = (f64::NEG_INFINITY, 0.0);
        for (row, &t) in self.result.mean.iter().zip(&self.result.times) {
            if row[i_col] > peak {
                peak = row[i_col];
                peak_t = t;
            }
        }
        let mut peaks: Vec<f64> = self
            .epidemics
            .iter()
            .filter(|e| e.total_infected() > 1)
            .map(|e| e.peak_infected() as f64)
            .collect();
        peaks.sort_by(f64::total_cmp);
        PeakStats {
            mean_curve_peak: peak,
            mean_curve_peak_time: peak_t,
            median_peak_non_extinct: median_sorted(&peaks),
            max_peak: self
                .epidemics
                .iter()
                .map(|e| e.peak_infected() as f64)
                .fold(0.0, f64::max),
        }
    }

    /// Secondary cases of the index case, per run. Fails if any run is too
    /// short for its index case to have recovered.
    pub fn secondary_cases(&self) -> Result<Vec<usize>, SirError> {
        self.epidemics.iter().map(count_secondary_cases).collect()
    }
}

pub(crate) fn median_sorted(sorted: &[f64]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2]),
        _ => Some(0.5 * (sorted[n / 2 - 1] + sorted[n / 2])),
    }
}

pub fn run_sir_ensemble(params: &SirParams, spec: &EnsembleSpec) -> Result<SirEnsemble, EnsembleError> {
    let model = SirModel::new(params.clone())?;
    let result = run_ensemble(&model, spec)?;
    let epidemics = result
        .runs
        .iter()
        .map(|r| {
            EpidemicRun::from_trajectory(
                r.seed,
                spec.steps,
                params.initial_infected,
                r.trajectory.clone(),
            )
        })
        .collect();
    Ok(SirEnsemble {
        params: params.clone(),
        result,
        epidemics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct R0Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub secondary_cases: Vec<usize>,
}

impl R0Estimate {
    pub fn from_counts(secondary_cases: Vec<usize>) -> Self {
        let xs: Vec<f64> = secondary_cases.iter().map(|&c| c as f64).collect();
        let (mean, var) = mean_variance(&xs);
        Self {
            mean,
            std_error: (var / xs.len() as f64).sqrt(),
            secondary_cases,
        }
    }
}

/// Mean secondary cases of the index agent over `n_runs` replicates, each run
/// just long enough for the index case to recover.
pub fn estimate_r0(
    params: &SirParams,
    n_runs: usize,
    master_seed: u64,
    workers: Option<usize>,
) -> Result<R0Estimate, EnsembleError> {
    let spec = EnsembleSpec::new(n_runs, params.recovery_horizon(), master_seed).workers(workers);
    let ens = run_sir_ensemble(params, &spec)?;
    Ok(R0Estimate::from_counts(ens.secondary_cases()?))
}

/// Smallest run count `n = j * batch` at which adding one more batch moves the
/// running mean by less than `tol`, or `None` if that never happens within the data.
pub fn mc_stability(values: &[f64], batch: usize, tol: f64) -> Option<usize> {
    assert!(batch >= 2, "batch must be at least 2");
    let n_batches = values.len() / batch;
    let mut sum = 0.0;
    let mut prev: Option<f64> = None;
    for j in 1..=n_batches {
        sum += compensated_sum(values[(j - 1) * batch..j * batch].iter().copied());
        let running = sum / (j * batch) as f64;
        if let Some(p) = prev {
            if (running - p).abs() < tol {
                return Some((j - 1) * batch);
            }
        }
        prev = Some(running);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testing::Counter;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = [1e16, 1.0, -1e16];
        assert_eq!(compensated_sum(v), 1.0);
        assert_eq!(v.iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn single_run_mean_is_the_run() {
        let m = Counter::new(5);
        let spec = EnsembleSpec::new(1, 10, 3);
        let e = run_ensemble(&m, &spec).unwrap();
        assert_eq!(e.mean, e.runs[0].trajectory.aggregates);
        assert!(e.variance.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn mean_is_the_arithmetic_mean_of_runs() {
        let m = Counter::new(5);
        let e = run_ensemble(&m, &EnsembleSpec::new(13, 8, 3)).unwrap();
        for t in 0..e.times.len() {
            let col: Vec<f64> = e.runs.iter().map(|r| r.trajectory.aggregates[t][0]).collect();
            let naive = col.iter().sum::<f64>() / col.len() as f64;
            assert_eq!(e.mean[t][0], naive);
            let var = col.iter().map(|x| (x - naive).powi(2)).sum::<f64>() / 12.0;
            assert!((e.variance[t][0] - var).abs() < 1e-12);
        }
    }

    #[test]
    fn replicates_do_not_depend_on_ensemble_size_or_workers() {
        let m = Counter::new(6);
        let small = run_ensemble(&m, &EnsembleSpec::new(4, 12, 9).workers(Some(1))).unwrap();
        let large = run_ensemble(&m, &EnsembleSpec::new(20, 12, 9).workers(Some(3))).unwrap();
        for i in 0..4 {
            assert_eq!(small.runs[i], large.runs[i]);
        }
        let alone = run_replicate(&m, &EnsembleSpec::new(20, 12, 9), 17).unwrap();
        assert_eq!(alone, large.runs[17]);
    }

    #[test]
    fn zero_runs_rejected() {
        assert_eq!(
            run_ensemble(&Counter::new(2), &EnsembleSpec::new(0, 3, 0)),
            Err(EnsembleError::NoRuns)
        );
    }

    #[test]
    fn zero_transmission_ensemble_dies_out() {
        let p = SirParams::default().with_b(0.0);
        let ens = run_sir_ensemble(&p, &EnsembleSpec::new(40, 30, 5)).unwrap();
        for e in &ens.epidemics {
            assert!(e.counts[7..].iter().all(|c| c[1] == 0));
        }
        assert!(ens.result.mean[7..].iter().all(|row| row[1] == 0.0));
        assert_eq!(ens.extinction_fraction(), 1.0);
        let r0 = estimate_r0(&p, 30, 5, None).unwrap();
        assert_eq!((r0.mean, r0.std_error), (0.0, 0.0));
    }

    #[test]
    fn r0_grows_with_transmission() {
        let lo = estimate_r0(&SirParams::default(), 200, 1, None).unwrap();
        let hi = estimate_r0(&SirParams::default().with_b(1.0), 200, 1, None).unwrap();
        assert!(hi.mean > lo.mean);
        assert!(hi.mean > 3.0);
    }

    #[test]
    fn stability_of_a_constant_is_the_first_batch() {
        assert_eq!(mc_stability(&[2.5; 40], 10, 1e-9), Some(10));
    }

    #[test]
    fn stability_needs_more_runs_for_tighter_tolerance() {
        let mut rng = RngStream::new(SeedSpec::new(42, 0));
        let xs: Vec<f64> = (0..20_000).map(|_| rng.uniform01()).collect();
        let loose = mc_stability(&xs, 50, 1e-2).unwrap();
        let tight = mc_stability(&xs, 50, 1e-4).unwrap();
        assert!(tight > loose, "{tight} vs {loose}");
        assert_eq!(mc_stability(&xs[..100], 50, 0.0), None);
    }
}

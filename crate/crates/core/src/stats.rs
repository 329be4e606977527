//! Stationarity, equilibrium and ergodicity diagnostics for aggregate series.
//!
//! The runs test dichotomises a series about its median (values equal to the
//! median are dropped) and counts maximal runs of same-side values `R`:
//!
//! ```text
//! E[R]   = 2 n1 n2 / (n1 + n2) + 1
//! Var[R] = 2 n1 n2 (2 n1 n2 - n1 - n2) / ((n1 + n2)^2 (n1 + n2 - 1))
//! z      = (R - E[R]) / sqrt(Var[R])
//! ```
//!
//! with a two-sided normal p-value.

use crate::montecarlo::{compensated_sum, median_sorted};
use crate::rng::RngStream;
use serde::{Deserialize, Serialize};
use libm::erfc;
use thiserror::Error;

/// Shortest series (after dropping median ties) the runs test accepts.
pub const MIN_RUNS_TEST_LEN: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("need at least {needed} values, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("all {got} values off the median lie on one side of it")]
    OneSided { got: usize },
    #[error("lag {lag} must be below the series length {len}")]
    Lag { lag: usize, len: usize },
    #[error("window {window} must be between 1 and the series length {len}")]
    Window { window: usize, len: usize },
    #[error("series {index} of ensemble {ensemble} has no stationary window; run classify_equilibrium first")]
    NotStationary { ensemble: char, index: usize },
    #[error("non-finite value in series")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunsTest {
    pub z: f64,
    pub p_value: f64,
    /// Values above the median.
    pub n_above: usize,
    /// Values below the median.
    pub n_below: usize,
    pub runs: usize,
    /// All values equal: nothing to test, trivially stationary.
    pub degenerate: bool,
}

impl RunsTest {
    pub fn rejects(&self, alpha: f64) -> bool {
        !self.degenerate && self.p_value < alpha
    }

    fn degenerate(len: usize) -> Self {
        Self {
            z: 0.0,
            p_value: 1.0,
            n_above: 0,
            n_below: 0,
            runs: usize::from(len > 0),
            degenerate: true,
        }
    }
}

pub fn median(series: &[f64]) -> Option<f64> {
    let mut v = series.to_vec();
    v.sort_by(f64::total_cmp);
    median_sorted(&v)
}

/// `true` for values above the median; median ties are dropped.
pub fn dichotomize(series: &[f64]) -> Vec<bool> {
    let Some(m) = median(series) else {
        return Vec::new();
    };
    series
        .iter()
        .filter(|&&v| v != m)
        .map(|&v| v > m)
        .collect()
}

fn normal_two_sided(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

/// Runs statistics of an already-dichotomised sequence. Both sides must be
/// non-empty.
pub fn runs_statistics(signs: &[bool]) -> Result<RunsTest, StatsError> {
    let n1 = signs.iter().filter(|&&s| s).count();
    let n2 = signs.len() - n1;
    if n1 == 0 || n2 == 0 {
        return Err(StatsError::OneSided { got: signs.len() });
    }
    let runs = 1 + signs.windows(2).filter(|w| w[0] != w[1]).count();
    let (a, b) = (n1 as f64, n2 as f64);
    let n = a + b;
    let expected = 2.0 * a * b / n + 1.0;
    let var = 2.0 * a * b * (2.0 * a * b - a - b) / (n * n * (n - 1.0));
    let z = if var > 0.0 {
        (runs as f64 - expected) / var.sqrt()
    } else {
        0.0
    };
    Ok(RunsTest {
        z,
        p_value: normal_two_sided(z),
        n_above: n1,
        n_below: n2,
        runs,
        degenerate: false,
    })
}

/// Wald-Wolfowitz runs test about the median.
///
/// A constant series yields a degenerate result. Series with fewer than
/// [`MIN_RUNS_TEST_LEN`] values left after dropping median ties are rejected.
pub fn runs_test(series: &[f64]) -> Result<RunsTest, StatsError> {
    if series.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    if series.len() < MIN_RUNS_TEST_LEN {
        return Err(StatsError::InsufficientData {
            needed: MIN_RUNS_TEST_LEN,
            got: series.len(),
        });
    }
    if series.iter().all(|&v| v == series[0]) {
        return Ok(RunsTest::degenerate(series.len()));
    }
    let signs = dichotomize(series);
    if signs.len() < MIN_RUNS_TEST_LEN {
        return Err(StatsError::InsufficientData {
            needed: MIN_RUNS_TEST_LEN,
            got: signs.len(),
        });
    }
    runs_statistics(&signs)
}

/// Whether the runs test fails to reject on `window` at level `alpha`.
/// Untestable windows count as non-stationary.
fn stationary(window: &[f64], alpha: f64) -> (bool, Option<RunsTest>) {
    match runs_test(window) {
        Ok(t) => (!t.rejects(alpha), Some(t)),
        Err(_) => (false, None),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    None,
    Transient,
    Absorbing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    /// Inclusive index window `(t_start, t_end)`.
    pub window: Option<(usize, usize)>,
    pub classification: Classification,
    /// Mean over the window.
    pub mean: Option<f64>,
    pub test: Option<RunsTest>,
    pub window_length: usize,
    pub alpha: f64,
}

impl EquilibriumReport {
    pub fn is_stationary(&self) -> bool {
        self.classification != Classification::None
    }
}

fn mean(xs: &[f64]) -> f64 {
    compensated_sum(xs.iter().copied()) / xs.len() as f64
}

/// Scans windows of length `window` (stride `window / 2`, plus one window
/// flush with the series end) for stationarity under the runs test.
///
/// A passing window is absorbing if every extension of it (growing by the
/// stride) up to the series end also passes; the earliest such window wins.
/// Otherwise the earliest passing window is reported as transient, extended
/// as far as it keeps passing.
pub fn classify_equilibrium(
    series: &[f64],
    window: usize,
    alpha: f64,
) -> Result<EquilibriumReport, StatsError> {
    let len = series.len();
    if window == 0 || window > len {
        return Err(StatsError::Window { window, len });
    }
    let stride = (window / 2).max(1);
    let mut starts: Vec<usize> = (0..=len - window).step_by(stride).collect();
    if *starts.last().unwrap() != len - window {
        starts.push(len - window);
    }

    let mut transient: Option<(usize, usize, RunsTest)> = None;
    for &s in &starts {
        let (ok, test) = stationary(&series[s..s + window], alpha);
        if !ok {
            continue;
        }
        let test = test.expect("passing windows were tested");
        // Grow the window until it reaches the end or stops passing.
        let mut end = s + window;
        let mut last_test = test;
        let mut absorbing = true;
        while end < len {
            let next = (end + stride).min(len);
            match stationary(&series[s..next], alpha) {
                (true, Some(t)) => {
                    end = next;
                    last_test = t;
                }
                _ => {
                    absorbing = false;
                    break;
                }
            }
        }
        if absorbing {
            return Ok(EquilibriumReport {
                window: Some((s, len - 1)),
                classification: Classification::Absorbing,
                mean: Some(mean(&series[s..])),
                test: Some(last_test),
                window_length: window,
                alpha,
            });
        }
        if transient.is_none() {
            transient = Some((s, end, last_test));
        }
    }
    Ok(match transient {
        Some((s, end, test)) => EquilibriumReport {
            window: Some((s, end - 1)),
            classification: Classification::Transient,
            mean: Some(mean(&series[s..end])),
            test: Some(test),
            window_length: window,
            alpha,
        },
        None => EquilibriumReport {
            window: None,
            classification: Classification::None,
            mean: None,
            test: None,
            window_length: window,
            alpha,
        },
    })
}

/// Biased empirical autocovariance at `lag` (divides by the series length).
pub fn autocov(series: &[f64], lag: usize) -> Result<f64, StatsError> {
    let n = series.len();
    if lag >= n {
        return Err(StatsError::Lag { lag, len: n });
    }
    let m = mean(series);
    let s = compensated_sum((lag..n).map(|t| (series[t] - m) * (series[t - lag] - m)));
    Ok(s / n as f64)
}

/// `(1/n) * sum_{k=1..n} autocov(series, k)`.
pub fn ergodicity_decay(series: &[f64], max_lag: usize) -> Result<f64, StatsError> {
    if max_lag == 0 {
        return Err(StatsError::Lag {
            lag: 0,
            len: series.len(),
        });
    }
    let mut acc = Vec::with_capacity(max_lag);
    for k in 1..=max_lag {
        acc.push(autocov(series, k)?);
    }
    Ok(compensated_sum(acc) / max_lag as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErgodicityDiagnostic {
    pub max_lag: usize,
    pub decay: f64,
    /// Mean and standard deviation of the decay under random permutations of
    /// the series (no serial dependence, same marginal distribution).
    pub null_mean: f64,
    pub null_sd: f64,
}

impl ErgodicityDiagnostic {
    /// Decay measured in null standard deviations from the null mean.
    pub fn z(&self) -> f64 {
        if self.null_sd > 0.0 {
            (self.decay - self.null_mean) / self.null_sd
        } else {
            0.0
        }
    }
}

/// Autocovariance decay together with a permutation-null band.
pub fn ergodicity_diagnostic(
    series: &[f64],
    max_lag: usize,
    permutations: usize,
    rng: &mut RngStream,
) -> Result<ErgodicityDiagnostic, StatsError> {
    let decay = ergodicity_decay(series, max_lag)?;
    let mut shuffled = series.to_vec();
    let mut null = Vec::with_capacity(permutations);
    for _ in 0..permutations {
        rng.shuffle(&mut shuffled);
        null.push(ergodicity_decay(&shuffled, max_lag)?);
    }
    let (null_mean, null_var) = crate::montecarlo::mean_variance(&null);
    Ok(ErgodicityDiagnostic {
        max_lag,
        decay,
        null_mean,
        null_sd: null_var.sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTest {
    pub passed: bool,
    pub p_value: f64,
    pub test: RunsTest,
    /// Per-series moments, ensemble A first, each in seed order.
    pub moments: Vec<f64>,
}

/// Raw moment of order `q` over each series' equilibrium window.
pub fn equilibrium_moments(
    series: &[Vec<f64>],
    q: i32,
    window: usize,
    alpha: f64,
    ensemble: char,
) -> Result<Vec<f64>, StatsError> {
    series
        .iter()
        .enumerate()
        .map(|(index, s)| {
            let report = classify_equilibrium(s, window, alpha)?;
            let (lo, hi) = report
                .window
                .ok_or(StatsError::NotStationary { ensemble, index })?;
            let w = &s[lo..=hi];
            Ok(compensated_sum(w.iter().map(|v| v.powi(q))) / w.len() as f64)
        })
        .collect()
}

/// Tests that the order-`q` moment is invariant across two ensembles of
/// series produced with different seeds: the runs test is applied to the
/// seed-ordered sequence of moments (A then B) about its pooled median.
pub fn ergodicity_moment_test(
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    q: i32,
    window: usize,
    alpha: f64,
) -> Result<MomentTest, StatsError> {
    for e in [a, b] {
        if e.len() < MIN_RUNS_TEST_LEN {
            return Err(StatsError::InsufficientData {
                needed: MIN_RUNS_TEST_LEN,
                got: e.len(),
            });
        }
    }
    let mut moments = equilibrium_moments(a, q, window, alpha, 'A')?;
    moments.extend(equilibrium_moments(b, q, window, alpha, 'B')?);
    let test = runs_test(&moments)?;
    Ok(MomentTest {
        passed: !test.rejects(alpha),
        p_value: test.p_value,
        test,
        moments,
    })
}

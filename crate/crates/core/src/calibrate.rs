//! Calibration of the transmission probability against a target R0.
//!
//! The objective is the squared distance `(estimate - target)^2`. The search
//! evaluates an 11-point grid over `[b_min, b_max]` and, unless a grid point
//! already lies within tolerance, bisects the first bracketing pair of grid
//! points. Every evaluation reuses the same replicate streams
//! `(master_seed, 0..n_runs)` (common random numbers), so the estimates at
//! different `b` are driven by identical randomness and the whole trace is a
//! deterministic function of the spec.

use crate::montecarlo::{estimate_r0, EnsembleError};
use crate::sir::SirParams;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const GRID_POINTS: usize = 11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSpec {
    pub target: f64,
    pub b_min: f64,
    pub b_max: f64,
    pub n_runs: usize,
    pub tolerance: f64,
    pub max_evaluations: usize,
    pub master_seed: u64,
    #[serde(skip)]
    pub workers: Option<usize>,
}

impl CalibrationSpec {
    pub fn new(target: f64, b_min: f64, b_max: f64, n_runs: usize, master_seed: u64) -> Self {
        Self {
            target,
            b_min,
            b_max,
            n_runs,
            tolerance: 0.05,
            max_evaluations: 40,
            master_seed,
            workers: None,
        }
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        let bad = |m: &str| Err(CalibrationError::Spec(m.into()));
        if !(0.0 <= self.b_min && self.b_min <= self.b_max && self.b_max <= 1.0) {
            return bad("search interval must satisfy 0 <= b_min <= b_max <= 1");
        }
        if !(self.tolerance > 0.0) {
            return bad("tolerance must be positive");
        }
        if !self.target.is_finite() {
            return bad("target must be finite");
        }
        if self.n_runs == 0 {
            return bad("n_runs must be at least 1");
        }
        if self.max_evaluations < GRID_POINTS {
            return bad("max_evaluations must cover the 11-point grid");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Grid,
    Bisection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub phase: Phase,
    pub b: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub squared_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub b_star: f64,
    pub estimate: f64,
    pub squared_distance: f64,
    /// `squared_distance <= tolerance^2`.
    pub converged: bool,
    pub evaluations: Vec<Evaluation>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("invalid calibration spec: {0}")]
    Spec(String),
    #[error("target {target} is not bracketed by the grid estimates over the search interval")]
    BracketFailure {
        target: f64,
        evaluations: Vec<Evaluation>,
    },
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
}

pub fn calibrate_b(spec: &CalibrationSpec, template: &SirParams) -> Result<Calibration, CalibrationError> {
    spec.validate()?;
    let mut log: Vec<Evaluation> = Vec::new();
    let eval = |b: f64, phase: Phase, log: &mut Vec<Evaluation>| -> Result<f64, CalibrationError> {
        let est = estimate_r0(&template.with_b(b), spec.n_runs, spec.master_seed, spec.workers)?;
        let d = est.mean - spec.target;
        log.push(Evaluation {
            phase,
            b,
            estimate: est.mean,
            std_error: est.std_error,
            squared_distance: d * d,
        });
        Ok(est.mean)
    };

    let step = (spec.b_max - spec.b_min) / (GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..GRID_POINTS)
        .map(|i| {
            if i == GRID_POINTS - 1 {
                spec.b_max
            } else {
                spec.b_min + step * i as f64
            }
        })
        .collect();
    let mut estimates = Vec::with_capacity(GRID_POINTS);
    for &b in &grid {
        estimates.push(eval(b, Phase::Grid, &mut log)?);
    }

    let tol2 = spec.tolerance * spec.tolerance;
    let hit = log.iter().any(|e| e.squared_distance <= tol2);
    if !hit {
        let bracket = (0..GRID_POINTS - 1).find(|&i| {
            (estimates[i] - spec.target) * (estimates[i + 1] - spec.target) <= 0.0
        });
        let Some(i) = bracket else {
            return Err(CalibrationError::BracketFailure {
                target: spec.target,
                evaluations: log,
            });
        };
        // `lo` side has estimate below the target, `hi` side above.
        let increasing = estimates[i] <= estimates[i + 1];
        let (mut lo, mut hi) = if increasing {
            (grid[i], grid[i + 1])
        } else {
            (grid[i + 1], grid[i])
        };
        while log.len() < spec.max_evaluations {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            let est = eval(mid, Phase::Bisection, &mut log)?;
            if (est - spec.target).powi(2) <= tol2 {
                break;
            }
            if est < spec.target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }

    let best = log
        .iter()
        .min_by(|x, y| {
            x.squared_distance
                .total_cmp(&y.squared_distance)
                .then(x.b.total_cmp(&y.b))
        })
        .expect("grid evaluated");
    Ok(Calibration {
        b_star: best.b,
        estimate: best.estimate,
        squared_distance: best.squared_distance,
        converged: best.squared_distance <= tol2,
        evaluations: log.clone(),
    })
}

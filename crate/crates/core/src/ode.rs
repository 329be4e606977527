//! Classical SIR differential system, integrated with fixed-step RK4.
//!
//! ```text
//! dS/dt = -beta S I / N
//! dI/dt =  beta S I / N - gamma I
//! dR/dt =  gamma I
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("non-finite state at t = {t}")]
    Blowup { t: f64 },
    #[error("compartment fell below zero beyond round-off at t = {t}")]
    Negative { t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeSirParams {
    pub beta: f64,
    pub gamma: f64,
    pub s0: f64,
    pub i0: f64,
    pub r0: f64,
}

impl OdeSirParams {
    pub fn n(&self) -> f64 {
        self.s0 + self.i0 + self.r0
    }

    fn validate(&self) -> Result<(), OdeError> {
        let all = [self.beta, self.gamma, self.s0, self.i0, self.r0];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(OdeError::Params(
                "rates and compartments must be finite and non-negative".into(),
            ));
        }
        if self.n() <= 0.0 {
            return Err(OdeError::Params("population must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdePoint {
    pub t: f64,
    pub s: f64,
    pub i: f64,
    pub r: f64,
}

fn field(p: &OdeSirParams, n: f64, [s, i, _]: [f64; 3]) -> [f64; 3] {
    let infection = p.beta * s * i / n;
    let recovery = p.gamma * i;
    [-infection, infection - recovery, recovery]
}

fn axpy(y: [f64; 3], h: f64, k: [f64; 3]) -> [f64; 3] {
    [y[0] + h * k[0], y[1] + h * k[1], y[2] + h * k[2]]
}

fn rk4_step(p: &OdeSirParams, n: f64, y: [f64; 3], h: f64) -> [f64; 3] {
    let k1 = field(p, n, y);
    let k2 = field(p, n, axpy(y, 0.5 * h, k1));
    let k3 = field(p, n, axpy(y, 0.5 * h, k2));
    let k4 = field(p, n, axpy(y, h, k3));
    std::array::from_fn(|j| y[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]))
}

/// Integrates from `t = 0` to `horizon`, reporting every step. The last step
/// is shortened when `horizon` is not a multiple of `dt`. Values within
/// round-off below zero are reported as zero.
pub fn integrate_sir(params: &OdeSirParams, dt: f64, horizon: f64) -> Result<Vec<OdePoint>, OdeError> {
    params.validate()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(OdeError::Params("dt must be positive".into()));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(OdeError::Params("horizon must be non-negative".into()));
    }
    let n = params.n();
    let floor = -1e-9 * n;
    let clamp = |t: f64, v: f64| -> Result<f64, OdeError> {
        if v < floor {
            Err(OdeError::Negative { t })
        } else {
            Ok(v.max(0.0))
        }
    };
    let point = |t: f64, y: [f64; 3]| -> Result<OdePoint, OdeError> {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(OdeError::Blowup { t });
        }
        Ok(OdePoint {
            t,
            s: clamp(t, y[0])?,
            i: clamp(t, y[1])?,
            r: clamp(t, y[2])?,
        })
    };

    let full = (horizon / dt * (1.0 + 1e-12)).floor() as usize;
    let mut y = [params.s0, params.i0, params.r0];
    let mut out = Vec::with_capacity(full + 2);
    out.push(point(0.0, y)?);
    let mut t = 0.0;
    for k in 1..=full {
        y = rk4_step(params, n, y, dt);
        t = (k as f64 * dt).min(horizon);
        out.push(point(t, y)?);
    }
    let rest = horizon - t;
    if rest > 1e-12 * dt.max(horizon) {
        y = rk4_step(params, n, y, rest);
        out.push(point(horizon, y)?);
    }
    Ok(out)
}

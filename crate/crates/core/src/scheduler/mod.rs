//! Model evolution: discrete-time stepping and discrete-event execution.

mod event;

pub use event::{run_discrete_event, AgentActivations, EventHandler, EventQueue, EventTrajectory};

use crate::model::{commit, evaluate, Model, ModelError, StepError};
use crate::rng::{RngStream, SeedSpec};
use crate::state::GlobalState;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: StepError,
    },
    #[error("step {step}: {source}")]
    Model {
        step: usize,
        #[source]
        source: ModelError,
    },
    #[error("step {step}: population changed from {expected} to {found} agents in a fixed-population model")]
    Population {
        step: usize,
        expected: usize,
        found: usize,
    },
    #[error("event scheduled at {time} precedes the current clock {now}")]
    EventInPast { time: f64, now: f64 },
    #[error("event time {0} is not finite")]
    NonFiniteTime(f64),
}

/// The order in which agents execute within a time step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderPolicy {
    /// Agents in index order, each seeing the updates of those before it.
    #[default]
    Fixed,
    /// A fresh random permutation each step, drawn from the run's stream.
    Shuffled,
    /// Every agent perceives the frozen start-of-step state; all actions
    /// commit at the end of the step in agent-index order.
    Synchronous,
}

impl std::str::FromStr for OrderPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fixed" => Ok(Self::Fixed),
            "shuffled" => Ok(Self::Shuffled),
            "synchronous" => Ok(Self::Synchronous),
            other => Err(format!(
                "unknown order policy `{other}` (expected fixed, shuffled or synchronous)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOptions {
    pub policy: OrderPolicy,
    /// Record every `record_every`-th step (the initial state is always recorded).
    pub record_every: usize,
    /// Keep full `GlobalState` snapshots in addition to aggregates.
    pub keep_snapshots: bool,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self {
            policy: OrderPolicy::Fixed,
            record_every: 1,
            keep_snapshots: false,
        }
    }
}

impl StepOptions {
    pub fn with_policy(policy: OrderPolicy) -> Self {
        Self {
            policy,
            ..Self::default()
        }
    }
}

/// Recorded output of one discrete-time run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub names: Vec<String>,
    pub times: Vec<f64>,
    pub aggregates: Vec<Vec<f64>>,
    pub snapshots: Option<Vec<GlobalState>>,
    pub final_state: GlobalState,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// The series of aggregate column `col`.
    pub fn column(&self, col: usize) -> Vec<f64> {
        self.aggregates.iter().map(|row| row[col]).collect()
    }
}

struct Recorder<'m, M: Model> {
    model: &'m M,
    every: usize,
    out: Trajectory,
}

impl<'m, M: Model> Recorder<'m, M> {
    fn new(model: &'m M, opts: &StepOptions, initial: &GlobalState) -> Self {
        Self {
            model,
            every: opts.record_every.max(1),
            out: Trajectory {
                names: model.statistic_names(),
                times: Vec::new(),
                aggregates: Vec::new(),
                snapshots: opts.keep_snapshots.then(Vec::new),
                final_state: initial.clone(),
            },
        }
    }

    fn record(&mut self, step: usize, state: &GlobalState) {
        if !step.is_multiple_of(self.every) {
            return;
        }
        self.out.times.push(state.clock);
        self.out.aggregates.push(self.model.statistic(state));
        if let Some(s) = self.out.snapshots.as_mut() {
            s.push(state.clone());
        }
    }
}

/// Runs `steps` discrete time steps from `initial` with the stream identified by `seed`.
pub fn run_discrete_time<M: Model>(
    model: &M,
    initial: GlobalState,
    steps: usize,
    policy: OrderPolicy,
    seed: SeedSpec,
) -> Result<Trajectory, EngineError> {
    let mut rng = RngStream::new(seed);
    run_discrete_time_with(model, initial, steps, &StepOptions::with_policy(policy), &mut rng)
}

/// Like [`run_discrete_time`] but draws from a caller-owned stream, so that
/// draws made while building the initial state belong to the same run.
pub fn run_discrete_time_with<M: Model>(
    model: &M,
    initial: GlobalState,
    steps: usize,
    opts: &StepOptions,
    rng: &mut RngStream,
) -> Result<Trajectory, EngineError> {
    let mut rec = Recorder::new(model, opts, &initial);
    let mut state = initial;
    rec.record(0, &state);
    let mut order: Vec<usize> = Vec::new();

    for step in 1..=steps {
        if model.is_absorbing(&state) {
            state.clock += 1.0;
            rec.record(step, &state);
            continue;
        }
        let m = state.n_agents();
        let step_err = |source| EngineError::Step {
            step: step - 1,
            source,
        };
        match opts.policy {
            OrderPolicy::Fixed | OrderPolicy::Shuffled => {
                order.clear();
                order.extend(0..m);
                if opts.policy == OrderPolicy::Shuffled {
                    rng.shuffle(&mut order);
                }
                for &agent in &order {
                    let action = evaluate(model, &state, agent, rng).map_err(step_err)?;
                    commit(model, &mut state, agent, action).map_err(step_err)?;
                }
            }
            OrderPolicy::Synchronous => {
                let actions = (0..m)
                    .map(|agent| evaluate(model, &state, agent, rng))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(step_err)?;
                for (agent, action) in actions.into_iter().enumerate() {
                    commit(model, &mut state, agent, action).map_err(step_err)?;
                }
            }
        }
        model
            .between_steps(&mut state, rng)
            .map_err(|source| EngineError::Model {
                step: step - 1,
                source,
            })?;
        if !model.dynamic_population() && state.n_agents() != m {
            return Err(EngineError::Population {
                step: step - 1,
                expected: m,
                found: state.n_agents(),
            });
        }
        state.clock += 1.0;
        rec.record(step, &state);
    }
    rec.out.final_state = state;
    Ok(rec.out)
}

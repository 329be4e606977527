//! The perception-decision-action model contract.
//!
//! One agent update composes the three model functions:
//! `perceive(state, agent)` builds a percept from the global state,
//! `decide(percept, rng)` applies the model's rules under its parameters, and
//! `act(decision, state, agent)` yields the replacement state for the acting
//! agent plus any environment messages. The engine writes the replacement
//! into the acting agent's slot only; no model function can reach another
//! agent's state.

use crate::rng::RngStream;
use crate::state::{AgentState, EnvPayload, GlobalState, SchemaError, StateSchema};
use thiserror::Error;

/// A domain error raised by a model function.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message}")]
pub struct ModelError {
    pub message: String,
}

impl ModelError {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error("agent index {agent} out of range ({n_agents} agents)")]
    AgentOutOfRange { agent: usize, n_agents: usize },
    #[error("model error at agent {agent}, clock {clock}: {source}")]
    Model {
        agent: usize,
        clock: f64,
        #[source]
        source: ModelError,
    },
    #[error("agent {agent} produced an invalid state at clock {clock}: {source}")]
    Schema {
        agent: usize,
        clock: f64,
        #[source]
        source: SchemaError,
    },
}

/// What an agent's action produces.
#[derive(Debug, Clone, PartialEq)]
pub struct Action<Msg> {
    /// Replacement state for the acting agent; `None` keeps the current one.
    pub next: Option<AgentState>,
    /// Environment messages, applied in emission order after `next`.
    pub messages: Vec<Msg>,
}

impl<Msg> Action<Msg> {
    pub fn keep() -> Self {
        Self {
            next: None,
            messages: Vec::new(),
        }
    }

    pub fn replace(next: AgentState) -> Self {
        Self {
            next: Some(next),
            messages: Vec::new(),
        }
    }

    pub fn with_message(mut self, msg: Msg) -> Self {
        self.messages.push(msg);
        self
    }
}

/// A pluggable agent-based model.
///
/// Implementations must be re-entrant: all randomness comes through the
/// `RngStream` argument and no hidden mutable state is allowed, so replicates
/// can run concurrently.
pub trait Model: Sync {
    type Percept<'a>
    where
        Self: 'a;
    type Decision;
    type Message;

    fn schema(&self) -> &StateSchema;

    /// The parameter vector.
    fn params(&self) -> Vec<f64>;

    /// Initial global state. Randomness drawn here is part of the run's
    /// stream, so `(initial draws, seed)` fully determine the run.
    fn initial_state(&self, rng: &mut RngStream) -> Result<GlobalState, ModelError>;

    fn perceive<'a>(
        &'a self,
        state: &'a GlobalState,
        agent: usize,
    ) -> Result<Self::Percept<'a>, ModelError>;

    fn decide(
        &self,
        percept: Self::Percept<'_>,
        rng: &mut RngStream,
    ) -> Result<Self::Decision, ModelError>;

    fn act(
        &self,
        decision: Self::Decision,
        state: &GlobalState,
        agent: usize,
    ) -> Result<Action<Self::Message>, ModelError>;

    fn apply_message(&self, _env: &mut EnvPayload, _msg: Self::Message) -> Result<(), ModelError> {
        Ok(())
    }

    /// Aggregate statistics of a state.
    fn statistic(&self, state: &GlobalState) -> Vec<f64>;

    fn statistic_names(&self) -> Vec<String>;

    /// True when no further step can change `state`. Schedulers use this to
    /// stop drawing once a run is absorbed; the returned trajectory is the same.
    fn is_absorbing(&self, _state: &GlobalState) -> bool {
        false
    }

    /// Whether [`Model::between_steps`] may add or remove agents.
    fn dynamic_population(&self) -> bool {
        false
    }

    /// Runs between time steps, the only point where agents may be created or deleted.
    fn between_steps(&self, _state: &mut GlobalState, _rng: &mut RngStream) -> Result<(), ModelError> {
        Ok(())
    }
}

/// Runs perception, decision and action for `agent` against `state` without
/// committing anything.
pub fn evaluate<M: Model>(
    model: &M,
    state: &GlobalState,
    agent: usize,
    rng: &mut RngStream,
) -> Result<Action<M::Message>, StepError> {
    if agent >= state.n_agents() {
        return Err(StepError::AgentOutOfRange {
            agent,
            n_agents: state.n_agents(),
        });
    }
    let wrap = |source| StepError::Model {
        agent,
        clock: state.clock,
        source,
    };
    let percept = model.perceive(state, agent).map_err(wrap)?;
    let decision = model.decide(percept, rng).map_err(wrap)?;
    model.act(decision, state, agent).map_err(wrap)
}

/// Writes an action's effects into `state`: the acting agent's replacement
/// first, then the environment messages in order.
pub fn commit<M: Model>(
    model: &M,
    state: &mut GlobalState,
    agent: usize,
    action: Action<M::Message>,
) -> Result<(), StepError> {
    let clock = state.clock;
    if let Some(next) = action.next {
        model
            .schema()
            .validate(&next)
            .map_err(|source| StepError::Schema {
                agent,
                clock,
                source,
            })?;
        state.agents[agent] = next;
    }
    for msg in action.messages {
        model
            .apply_message(&mut state.env, msg)
            .map_err(|source| StepError::Model {
                agent,
                clock,
                source,
            })?;
    }
    Ok(())
}

/// One PDA cycle for `agent`, applied in place.
pub fn pda_step<M: Model>(
    model: &M,
    state: &mut GlobalState,
    agent: usize,
    rng: &mut RngStream,
) -> Result<(), StepError> {
    let action = evaluate(model, state, agent, rng)?;
    commit(model, state, agent, action)
}

/// Projects a state onto the model's aggregate statistics.
pub fn project<M: Model>(model: &M, state: &GlobalState) -> Vec<f64> {
    model.statistic(state)
}

#[cfg(test)]
pub(crate) mod testing {
    //! Small models shared by unit tests.

    use super::*;
    use crate::state::{Entry, Variable};

    /// Decides nothing.
    pub struct Idle {
        pub schema: StateSchema,
        pub n: usize,
    }

    impl Idle {
        pub fn new(n: usize) -> Self {
            Self {
                schema: StateSchema::new(vec![Variable::int("x")]),
                n,
            }
        }
    }

    impl Model for Idle {
        type Percept<'a> = ();
        type Decision = ();
        type Message = ();

        fn schema(&self) -> &StateSchema {
            &self.schema
        }
        fn params(&self) -> Vec<f64> {
            vec![]
        }
        fn initial_state(&self, _rng: &mut RngStream) -> Result<GlobalState, ModelError> {
            Ok(GlobalState::new(
                (0..self.n)
                    .map(|i| AgentState::new(vec![Entry::Int(i as i64)]))
                    .collect(),
            ))
        }
        fn perceive<'a>(&'a self, _s: &'a GlobalState, _a: usize) -> Result<(), ModelError> {
            Ok(())
        }
        fn decide(&self, _p: (), _rng: &mut RngStream) -> Result<(), ModelError> {
            Ok(())
        }
        fn act(&self, _d: (), _s: &GlobalState, _a: usize) -> Result<Action<()>, ModelError> {
            Ok(Action::keep())
        }
        fn statistic(&self, s: &GlobalState) -> Vec<f64> {
            vec![s.agents.iter().filter_map(|a| a.int(0)).sum::<i64>() as f64]
        }
        fn statistic_names(&self) -> Vec<String> {
            vec!["sum".into()]
        }
    }

    /// Each agent adds a random increment in {0, 1, 2} to its own counter;
    /// its decision reads nothing but its own state.
    pub struct Counter {
        pub schema: StateSchema,
        pub n: usize,
    }

    impl Counter {
        pub fn new(n: usize) -> Self {
            Self {
                schema: StateSchema::new(vec![Variable::int("count")]),
                n,
            }
        }
    }

    impl Model for Counter {
        type Percept<'a> = i64;
        type Decision = i64;
        type Message = ();

        fn schema(&self) -> &StateSchema {
            &self.schema
        }
        fn params(&self) -> Vec<f64> {
            vec![]
        }
        fn initial_state(&self, _rng: &mut RngStream) -> Result<GlobalState, ModelError> {
            Ok(GlobalState::new(vec![
                AgentState::new(vec![Entry::Int(0)]);
                self.n
            ]))
        }
        fn perceive<'a>(&'a self, s: &'a GlobalState, a: usize) -> Result<i64, ModelError> {
            Ok(s.agents[a].int(0).unwrap())
        }
        fn decide(&self, own: i64, rng: &mut RngStream) -> Result<i64, ModelError> {
            Ok(own + rng.uniform_int(0, 2).unwrap())
        }
        fn act(&self, d: i64, _s: &GlobalState, _a: usize) -> Result<Action<()>, ModelError> {
            Ok(Action::replace(AgentState::new(vec![Entry::Int(d)])))
        }
        fn statistic(&self, s: &GlobalState) -> Vec<f64> {
            vec![s.agents.iter().filter_map(|a| a.int(0)).sum::<i64>() as f64]
        }
        fn statistic_names(&self) -> Vec<String> {
            vec!["total".into()]
        }
    }

    /// Copies the sum of all agents' values into the acting agent and logs
    /// its index in the environment. Order-sensitive by construction.
    pub struct Gossip {
        pub schema: StateSchema,
    }

    impl Gossip {
        pub fn new() -> Self {
            Self {
                schema: StateSchema::new(vec![Variable::int("v")]),
            }
        }
    }

    impl Model for Gossip {
        type Percept<'a> = i64;
        type Decision = i64;
        type Message = usize;

        fn schema(&self) -> &StateSchema {
            &self.schema
        }
        fn params(&self) -> Vec<f64> {
            vec![]
        }
        fn initial_state(&self, _rng: &mut RngStream) -> Result<GlobalState, ModelError> {
            let mut g = GlobalState::new(
                (1..=4).map(|v| AgentState::new(vec![Entry::Int(v)])).collect(),
            );
            g.env = serde_json::json!([]);
            Ok(g)
        }
        fn perceive<'a>(&'a self, s: &'a GlobalState, _a: usize) -> Result<i64, ModelError> {
            Ok(s.agents.iter().filter_map(|a| a.int(0)).sum())
        }
        fn decide(&self, sum: i64, _rng: &mut RngStream) -> Result<i64, ModelError> {
            Ok(sum)
        }
        fn act(&self, d: i64, _s: &GlobalState, a: usize) -> Result<Action<usize>, ModelError> {
            Ok(Action::replace(AgentState::new(vec![Entry::Int(d)])).with_message(a))
        }
        fn apply_message(&self, env: &mut EnvPayload, msg: usize) -> Result<(), ModelError> {
            env.as_array_mut()
                .ok_or_else(|| ModelError::new("env is not a log"))?
                .push(msg.into());
            Ok(())
        }
        fn statistic(&self, s: &GlobalState) -> Vec<f64> {
            s.agents.iter().filter_map(|a| a.int(0)).map(|v| v as f64).collect()
        }
        fn statistic_names(&self) -> Vec<String> {
            (0..4).map(|i| format!("v{i}")).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;
    use crate::rng::SeedSpec;
    use crate::state::{Entry, Variable};

    fn rng() -> RngStream {
        RngStream::new(SeedSpec::new(1, 0))
    }

    #[test]
    fn idle_model_is_identity() {
        let m = Idle::new(5);
        let mut r = rng();
        let s0 = m.initial_state(&mut r).unwrap();
        let mut s = s0.clone();
        for a in 0..5 {
            pda_step(&m, &mut s, a, &mut r).unwrap();
        }
        assert_eq!(s, s0);
    }

    #[test]
    fn only_the_acting_agent_changes() {
        let m = Gossip::new();
        let mut r = rng();
        let mut s = m.initial_state(&mut r).unwrap();
        for a in [2, 0, 3, 1] {
            let before = s.clone();
            pda_step(&m, &mut s, a, &mut r).unwrap();
            for j in (0..4).filter(|&j| j != a) {
                assert_eq!(s.agents[j], before.agents[j]);
            }
        }
        assert_eq!(s.env, serde_json::json!([2, 0, 3, 1]));
    }

    #[test]
    fn step_equals_composition() {
        let m = Counter::new(3);
        let mut r1 = rng();
        let mut r2 = rng();
        let s0 = m.initial_state(&mut r1).unwrap();
        m.initial_state(&mut r2).unwrap();
        let mut s = s0.clone();
        pda_step(&m, &mut s, 1, &mut r1).unwrap();

        let p = m.perceive(&s0, 1).unwrap();
        let d = m.decide(p, &mut r2).unwrap();
        let a = m.act(d, &s0, 1).unwrap();
        assert_eq!(Some(&s.agents[1]), a.next.as_ref());
    }

    #[test]
    fn out_of_range_agent() {
        let m = Idle::new(2);
        let mut r = rng();
        let mut s = m.initial_state(&mut r).unwrap();
        assert_eq!(
            pda_step(&m, &mut s, 2, &mut r),
            Err(StepError::AgentOutOfRange {
                agent: 2,
                n_agents: 2
            })
        );
    }

    struct Faulty(StateSchema);

    impl Model for Faulty {
        type Percept<'a> = usize;
        type Decision = usize;
        type Message = ();
        fn schema(&self) -> &StateSchema {
            &self.0
        }
        fn params(&self) -> Vec<f64> {
            vec![]
        }
        fn initial_state(&self, _r: &mut RngStream) -> Result<GlobalState, ModelError> {
            Ok(GlobalState::new(vec![AgentState::new(vec![Entry::Int(0)]); 3]))
        }
        fn perceive<'a>(&'a self, _s: &'a GlobalState, a: usize) -> Result<usize, ModelError> {
            Ok(a)
        }
        fn decide(&self, a: usize, _r: &mut RngStream) -> Result<usize, ModelError> {
            if a == 1 {
                Err(ModelError::new("agent 1 refuses"))
            } else {
                Ok(a)
            }
        }
        fn act(&self, a: usize, _s: &GlobalState, _i: usize) -> Result<Action<()>, ModelError> {
            Ok(Action::replace(AgentState::new(vec![Entry::Int(a as i64 + 5)])))
        }
        fn statistic(&self, _s: &GlobalState) -> Vec<f64> {
            vec![]
        }
        fn statistic_names(&self) -> Vec<String> {
            vec![]
        }
    }

    #[test]
    fn model_errors_carry_agent_and_clock() {
        let m = Faulty(StateSchema::new(vec![Variable::coded("c", &[0, 5, 7])]));
        let mut r = rng();
        let mut s = m.initial_state(&mut r).unwrap();
        s.clock = 4.0;
        match pda_step(&m, &mut s, 1, &mut r) {
            Err(StepError::Model { agent, clock, .. }) => {
                assert_eq!(agent, 1);
                assert_eq!(clock, 4.0);
            }
            other => panic!("unexpected {other:?}"),
        }
        // Agent 0 writes code 5: allowed. Agent 2 writes 7: allowed. Code 6 would not be.
        pda_step(&m, &mut s, 0, &mut r).unwrap();
        let m2 = Faulty(StateSchema::new(vec![Variable::coded("c", &[0, 5])]));
        assert!(matches!(
            pda_step(&m2, &mut s, 2, &mut r),
            Err(StepError::Schema { agent: 2, .. })
        ));
    }

    #[test]
    fn projection_is_pure() {
        let m = Counter::new(4);
        let s = m.initial_state(&mut rng()).unwrap();
        let before = s.clone();
        assert_eq!(project(&m, &s), project(&m, &s));
        assert_eq!(s, before);
    }
}

//! Lattice SIR reference model.
//!
//! 400 agents fixed on a 20x20 lattice, each SUS, INF or REC. Per step a
//! susceptible agent draws a contact count `n`, samples `n` contacts, counts
//! the infectious ones `k` and becomes infected with probability
//! `1 - (1 - b)^k` (one Bernoulli trial per step). On infection it draws an
//! infectious period and recovers at the first step whose clock reaches
//! `infection_time + period`. Recovered agents never change again.
//!
//! Agent state layout: `[health, recovery_time, infector, infection_time]`,
//! where the last three are unset for susceptible agents and `infector` is
//! also unset for the index case.

use crate::environment::{Boundary, LatticeEnv, Mutability, Neighborhood, NetworkEnv, Topology};
use crate::model::{Action, Model, ModelError};
use crate::rng::{RngStream, SeedSpec};
use crate::scheduler::{run_discrete_time_with, EngineError, OrderPolicy, StepOptions, Trajectory};
use crate::state::{AgentState, Entry, GlobalState, StateSchema, Variable};
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use std::path::PathBuf;
use thiserror::Error;

pub const HEALTH: usize = 0;
pub const RECOVERY_TIME: usize = 1;
pub const INFECTOR: usize = 2;
pub const INFECTION_TIME: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SirError {
    #[error("transmission probability {0} is outside [0, 1]")]
    Probability(f64),
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("run ended at step {steps} while the index case was still infectious")]
    InsufficientHorizon { steps: usize },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(i64)]
pub enum Health {
    Sus = 0,
    Inf = 1,
    Rec = 2,
}

impl Health {
    pub fn code(self) -> i64 {
        self as i64
    }

    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            0 => Some(Self::Sus),
            1 => Some(Self::Inf),
            2 => Some(Self::Rec),
            _ => None,
        }
    }
}

/// How susceptible agents pick their contacts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactScheme {
    /// Uniformly from every other agent, with replacement; self-draws are redrawn.
    #[default]
    Global,
    /// Uniformly from the lattice neighbours, with replacement.
    Neighborhood,
    /// Uniformly from the neighbours in an undirected edge-list network.
    Network,
}

impl std::str::FromStr for ContactScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "global" => Ok(Self::Global),
            "neighborhood" => Ok(Self::Neighborhood),
            "network" => Ok(Self::Network),
            other => Err(format!(
                "unknown contact scheme `{other}` (expected global, neighborhood or network)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SirParams {
    /// Transmission probability per infectious contact.
    pub b: f64,
    pub period_min: i64,
    pub period_max: i64,
    pub contacts_min: i64,
    pub contacts_max: i64,
    pub contact_scheme: ContactScheme,
    pub width: usize,
    pub height: usize,
    /// Lattice used by the `neighborhood` scheme.
    pub neighborhood: Neighborhood,
    pub boundary: Boundary,
    /// Edge-list file (one `u v` pair per line) used by the `network` scheme.
    pub network: Option<PathBuf>,
    pub initial_infected: usize,
}

impl Default for SirParams {
    /// The reference configuration: eight contacts per step, infectious
    /// period uniform on 3..=6, index case at agent 0 so that it acts first
    /// and its exposure window is exactly its drawn period.
    fn default() -> Self {
        Self {
            b: 0.047,
            period_min: 3,
            period_max: 6,
            contacts_min: 8,
            contacts_max: 8,
            contact_scheme: ContactScheme::Global,
            width: 20,
            height: 20,
            neighborhood: Neighborhood::Moore8,
            boundary: Boundary::Clamp,
            network: None,
            initial_infected: 0,
        }
    }
}

impl SirParams {
    pub fn with_b(&self, b: f64) -> Self {
        Self { b, ..self.clone() }
    }

    pub fn n_agents(&self) -> usize {
        self.width * self.height
    }

    /// Steps after which the index case has certainly recovered.
    pub fn recovery_horizon(&self) -> usize {
        self.period_max.max(0) as usize + 1
    }

    pub fn validate(&self) -> Result<(), SirError> {
        if !(0.0..=1.0).contains(&self.b) {
            return Err(SirError::Probability(self.b));
        }
        let bad = |m: String| Err(SirError::Params(m));
        if self.period_min < 1 || self.period_min > self.period_max {
            return bad(format!(
                "infectious period range [{}, {}] must satisfy 1 <= min <= max",
                self.period_min, self.period_max
            ));
        }
        if self.contacts_min < 0 || self.contacts_min > self.contacts_max {
            return bad(format!(
                "contact count range [{}, {}] must satisfy 0 <= min <= max",
                self.contacts_min, self.contacts_max
            ));
        }
        if self.width == 0 || self.height == 0 {
            return bad("lattice dimensions must be positive".into());
        }
        if self.n_agents() < 2 {
            return bad("need at least two agents".into());
        }
        if self.contact_scheme == ContactScheme::Network && self.network.is_none() {
            return bad("the network contact scheme needs a `network` edge-list file".into());
        }
        if self.initial_infected >= self.n_agents() {
            return bad(format!(
                "initial_infected {} is not an agent id (0..{})",
                self.initial_infected,
                self.n_agents()
            ));
        }
        Ok(())
    }
}

/// One-step infection probability for a susceptible agent with `k` infectious contacts.
pub fn infection_probability(k: u32, b: f64) -> Result<f64, SirError> {
    if !(0.0..=1.0).contains(&b) {
        return Err(SirError::Probability(b));
    }
    Ok(1.0 - (1.0 - b).powi(k as i32))
}

pub enum ContactPool<'a> {
    Global { agents: &'a [AgentState], me: usize },
    Neighbors { agents: &'a [AgentState], ids: &'a [usize] },
}

pub struct SirPercept<'a> {
    pub health: Health,
    pub now: i64,
    pub recovery_time: Option<i64>,
    pub pool: ContactPool<'a>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SirDecision {
    Stay,
    Infect { infector: usize, period: i64 },
    Recover,
}

pub struct SirModel {
    params: SirParams,
    schema: StateSchema,
    neighbors: Vec<Vec<usize>>,
}

fn health_of(agent: &AgentState) -> Health {
    agent
        .int(HEALTH)
        .and_then(Health::from_code)
        .expect("schema-validated health")
}

fn model_err(e: impl std::fmt::Display) -> ModelError {
    ModelError::new(e.to_string())
}

impl SirModel {
    pub fn new(params: SirParams) -> Result<Self, SirError> {
        params.validate()?;
        let neighbors = match params.contact_scheme {
            ContactScheme::Global => Vec::new(),
            ContactScheme::Neighborhood => LatticeEnv::new(
                params.width,
                params.height,
                params.neighborhood,
                params.boundary,
            )
            .map_err(|e| SirError::Params(e.to_string()))?
            .neighbor_table(),
            ContactScheme::Network => {
                let path = params.network.as_deref().expect("validated");
                let net = NetworkEnv::load_edge_list(
                    path,
                    Some(params.n_agents()),
                    false,
                    Mutability::Static,
                )
                .map_err(|e| SirError::Params(format!("{}: {e}", path.display())))?;
                (0..params.n_agents())
                    .map(|i| {
                        let mut ns = net.neighbors(i).expect("ids below node count");
                        ns.retain(|&j| j != i);
                        ns
                    })
                    .collect()
            }
        };
        let schema = StateSchema::new(vec![
            Variable::coded("health", &[0, 1, 2]),
            Variable::int("recovery_time").nullable(),
            Variable::int("infector").nullable(),
            Variable::int("infection_time").nullable(),
        ]);
        Ok(Self {
            params,
            schema,
            neighbors,
        })
    }

    pub fn sir_params(&self) -> &SirParams {
        &self.params
    }

    pub fn lattice(&self) -> LatticeEnv {
        LatticeEnv::new(
            self.params.width,
            self.params.height,
            self.params.neighborhood,
            self.params.boundary,
        )
        .expect("validated dimensions")
    }

    pub fn susceptible() -> AgentState {
        AgentState::new(vec![
            Entry::Int(Health::Sus.code()),
            Entry::Unset,
            Entry::Unset,
            Entry::Unset,
        ])
    }

    fn counts(state: &GlobalState) -> [usize; 3] {
        let mut c = [0usize; 3];
        for a in &state.agents {
            c[health_of(a) as usize] += 1;
        }
        c
    }
}

impl Model for SirModel {
    type Percept<'a> = SirPercept<'a>;
    type Decision = SirDecision;
    type Message = ();

    fn schema(&self) -> &StateSchema {
        &self.schema
    }

    fn params(&self) -> Vec<f64> {
        let p = &self.params;
        vec![
            p.b,
            p.period_min as f64,
            p.period_max as f64,
            p.contacts_min as f64,
            p.contacts_max as f64,
        ]
    }

    /// All susceptible except the index case, infected at time 0.
    fn initial_state(&self, rng: &mut RngStream) -> Result<GlobalState, ModelError> {
        let p = &self.params;
        let mut agents = vec![Self::susceptible(); p.n_agents()];
        let period = rng
            .uniform_int(p.period_min, p.period_max)
            .map_err(model_err)?;
        agents[p.initial_infected] = AgentState::new(vec![
            Entry::Int(Health::Inf.code()),
            Entry::Int(period),
            Entry::Unset,
            Entry::Int(0),
        ]);
        Ok(GlobalState::new(agents))
    }

    fn perceive<'a>(
        &'a self,
        state: &'a GlobalState,
        agent: usize,
    ) -> Result<SirPercept<'a>, ModelError> {
        let me = &state.agents[agent];
        let pool = match self.params.contact_scheme {
            ContactScheme::Global => ContactPool::Global {
                agents: &state.agents,
                me: agent,
            },
            ContactScheme::Neighborhood | ContactScheme::Network => ContactPool::Neighbors {
                agents: &state.agents,
                ids: &self.neighbors[agent],
            },
        };
        Ok(SirPercept {
            health: health_of(me),
            now: state.clock.round() as i64,
            recovery_time: me.int(RECOVERY_TIME),
            pool,
        })
    }

    fn decide(&self, p: SirPercept<'_>, rng: &mut RngStream) -> Result<SirDecision, ModelError> {
        match p.health {
            Health::Sus => {
                let n = rng
                    .uniform_int(self.params.contacts_min, self.params.contacts_max)
                    .map_err(model_err)?;
                let mut infectious: SmallVec<[usize; 16]> = SmallVec::new();
                for _ in 0..n {
                    let contact = match p.pool {
                        ContactPool::Global { agents, me } => {
                            let mut c = rng.uniform_index(agents.len());
                            while c == me {
                                c = rng.uniform_index(agents.len());
                            }
                            (c, agents)
                        }
                        ContactPool::Neighbors { agents, ids } => {
                            if ids.is_empty() {
                                break;
                            }
                            (ids[rng.uniform_index(ids.len())], agents)
                        }
                    };
                    let (c, agents) = contact;
                    if health_of(&agents[c]) == Health::Inf {
                        infectious.push(c);
                    }
                }
                if infectious.is_empty() {
                    return Ok(SirDecision::Stay);
                }
                let prob = infection_probability(infectious.len() as u32, self.params.b)
                    .map_err(model_err)?;
                if rng.uniform01() < prob {
                    let infector = infectious[rng.uniform_index(infectious.len())];
                    let period = rng
                        .uniform_int(self.params.period_min, self.params.period_max)
                        .map_err(model_err)?;
                    Ok(SirDecision::Infect { infector, period })
                } else {
                    Ok(SirDecision::Stay)
                }
            }
            Health::Inf => {
                let due = p
                    .recovery_time
                    .ok_or_else(|| ModelError::new("infectious agent without recovery time"))?;
                Ok(if p.now >= due {
                    SirDecision::Recover
                } else {
                    SirDecision::Stay
                })
            }
            Health::Rec => Ok(SirDecision::Stay),
        }
    }

    fn act(
        &self,
        decision: SirDecision,
        state: &GlobalState,
        agent: usize,
    ) -> Result<Action<()>, ModelError> {
        let now = state.clock.round() as i64;
        Ok(match decision {
            SirDecision::Stay => Action::keep(),
            SirDecision::Infect { infector, period } => Action::replace(AgentState::new(vec![
                Entry::Int(Health::Inf.code()),
                Entry::Int(now + period),
                Entry::Int(infector as i64),
                Entry::Int(now),
            ])),
            SirDecision::Recover => Action::replace(
                state.agents[agent]
                    .clone()
                    .with(HEALTH, Entry::Int(Health::Rec.code())),
            ),
        })
    }

    /// `(S, I, R)` counts.
    fn statistic(&self, state: &GlobalState) -> Vec<f64> {
        Self::counts(state).iter().map(|&c| c as f64).collect()
    }

    fn statistic_names(&self) -> Vec<String> {
        vec!["S".into(), "I".into(), "R".into()]
    }

    fn is_absorbing(&self, state: &GlobalState) -> bool {
        !state
            .agents
            .iter()
            .any(|a| a.int(HEALTH) == Some(Health::Inf.code()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfectionRecord {
    pub infectee: usize,
    pub infector: usize,
    pub time: i64,
}

/// Outcome of one epidemic realisation.
#[derive(Debug, Clone, PartialEq)]
pub struct EpidemicRun {
    pub seed: SeedSpec,
    pub steps: usize,
    pub index: usize,
    /// `(S, I, R)` at every recorded step.
    pub counts: Vec<[usize; 3]>,
    pub times: Vec<f64>,
    /// Every non-index infection, ordered by time then infectee.
    pub records: Vec<InfectionRecord>,
    pub final_state: GlobalState,
}

impl EpidemicRun {
    pub fn from_trajectory(
        seed: SeedSpec,
        steps: usize,
        index: usize,
        trajectory: Trajectory,
    ) -> Self {
        let counts = trajectory
            .aggregates
            .iter()
            .map(|row| [row[0] as usize, row[1] as usize, row[2] as usize])
            .collect();
        let records = infection_records(&trajectory.final_state);
        Self {
            seed,
            steps,
            index,
            counts,
            times: trajectory.times,
            records,
            final_state: trajectory.final_state,
        }
    }

    /// Agents ever infected, the index included.
    pub fn total_infected(&self) -> usize {
        self.records.len() + 1
    }

    pub fn peak_infected(&self) -> usize {
        self.counts.iter().map(|c| c[1]).max().unwrap_or(0)
    }

    pub fn index_health(&self) -> Health {
        health_of(&self.final_state.agents[self.index])
    }
}

pub fn infection_records(state: &GlobalState) -> Vec<InfectionRecord> {
    let mut out: Vec<InfectionRecord> = state
        .agents
        .iter()
        .enumerate()
        .filter_map(|(id, a)| {
            Some(InfectionRecord {
                infectee: id,
                infector: a.int(INFECTOR)? as usize,
                time: a.int(INFECTION_TIME)?,
            })
        })
        .collect();
    out.sort_by_key(|r| (r.time, r.infectee));
    out
}

/// Runs one epidemic with the fixed agent order.
pub fn run_epidemic(params: &SirParams, steps: usize, seed: SeedSpec) -> Result<EpidemicRun, SirError> {
    run_epidemic_with(params, steps, seed, OrderPolicy::Fixed)
}

pub fn run_epidemic_with(
    params: &SirParams,
    steps: usize,
    seed: SeedSpec,
    policy: OrderPolicy,
) -> Result<EpidemicRun, SirError> {
    let model = SirModel::new(params.clone())?;
    let mut rng = RngStream::new(seed);
    let initial = model.initial_state(&mut rng)?;
    let traj = run_discrete_time_with(
        &model,
        initial,
        steps,
        &StepOptions::with_policy(policy),
        &mut rng,
    )?;
    Ok(EpidemicRun::from_trajectory(
        seed,
        steps,
        params.initial_infected,
        traj,
    ))
}

/// Secondary cases caused by the index agent.
pub fn count_secondary_cases(run: &EpidemicRun) -> Result<usize, SirError> {
    if run.index_health() != Health::Rec {
        return Err(SirError::InsufficientHorizon { steps: run.steps });
    }
    Ok(run
        .records
        .iter()
        .filter(|r| r.infector == run.index)
        .count())
}

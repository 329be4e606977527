//! Agent and global state.
//!
//! Snapshot JSON layout:
//!
//! ```json
//! { "clock": 3.0, "env": null, "agents": [[1, 6, null, 0], [0, null, null, null]] }
//! ```
//!
//! Each agent is an array with one entry per declared state variable: JSON
//! integers are codified/integer entries, JSON floats are reals and `null`
//! marks an unset entry.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opaque environment payload carried alongside the agents.
pub type EnvPayload = serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Int(i64),
    Real(f64),
    Unset,
}

impl Entry {
    pub fn as_int(self) -> Option<i64> {
        match self {
            Entry::Int(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_real(self) -> Option<f64> {
        match self {
            Entry::Real(v) => Some(v),
            Entry::Int(v) => Some(v as f64),
            Entry::Unset => None,
        }
    }

    pub fn is_unset(self) -> bool {
        matches!(self, Entry::Unset)
    }
}

/// The state vector of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentState {
    values: Vec<Entry>,
}

impl AgentState {
    pub fn new(values: Vec<Entry>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[Entry] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Entry `i`, or `Unset` when out of range.
    pub fn get(&self, i: usize) -> Entry {
        self.values.get(i).copied().unwrap_or(Entry::Unset)
    }

    pub fn int(&self, i: usize) -> Option<i64> {
        self.get(i).as_int()
    }

    pub fn with(mut self, i: usize, value: Entry) -> Self {
        self.values[i] = value;
        self
    }
}

impl From<Vec<Entry>> for AgentState {
    fn from(values: Vec<Entry>) -> Self {
        Self::new(values)
    }
}

/// All agent states, the environment payload and the simulation clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalState {
    pub clock: f64,
    pub env: EnvPayload,
    pub agents: Vec<AgentState>,
}

impl GlobalState {
    pub fn new(agents: Vec<AgentState>) -> Self {
        Self {
            clock: 0.0,
            env: EnvPayload::Null,
            agents,
        }
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn agent(&self, i: usize) -> Option<&AgentState> {
        self.agents.get(i)
    }

    /// Appends an agent. Only valid between time steps.
    pub fn push_agent(&mut self, agent: AgentState) -> usize {
        self.agents.push(agent);
        self.agents.len() - 1
    }

    /// Removes an agent, shifting later indices down. Only valid between time steps.
    pub fn remove_agent(&mut self, i: usize) -> Option<AgentState> {
        (i < self.agents.len()).then(|| self.agents.remove(i))
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string(self)
    }

    pub fn to_json_pretty(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    /// Integer drawn from a finite code set.
    Coded(Vec<i64>),
    Int,
    Real,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub nullable: bool,
}

impl Variable {
    pub fn coded(name: &str, codes: &[i64]) -> Self {
        Self {
            name: name.into(),
            kind: VarKind::Coded(codes.to_vec()),
            nullable: false,
        }
    }

    pub fn int(name: &str) -> Self {
        Self {
            name: name.into(),
            kind: VarKind::Int,
            nullable: false,
        }
    }

    pub fn real(name: &str) -> Self {
        Self {
            name: name.into(),
            kind: VarKind::Real,
            nullable: false,
        }
    }

    pub fn nullable(mut self) -> Self {
        self.nullable = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchemaError {
    #[error("state has {found} entries, schema declares {expected}")]
    Length { expected: usize, found: usize },
    #[error("variable `{name}`: value {value} is not in its code set")]
    NotInCodeSet { name: String, value: i64 },
    #[error("variable `{name}`: expected {expected}, found {found:?}")]
    Kind {
        name: String,
        expected: &'static str,
        found: Entry,
    },
}

/// Declared state variables of a model.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StateSchema {
    pub variables: Vec<Variable>,
}

impl StateSchema {
    pub fn new(variables: Vec<Variable>) -> Self {
        Self { variables }
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn validate(&self, state: &AgentState) -> Result<(), SchemaError> {
        if state.len() != self.variables.len() {
            return Err(SchemaError::Length {
                expected: self.variables.len(),
                found: state.len(),
            });
        }
        for (var, &entry) in self.variables.iter().zip(state.values()) {
            let kind_err = |expected| SchemaError::Kind {
                name: var.name.clone(),
                expected,
                found: entry,
            };
            match (entry, &var.kind) {
                (Entry::Unset, _) if var.nullable => {}
                (Entry::Unset, _) => return Err(kind_err("a value")),
                (Entry::Int(v), VarKind::Coded(codes)) => {
                    if !codes.contains(&v) {
                        return Err(SchemaError::NotInCodeSet {
                            name: var.name.clone(),
                            value: v,
                        });
                    }
                }
                (Entry::Int(_), VarKind::Int) => {}
                (Entry::Real(_), VarKind::Real) => {}
                (_, VarKind::Coded(_)) => return Err(kind_err("a code")),
                (_, VarKind::Int) => return Err(kind_err("an integer")),
                (_, VarKind::Real) => return Err(kind_err("a real")),
            }
        }
        Ok(())
    }
}

//! Agent-based simulation engine.
//!
//! Models implement the perception-decision-action contract in [`model`];
//! [`scheduler`] evolves them in discrete time or by discrete events;
//! [`montecarlo`] runs seeded ensembles; [`stats`] classifies equilibria;
//! [`calibrate`] fits the SIR transmission probability to a target R0.
//! [`sir`] is the built-in lattice SIR reference model and [`ode`] the
//! classical compartmental system used as a baseline.

pub mod calibrate;
pub mod environment;
pub mod model;
pub mod montecarlo;
pub mod ode;
pub mod rng;
pub mod scheduler;
pub mod sir;
pub mod state;
pub mod stats;

pub use model::{pda_step, project, Action, Model, ModelError};
pub use rng::{create_stream, RngStream, SeedSpec};
pub use scheduler::{run_discrete_time, OrderPolicy, Trajectory};
pub use state::{AgentState, Entry, GlobalState};

/// Engine version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

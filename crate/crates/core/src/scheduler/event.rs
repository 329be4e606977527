//! Discrete-event execution.

use super::EngineError;
use crate::model::{pda_step, Model, ModelError};
use crate::rng::{RngStream, SeedSpec};
use crate::state::GlobalState;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

struct Pending<E> {
    time: f64,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Pending<E> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<E> Eq for Pending<E> {}

impl<E> PartialOrd for Pending<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Pending<E> {
    // Reversed: BinaryHeap is a max-heap and the earliest event must pop first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Pending events ordered by timestamp, then by insertion (FIFO among ties).
pub struct EventQueue<E> {
    heap: BinaryHeap<Pending<E>>,
    next_seq: u64,
    now: f64,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self::new(0.0)
    }
}

impl<E> EventQueue<E> {
    /// An empty queue whose clock starts at `now`.
    pub fn new(now: f64) -> Self {
        Self {
            heap: BinaryHeap::new(),
            next_seq: 0,
            now,
        }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn schedule(&mut self, time: f64, event: E) -> Result<(), EngineError> {
        if !time.is_finite() {
            return Err(EngineError::NonFiniteTime(time));
        }
        if time < self.now {
            return Err(EngineError::EventInPast {
                time,
                now: self.now,
            });
        }
        self.heap.push(Pending {
            time,
            seq: self.next_seq,
            event,
        });
        self.next_seq += 1;
        Ok(())
    }

    /// Timestamp of the next event.
    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|p| p.time)
    }

    /// Removes the next event and advances the queue clock to its timestamp.
    pub fn pop(&mut self) -> Option<(f64, E)> {
        let p = self.heap.pop()?;
        self.now = p.time;
        Some((p.time, p.event))
    }

    fn earliest(&self) -> Option<f64> {
        self.heap.iter().map(|p| p.time).min_by(f64::total_cmp)
    }
}

/// Executes events. Handlers may mutate the state and schedule future events.
pub trait EventHandler {
    type Event;

    fn handle(
        &self,
        event: Self::Event,
        state: &mut GlobalState,
        queue: &mut EventQueue<Self::Event>,
        rng: &mut RngStream,
    ) -> Result<(), ModelError>;
}

/// `(time, state)` after the initial state and after every executed event.
pub type EventTrajectory = Vec<(f64, GlobalState)>;

/// Executes events in queue order until the queue is empty or the next
/// timestamp exceeds `horizon`. The clock jumps to each event's timestamp;
/// the state does not change between events.
pub fn run_discrete_event<H: EventHandler>(
    handler: &H,
    initial: GlobalState,
    mut queue: EventQueue<H::Event>,
    horizon: f64,
    seed: SeedSpec,
) -> Result<EventTrajectory, EngineError> {
    if let Some(t) = queue.earliest() {
        if t < initial.clock {
            return Err(EngineError::EventInPast {
                time: t,
                now: initial.clock,
            });
        }
    }
    queue.now = initial.clock;
    let mut rng = RngStream::new(seed);
    let mut state = initial;
    let mut out = vec![(state.clock, state.clone())];
    let mut executed = 0usize;
    while queue.peek_time().is_some_and(|t| t <= horizon) {
        let (time, event) = queue.pop().expect("peeked");
        state.clock = time;
        handler
            .handle(event, &mut state, &mut queue, &mut rng)
            .map_err(|source| EngineError::Model {
                step: executed,
                source,
            })?;
        executed += 1;
        out.push((time, state.clone()));
    }
    Ok(out)
}

/// Events that activate a single agent's PDA cycle.
///
/// The event payload is the agent index; with `period` set the agent
/// reschedules itself `period` time units later.
pub struct AgentActivations<'m, M> {
    pub model: &'m M,
    pub period: Option<f64>,
}

impl<M: Model> EventHandler for AgentActivations<'_, M> {
    type Event = usize;

    fn handle(
        &self,
        agent: usize,
        state: &mut GlobalState,
        queue: &mut EventQueue<usize>,
        rng: &mut RngStream,
    ) -> Result<(), ModelError> {
        pda_step(self.model, state, agent, rng).map_err(|e| ModelError::new(e.to_string()))?;
        if let Some(p) = self.period {
            queue
                .schedule(state.clock + p, agent)
                .map_err(|e| ModelError::new(e.to_string()))?;
        }
        Ok(())
    }
}

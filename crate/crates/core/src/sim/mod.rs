//! Seeded Monte-Carlo execution of the saturated and queued systems.
//!
//! Every replica owns a ChaCha stream selected by `(seed, stream)`, so a
//! replica's trace depends only on its configuration and stream id. Replicas
//! run in parallel and are combined with the associative, commutative
//! `merge` of their statistics.

mod engine;
mod experiments;
mod queued;
mod saturated;

pub use experiments::{
    record_cohort_trace, run_first_success_experiment, run_return_time_experiment, CohortEvent, CohortRecord,
};
pub use queued::{run_queued, run_queued_replicas, DriftEstimate, QueueReplica, QueueStats};
pub use saturated::{run_saturated, run_saturated_replicas, ReplicaSummary, SaturationStats};

use crate::error::{param, Result};
use crate::model::{BackoffLaw, SystemState};

/// Longest supported horizon; slot counts stay exactly representable as `f64`.
pub const MAX_HORIZON: u64 = 1 << 53;
/// Largest supported population.
pub const MAX_USERS: usize = 4096;

/// Saturated buffers or Poisson-fed queues.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Saturated,
    /// Total arrival rate per slot, split evenly over the queues.
    Queued { lambda: f64 },
}

/// One simulation replica.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub law: BackoffLaw,
    pub initial_state: SystemState,
    pub horizon: u64,
    pub seed: u64,
    /// ChaCha stream of the first replica; replica `r` uses `stream + r`.
    pub stream: u64,
    pub mode: Mode,
    /// Start of the measurement window for tail statistics; `None` means
    /// half the horizon.
    pub burn_in: Option<u64>,
    /// Queue sampling stride in slots (queued mode).
    pub sample_stride: u64,
    /// Cap on the all-zero return times kept per replica.
    pub max_return_samples: usize,
}

impl SimConfig {
    pub fn saturated(law: BackoffLaw, initial_state: SystemState, horizon: u64, seed: u64) -> Self {
        SimConfig {
            law,
            initial_state,
            horizon,
            seed,
            stream: 0,
            mode: Mode::Saturated,
            burn_in: None,
            sample_stride: 100,
            max_return_samples: 10_000,
        }
    }

    pub fn queued(law: BackoffLaw, initial_state: SystemState, horizon: u64, seed: u64, lambda: f64) -> Self {
        SimConfig { mode: Mode::Queued { lambda }, ..Self::saturated(law, initial_state, horizon, seed) }
    }

    pub fn n(&self) -> usize {
        self.initial_state.n()
    }

    pub fn onset(&self) -> u64 {
        self.burn_in.unwrap_or(self.horizon / 2).min(self.horizon)
    }

    pub fn validate(&self) -> Result<()> {
        self.law.validate()?;
        if self.n() < 2 || self.n() > MAX_USERS {
            return param(format!("N must be in 2..={MAX_USERS}, got {}", self.n()));
        }
        if self.horizon == 0 || self.horizon > MAX_HORIZON {
            return param(format!("horizon must be in 1..={MAX_HORIZON}, got {}", self.horizon));
        }
        if let Mode::Queued { lambda } = self.mode {
            if !(lambda.is_finite() && lambda >= 0.0) {
                return param(format!("arrival rate must be >= 0, got {lambda}"));
            }
            if self.sample_stride == 0 {
                return param("sample stride must be positive");
            }
        }
        Ok(())
    }
}

fn check_replicas(replicas: usize) -> Result<()> {
    if replicas == 0 {
        return param("need at least one replica");
    }
    Ok(())
}

/// Histogram addition with zero padding.
pub(crate) fn add_hist(into: &mut Vec<u64>, other: &[u64]) {
    if into.len() < other.len() {
        into.resize(other.len(), 0);
    }
    for (a, b) in into.iter_mut().zip(other) {
        *a += b;
    }
}

pub(crate) fn bump(hist: &mut Vec<u64>, at: usize, by: u64) {
    if hist.len() <= at {
        hist.resize(at + 1, 0);
    }
    hist[at] += by;
}

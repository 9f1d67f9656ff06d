//! Slotted Aloha with exponential backoff.
//!
//! The crate is organised around the saturated `N`-user backoff chain:
//!
//! * [`model`]: backoff laws, one-slot resolution and per-state event
//!   probabilities.
//! * [`sim`]: seeded Monte-Carlo engine for the saturated and queued systems,
//!   with replica management and mergeable statistics.
//! * [`analysis`]: regime classification, collision-instant traces, the
//!   auxiliary birth-death chain, exponential-moment estimates and the
//!   stochastic-dominance test.
//! * [`queueing`]: standard and modified M/G/1 embedded chains and the
//!   saturation-throughput stability experiment.
//! * [`oracle`]: exact solves on the truncated joint chain for small `N`.
//!
//! [`markov`] and [`stats`] hold the sparse chain solvers and the statistical
//! helpers (bootstrap, regression) shared by the modules above.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod markov;
pub mod model;
pub mod oracle;
pub mod queueing;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use model::{BackoffLaw, SlotOutcome, SystemState};

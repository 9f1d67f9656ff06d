//! Analytical objects of the backoff chain and their empirical checks.

mod birth_death;
mod regime;
mod tails;
mod trace;

pub use birth_death::{bd_stationary, simulate_aux_chain, AuxChainRun, BdDistribution, BirthDeathSpec};
pub use regime::{classify_regime, JointRegime, RegimeReport};
pub use tails::{dominance_test, exp_moment, tail_quadratic_fit, DominanceVerdict, ExpMoment, QuadraticFit, TailFunction};
pub use trace::{collision_trace, CollisionTrace, TraceEntry};

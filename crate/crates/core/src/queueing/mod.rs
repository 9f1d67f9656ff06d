//! M/G/1 embedded chains and the queued-system stability experiment.

mod mg1;
mod stability;

pub use mg1::{
    build_chain, compute_zeta, pk_mean, solve_chain, stationary_or_diverge, ChainKind, EmbeddedChain, Mg1Solve,
    Mg1Verdict, ServiceDist, Zeta,
};
pub use stability::{
    estimate_lambda0, stability_experiment, Lambda0Estimate, QueueVerdict, StabilityPoint, TAIL_GROWTH_LIMIT,
};

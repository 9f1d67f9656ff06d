use crate::analysis::{classify_regime, JointRegime};
use crate::error::{param, Result};
use crate::model::{BackoffLaw, SystemState};
use crate::sim::{run_queued_replicas, run_saturated_replicas, DriftEstimate, SimConfig};
use crate::stats::Interval;

/// Saturation throughput estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lambda0Estimate {
    pub mean: f64,
    pub se: f64,
    /// Mean plus and minus three standard errors.
    pub interval: Interval,
    /// False when the backoff chain is not ergodic at these parameters; the
    /// estimate is still produced.
    pub ergodic: bool,
}

/// Mean saturated throughput over `replicas` runs from the all-zero state.
pub fn estimate_lambda0(n: usize, law: BackoffLaw, horizon: u64, replicas: usize, seed: u64) -> Result<Lambda0Estimate> {
    let ergodic = match law {
        BackoffLaw::Exponential { base, offset } => {
            classify_regime(base, offset, n)?.joint_regime == JointRegime::Ergodic
        }
        BackoffLaw::Polynomial { .. } => false,
    };
    let cfg = SimConfig::saturated(law, SystemState::zeros(n)?, horizon, seed);
    let stats = run_saturated_replicas(&cfg, replicas)?;
    let m = stats.replica_throughput();
    let se = if m.se.is_finite() { m.se } else { 0.0 };
    Ok(Lambda0Estimate { mean: m.mean, se, interval: Interval { lo: m.mean - 3.0 * se, hi: m.mean + 3.0 * se }, ergodic })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueueVerdict {
    Stable,
    Unstable,
    Inconclusive,
}

/// Drift verdict at one arrival rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityPoint {
    pub lambda: f64,
    pub drift: DriftEstimate,
    /// Mean tail queue at `horizon` and at `2 * horizon`.
    pub tail_mean: f64,
    pub tail_mean_doubled: f64,
    pub departure_rate: f64,
    pub verdict: QueueVerdict,
}

/// Stable when the drift interval holds zero and the tail mean grows by
/// less than this factor when the horizon doubles.
pub const TAIL_GROWTH_LIMIT: f64 = 1.5;

/// Queued runs at each rate in `lambdas`, at `horizon` and twice that.
/// The drift is taken from the longer run.
pub fn stability_experiment(
    n: usize,
    law: BackoffLaw,
    lambdas: &[f64],
    horizon: u64,
    replicas: usize,
    seed: u64,
) -> Result<Vec<StabilityPoint>> {
    if lambdas.is_empty() {
        return param("empty arrival-rate grid");
    }
    lambdas
        .iter()
        .enumerate()
        .map(|(k, &lambda)| {
            let mut cfg = SimConfig::queued(law, SystemState::zeros(n)?, horizon, seed, lambda);
            cfg.sample_stride = (horizon / 2000).max(1);
            cfg.stream = (k as u64) << 32;
            let short = run_queued_replicas(&cfg, replicas)?;
            cfg.horizon = horizon * 2;
            cfg.stream += 1 << 16;
            let long = run_queued_replicas(&cfg, replicas)?;
            let drift = long.drift_estimate(seed)?;
            let tail_mean = short.mean_queue_tail();
            let tail_mean_doubled = long.mean_queue_tail();
            let bounded = tail_mean_doubled <= TAIL_GROWTH_LIMIT * tail_mean.max(1.0);
            let verdict = if drift.interval.contains(0.0) && bounded {
                QueueVerdict::Stable
            } else if drift.interval.lo > 0.0 {
                QueueVerdict::Unstable
            } else {
                QueueVerdict::Inconclusive
            };
            Ok(StabilityPoint {
                lambda,
                drift,
                tail_mean,
                tail_mean_doubled,
                departure_rate: long.departure_rate(),
                verdict,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda0_rejects_single_user() {
        let law = BackoffLaw::exponential(2.0, 2.0).unwrap();
        assert!(estimate_lambda0(1, law, 100, 2, 1).is_err());
    }

    #[test]
    fn verdicts_at_extremes() {
        let law = BackoffLaw::exponential(2.0, 1.5).unwrap();
        let est = estimate_lambda0(2, law, 200_000, 4, 3).unwrap();
        assert!(est.ergodic);
        let pts = stability_experiment(2, law, &[0.3 * est.mean, 2.0 * est.mean], 100_000, 4, 3).unwrap();
        assert_eq!(pts[0].verdict, QueueVerdict::Stable);
        assert_eq!(pts[1].verdict, QueueVerdict::Unstable);
    }
}

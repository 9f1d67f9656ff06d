use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use super::{check_replicas, Mode, SimConfig};
use crate::error::{param, Error, Result};
use crate::model::apply_in_place;
use crate::stats::{mean_se, ols_slope, replicate_sd, stream_rng, Bootstrap, Interval};

/// One queued-mode replica.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueReplica {
    pub id: u64,
    pub slots: u64,
    pub stride: u64,
    /// Total queue length at slots `0, stride, 2 stride, ...` (before the slot).
    pub samples: Vec<u64>,
    pub arrivals: u64,
    pub departures: u64,
    pub collisions: u64,
    pub final_queues: Vec<u64>,
    pub final_indices: Vec<u32>,
}

impl QueueReplica {
    /// Mean sampled total queue over the last quarter of the horizon.
    pub fn mean_queue_tail(&self) -> f64 {
        let k = self.samples.len();
        let tail = &self.samples[k - (k / 4).max(1)..];
        tail.iter().sum::<u64>() as f64 / tail.len() as f64
    }

    /// Least-squares slope of total queue against slot over the last half.
    pub fn drift(&self) -> f64 {
        let (xs, ys) = self.tail_half();
        if xs.len() < 2 {
            return 0.0;
        }
        ols_slope(&xs, &ys)
    }

    fn tail_half(&self) -> (Vec<f64>, Vec<f64>) {
        let k = self.samples.len();
        let start = k / 2;
        let xs = (start..k).map(|i| (i as u64 * self.stride) as f64).collect();
        let ys = self.samples[start..].iter().map(|&q| q as f64).collect();
        (xs, ys)
    }

    /// Drift with a moving-block bootstrap interval (three bootstrap
    /// standard deviations) built from resampled sample increments.
    pub fn drift_estimate(&self, seed: u64) -> Result<DriftEstimate> {
        let (_, ys) = self.tail_half();
        if ys.len() < 3 {
            return param("need at least three samples in the drift window");
        }
        let slope = self.drift();
        let incs: Vec<f64> = ys.windows(2).map(|w| w[1] - w[0]).collect();
        let xs: Vec<f64> = (0..ys.len()).map(|i| (i as u64 * self.stride) as f64).collect();
        let boot = Bootstrap::for_len(incs.len(), seed ^ self.id);
        let reps = boot.replicates(&incs, |d| {
            let mut path = Vec::with_capacity(d.len() + 1);
            let mut acc = 0.0;
            path.push(acc);
            for x in d {
                acc += x;
                path.push(acc);
            }
            ols_slope(&xs, &path)
        })?;
        let se = replicate_sd(&reps);
        Ok(DriftEstimate { slope, se, interval: Interval { lo: slope - 3.0 * se, hi: slope + 3.0 * se } })
    }

    /// Arrivals equal departures plus what is still queued.
    pub fn is_conserved(&self) -> bool {
        self.arrivals == self.departures + self.final_queues.iter().sum::<u64>()
    }
}

/// Queue-growth slope in packets per slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftEstimate {
    pub slope: f64,
    pub se: f64,
    pub interval: Interval,
}

/// Queued-mode statistics over replicas, kept in replica-id order.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueStats {
    pub n: usize,
    pub replicas: Vec<QueueReplica>,
}

impl QueueStats {
    pub fn empty(n: usize) -> Self {
        QueueStats { n, replicas: Vec::new() }
    }

    pub fn departures(&self) -> u64 {
        self.replicas.iter().map(|r| r.departures).sum()
    }

    pub fn arrivals(&self) -> u64 {
        self.replicas.iter().map(|r| r.arrivals).sum()
    }

    pub fn slots(&self) -> u64 {
        self.replicas.iter().map(|r| r.slots).sum()
    }

    pub fn departure_rate(&self) -> f64 {
        self.departures() as f64 / self.slots() as f64
    }

    /// Sample-wise average of the total queue over replicas.
    pub fn sampled_total_queue(&self) -> Vec<f64> {
        let Some(len) = self.replicas.iter().map(|r| r.samples.len()).min() else {
            return Vec::new();
        };
        let r = self.replicas.len() as f64;
        (0..len).map(|i| self.replicas.iter().map(|x| x.samples[i] as f64).sum::<f64>() / r).collect()
    }

    pub fn mean_queue_tail(&self) -> f64 {
        mean_se(&self.replicas.iter().map(QueueReplica::mean_queue_tail).collect::<Vec<_>>()).mean
    }

    /// Mean replica drift with its standard error. With a single replica the
    /// error comes from the block bootstrap.
    pub fn drift_estimate(&self, seed: u64) -> Result<DriftEstimate> {
        match self.replicas.as_slice() {
            [] => param("no replicas"),
            [one] => one.drift_estimate(seed),
            many => {
                let m = mean_se(&many.iter().map(QueueReplica::drift).collect::<Vec<_>>());
                Ok(DriftEstimate {
                    slope: m.mean,
                    se: m.se,
                    interval: Interval { lo: m.mean - 3.0 * m.se, hi: m.mean + 3.0 * m.se },
                })
            }
        }
    }

    pub fn merge(&self, other: &QueueStats) -> Result<QueueStats> {
        if self.n != other.n {
            return param(format!("cannot merge statistics for N = {} and N = {}", self.n, other.n));
        }
        let mut replicas: Vec<QueueReplica> = self.replicas.iter().chain(&other.replicas).cloned().collect();
        replicas.sort_by_key(|r| r.id);
        Ok(QueueStats { n: self.n, replicas })
    }
}

/// Simulates one queued replica on stream `config.stream`.
pub fn run_queued(config: &SimConfig) -> Result<QueueStats> {
    config.validate()?;
    let lambda = lambda_of(config)?;
    let rep = simulate(config, lambda, config.stream)?;
    Ok(QueueStats { n: config.n(), replicas: vec![rep] })
}

/// Parallel replicas on streams `stream..stream + replicas`.
pub fn run_queued_replicas(config: &SimConfig, replicas: usize) -> Result<QueueStats> {
    config.validate()?;
    check_replicas(replicas)?;
    let lambda = lambda_of(config)?;
    let reps = (0..replicas as u64)
        .into_par_iter()
        .map(|r| simulate(config, lambda, config.stream + r))
        .collect::<Result<Vec<_>>>()?;
    Ok(QueueStats { n: config.n(), replicas: reps })
}

fn lambda_of(config: &SimConfig) -> Result<f64> {
    match config.mode {
        Mode::Queued { lambda } => Ok(lambda),
        Mode::Saturated => param("run_queued needs a queued configuration"),
    }
}

fn arrivals(rng: &mut ChaCha8Rng, dist: &Option<Poisson<f64>>) -> u64 {
    match dist {
        Some(d) => d.sample(rng) as u64,
        None => 0,
    }
}

fn simulate(config: &SimConfig, lambda: f64, stream: u64) -> Result<QueueReplica> {
    let n = config.n();
    let law = config.law;
    let mut rng = stream_rng(config.seed, stream);
    let per_queue = lambda / n as f64;
    let dist = if per_queue > 0.0 {
        Some(Poisson::new(per_queue).map_err(|e| Error::Parameter(format!("arrival rate: {e}")))?)
    } else {
        None
    };
    let mut idx = config.initial_state.indices().to_vec();
    let mut beta: Vec<f64> = idx.iter().map(|&x| law.probability(x)).collect();
    let mut queues = vec![0u64; n];
    let mut total = 0u64;
    let (mut arrived, mut departed, mut collisions) = (0u64, 0u64, 0u64);
    let stride = config.sample_stride;
    let mut samples = Vec::with_capacity((config.horizon / stride + 1) as usize);
    let mut set = Vec::with_capacity(n);
    for t in 0..config.horizon {
        if t % stride == 0 {
            samples.push(total);
        }
        for q in queues.iter_mut() {
            let a = arrivals(&mut rng, &dist);
            *q += a;
            arrived += a;
            total += a;
        }
        set.clear();
        for u in 0..n {
            if queues[u] > 0 && rng.random::<f64>() < beta[u] {
                set.push(u);
            }
        }
        match set.len() {
            0 => {}
            1 => {
                let u = set[0];
                queues[u] -= 1;
                total -= 1;
                departed += 1;
            }
            _ => collisions += 1,
        }
        apply_in_place(&mut idx, &set);
        for &u in &set {
            beta[u] = law.probability(idx[u]);
        }
    }
    Ok(QueueReplica {
        id: stream,
        slots: config.horizon,
        stride,
        samples,
        arrivals: arrived,
        departures: departed,
        collisions,
        final_queues: queues,
        final_indices: idx,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BackoffLaw, SystemState};

    fn cfg(lambda: f64, horizon: u64) -> SimConfig {
        SimConfig::queued(BackoffLaw::exponential(2.0, 1.5).unwrap(), SystemState::zeros(2).unwrap(), horizon, 8, lambda)
    }

    #[test]
    fn no_arrivals_no_departures() {
        let s = run_queued(&cfg(0.0, 10_000)).unwrap();
        assert_eq!(s.departures(), 0);
        assert!(s.replicas[0].samples.iter().all(|&q| q == 0));
        assert_eq!(s.replicas[0].final_indices, vec![0, 0]);
    }

    #[test]
    fn conservation_and_determinism() {
        let s = run_queued_replicas(&cfg(0.3, 50_000), 3).unwrap();
        assert!(s.replicas.iter().all(QueueReplica::is_conserved));
        assert_eq!(s, run_queued_replicas(&cfg(0.3, 50_000), 3).unwrap());
        let merged = run_queued(&cfg(0.3, 50_000)).unwrap();
        let mut c1 = cfg(0.3, 50_000);
        c1.stream = 1;
        let mut c2 = cfg(0.3, 50_000);
        c2.stream = 2;
        let m = merged.merge(&run_queued(&c2).unwrap()).unwrap().merge(&run_queued(&c1).unwrap()).unwrap();
        assert_eq!(m, s);
        assert_eq!(s.merge(&QueueStats::empty(2)).unwrap(), s);
        assert!(s.merge(&QueueStats::empty(3)).is_err());
    }

    #[test]
    fn light_load_departures_track_arrivals() {
        let s = run_queued(&cfg(0.2, 200_000)).unwrap();
        let r = s.departure_rate();
        assert!((r - 0.2).abs() < 0.01, "departure rate {r}");
    }

    #[test]
    fn rejects_saturated_mode_and_negative_rate() {
        let mut c = cfg(0.1, 10);
        c.mode = Mode::Saturated;
        assert!(run_queued(&c).is_err());
        assert!(run_queued(&cfg(-0.1, 10)).is_err());
    }
}

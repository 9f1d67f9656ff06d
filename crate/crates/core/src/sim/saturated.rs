use rayon::prelude::*;

use super::engine::{Engine, Step};
use super::{add_hist, bump, check_replicas, Mode, SimConfig};
use crate::error::{param, Result};
use crate::model::SlotOutcome;
use crate::stats::{mean_se, stream_rng, MeanSe};

/// Per-replica figures kept through merges, for between-replica errors.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ReplicaSummary {
    pub id: u64,
    pub slots: u64,
    pub successes: u64,
    pub tail_slots: u64,
    pub tail_successes: u64,
    /// User holding the smallest index when the measurement window opened.
    pub winner: usize,
    pub winner_zero_slots: u64,
    /// Largest per-user success count inside the window.
    pub top_user_tail_successes: u64,
    /// Gaps between successive entries into the all-zero state (capped).
    pub return_times: Vec<u64>,
}

impl ReplicaSummary {
    pub fn throughput(&self) -> f64 {
        self.successes as f64 / self.slots as f64
    }

    pub fn tail_throughput(&self) -> f64 {
        self.tail_successes as f64 / self.tail_slots as f64
    }

    pub fn x1_zero_fraction(&self) -> f64 {
        self.winner_zero_slots as f64 / self.tail_slots as f64
    }

    /// Share of window successes owned by the busiest user.
    pub fn single_user_share(&self) -> f64 {
        self.top_user_tail_successes as f64 / self.tail_successes as f64
    }
}

/// Saturated-system statistics, summed over replicas.
///
/// Window ("tail") figures cover slots `burn_in..horizon`; state-occupancy
/// counts are in slots, taken at the start of each slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SaturationStats {
    pub n: usize,
    pub slots: u64,
    pub successes: u64,
    pub collisions: u64,
    pub per_user_successes: Vec<u64>,
    pub tail_slots: u64,
    pub tail_successes: u64,
    pub tail_collisions: u64,
    pub tail_per_user_successes: Vec<u64>,
    /// Window slots in which the window-onset winner sat at index zero.
    pub winner_zero_slots: u64,
    /// Window slots in which the smallest index was zero.
    pub min_zero_slots: u64,
    /// Number of entries into the all-zero state and the sum of the gaps.
    pub return_count: u64,
    pub return_sum: u64,
    /// Per-user index histograms over the window.
    pub marginal_histograms: Vec<Vec<u64>>,
    /// Histograms of the r-th smallest index over the window.
    pub rank_histograms: Vec<Vec<u64>>,
    pub replicas: Vec<ReplicaSummary>,
}

impl SaturationStats {
    pub fn empty(n: usize) -> Self {
        SaturationStats {
            n,
            slots: 0,
            successes: 0,
            collisions: 0,
            per_user_successes: vec![0; n],
            tail_slots: 0,
            tail_successes: 0,
            tail_collisions: 0,
            tail_per_user_successes: vec![0; n],
            winner_zero_slots: 0,
            min_zero_slots: 0,
            return_count: 0,
            return_sum: 0,
            marginal_histograms: vec![Vec::new(); n],
            rank_histograms: vec![Vec::new(); n],
            replicas: Vec::new(),
        }
    }

    /// Long-run success rate, successes per slot.
    pub fn throughput(&self) -> f64 {
        self.successes as f64 / self.slots as f64
    }

    pub fn tail_throughput(&self) -> f64 {
        self.tail_successes as f64 / self.tail_slots as f64
    }

    /// Successes per non-idle window slot.
    pub fn tail_busy_efficiency(&self) -> f64 {
        self.tail_successes as f64 / (self.tail_successes + self.tail_collisions) as f64
    }

    /// Fraction of window slots with the onset winner at index zero.
    pub fn x1_zero_fraction(&self) -> f64 {
        self.winner_zero_slots as f64 / self.tail_slots as f64
    }

    /// Fraction of window slots with the smallest index at zero.
    pub fn sorted_x1_zero_fraction(&self) -> f64 {
        self.min_zero_slots as f64 / self.tail_slots as f64
    }

    pub fn zero_state_return_times(&self) -> impl Iterator<Item = u64> + '_ {
        self.replicas.iter().flat_map(|r| r.return_times.iter().copied())
    }

    pub fn mean_return_time(&self) -> f64 {
        self.return_sum as f64 / self.return_count as f64
    }

    /// Mean and standard error of per-replica throughput.
    pub fn replica_throughput(&self) -> MeanSe {
        mean_se(&self.replicas.iter().map(ReplicaSummary::throughput).collect::<Vec<_>>())
    }

    pub fn replica_tail_throughput(&self) -> MeanSe {
        mean_se(&self.replicas.iter().map(ReplicaSummary::tail_throughput).collect::<Vec<_>>())
    }

    /// Associative, commutative combination of two replica sets.
    pub fn merge(&self, other: &SaturationStats) -> Result<SaturationStats> {
        if self.n != other.n {
            return param(format!("cannot merge statistics for N = {} and N = {}", self.n, other.n));
        }
        let mut m = self.clone();
        m.slots += other.slots;
        m.successes += other.successes;
        m.collisions += other.collisions;
        m.tail_slots += other.tail_slots;
        m.tail_successes += other.tail_successes;
        m.tail_collisions += other.tail_collisions;
        m.winner_zero_slots += other.winner_zero_slots;
        m.min_zero_slots += other.min_zero_slots;
        m.return_count += other.return_count;
        m.return_sum += other.return_sum;
        for u in 0..m.n {
            m.per_user_successes[u] += other.per_user_successes[u];
            m.tail_per_user_successes[u] += other.tail_per_user_successes[u];
            add_hist(&mut m.marginal_histograms[u], &other.marginal_histograms[u]);
            add_hist(&mut m.rank_histograms[u], &other.rank_histograms[u]);
        }
        m.replicas.extend(other.replicas.iter().cloned());
        m.replicas.sort();
        Ok(m)
    }
}

/// Simulates one replica on stream `config.stream`.
pub fn run_saturated(config: &SimConfig) -> Result<SaturationStats> {
    config.validate()?;
    if config.mode != Mode::Saturated {
        return param("run_saturated needs a saturated configuration");
    }
    Ok(simulate(config, config.stream))
}

/// Runs `replicas` independent replicas on streams `stream..stream + replicas`
/// in parallel and merges them.
pub fn run_saturated_replicas(config: &SimConfig, replicas: usize) -> Result<SaturationStats> {
    config.validate()?;
    check_replicas(replicas)?;
    if config.mode != Mode::Saturated {
        return param("run_saturated_replicas needs a saturated configuration");
    }
    let parts: Vec<SaturationStats> =
        (0..replicas as u64).into_par_iter().map(|r| simulate(config, config.stream + r)).collect();
    parts.iter().try_fold(SaturationStats::empty(config.n()), |acc, s| acc.merge(s))
}

struct Recorder {
    stats: SaturationStats,
    onset: u64,
    winner: Option<usize>,
    last_zero_visit: Option<u64>,
    return_times: Vec<u64>,
    max_returns: usize,
    sorted: Vec<u32>,
}

impl Recorder {
    /// `d` slots starting at `t` spent in `state` (never straddles the onset).
    fn occupy(&mut self, t: u64, d: u64, state: &[u32]) {
        if d == 0 || t < self.onset {
            return;
        }
        let s = &mut self.stats;
        s.tail_slots += d;
        let winner = *self.winner.get_or_insert_with(|| argmin(state));
        if state[winner] == 0 {
            s.winner_zero_slots += d;
        }
        self.sorted.clear();
        self.sorted.extend_from_slice(state);
        self.sorted.sort_unstable();
        if self.sorted[0] == 0 {
            s.min_zero_slots += d;
        }
        for (u, &x) in state.iter().enumerate() {
            bump(&mut s.marginal_histograms[u], x as usize, d);
        }
        for (r, &x) in self.sorted.iter().enumerate() {
            bump(&mut s.rank_histograms[r], x as usize, d);
        }
    }

    fn successes(&mut self, t: u64, user: usize, count: u64) {
        let s = &mut self.stats;
        s.successes += count;
        s.per_user_successes[user] += count;
        if t >= self.onset {
            s.tail_successes += count;
            s.tail_per_user_successes[user] += count;
        }
    }

    fn collision(&mut self, t: u64) {
        self.stats.collisions += 1;
        if t >= self.onset {
            self.stats.tail_collisions += 1;
        }
    }

    fn zero_visit(&mut self, at: u64) {
        if let Some(prev) = self.last_zero_visit {
            let gap = at - prev;
            self.stats.return_count += 1;
            self.stats.return_sum += gap;
            if self.return_times.len() < self.max_returns {
                self.return_times.push(gap);
            }
        }
        self.last_zero_visit = Some(at);
    }
}

fn argmin(state: &[u32]) -> usize {
    let mut best = 0;
    for (u, &x) in state.iter().enumerate() {
        if x < state[best] {
            best = u;
        }
    }
    best
}

fn simulate(config: &SimConfig, stream: u64) -> SaturationStats {
    let n = config.n();
    let mut rng = stream_rng(config.seed, stream);
    let mut eng = Engine::new(config.law, config.initial_state.indices().to_vec(), vec![false; n]);
    let onset = config.onset();
    let mut rec = Recorder {
        stats: SaturationStats::empty(n),
        onset,
        winner: None,
        last_zero_visit: None,
        return_times: Vec::new(),
        max_returns: config.max_return_samples,
        sorted: Vec::with_capacity(n),
    };
    if config.initial_state.is_all_zero() {
        rec.zero_visit(0);
    }
    let horizon = config.horizon;
    let mut t = 0u64;
    while t < horizon {
        let checkpoint = if t < onset { onset } else { horizon };
        let (quiet, set) = match eng.step(&mut rng, checkpoint - t) {
            Step::Quiet(d) => (d, None),
            Step::Event { quiet, set } => (quiet, Some(set)),
        };
        if quiet > 0 {
            rec.occupy(t, quiet, eng.state());
            for (u, c) in eng.quiet_successes(&mut rng, quiet) {
                rec.successes(t, u, c);
            }
            t += quiet;
        }
        let Some(set) = set else { continue };
        rec.occupy(t, 1, eng.state());
        let was_zero = eng.state().iter().all(|&x| x == 0);
        match eng.apply(&set) {
            SlotOutcome::Success(u) => rec.successes(t, u, 1),
            SlotOutcome::Collision(_) => rec.collision(t),
            SlotOutcome::Idle => unreachable!("changing slots are never idle"),
        }
        t += 1;
        if !was_zero && eng.state().iter().all(|&x| x == 0) {
            rec.zero_visit(t);
        }
    }
    let mut stats = rec.stats;
    stats.slots = horizon;
    let top = stats.tail_per_user_successes.iter().copied().max().unwrap_or(0);
    stats.replicas.push(ReplicaSummary {
        id: stream,
        slots: horizon,
        successes: stats.successes,
        tail_slots: stats.tail_slots,
        tail_successes: stats.tail_successes,
        winner: rec.winner.unwrap_or(0),
        winner_zero_slots: stats.winner_zero_slots,
        top_user_tail_successes: top,
        return_times: rec.return_times,
    });
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BackoffLaw, SystemState};

    fn cfg(i0: f64, n: usize, horizon: u64, seed: u64) -> SimConfig {
        SimConfig::saturated(BackoffLaw::exponential(2.0, i0).unwrap(), SystemState::zeros(n).unwrap(), horizon, seed)
    }

    #[test]
    fn forced_transmit_first_slot_collides() {
        let s = run_saturated(&cfg(0.0, 2, 1, 5)).unwrap();
        assert_eq!(s.collisions, 1);
        assert_eq!(s.successes, 0);
    }

    #[test]
    fn counts_are_consistent() {
        let s = run_saturated(&cfg(1.0, 3, 50_000, 2)).unwrap();
        assert_eq!(s.per_user_successes.iter().sum::<u64>(), s.successes);
        assert_eq!(s.tail_per_user_successes.iter().sum::<u64>(), s.tail_successes);
        assert!(s.successes + s.collisions <= s.slots);
        assert_eq!(s.tail_slots, 25_000);
        for h in &s.marginal_histograms {
            assert_eq!(h.iter().sum::<u64>(), s.tail_slots);
        }
        assert!((0.0..=1.0).contains(&s.throughput()));
    }

    #[test]
    fn identical_config_is_bit_identical() {
        let a = run_saturated(&cfg(0.5, 3, 200_000, 11)).unwrap();
        let b = run_saturated(&cfg(0.5, 3, 200_000, 11)).unwrap();
        assert_eq!(a, b);
        let mut other = cfg(0.5, 3, 200_000, 11);
        other.stream = 1;
        assert_ne!(a, run_saturated(&other).unwrap());
    }

    #[test]
    fn merge_laws() {
        let c = cfg(1.5, 2, 20_000, 4);
        let runs: Vec<_> = (0..3)
            .map(|r| {
                let mut c = c.clone();
                c.stream = r;
                run_saturated(&c).unwrap()
            })
            .collect();
        let e = SaturationStats::empty(2);
        assert_eq!(runs[0].merge(&e).unwrap(), runs[0]);
        let left = runs[0].merge(&runs[1]).unwrap().merge(&runs[2]).unwrap();
        let right = runs[0].merge(&runs[1].merge(&runs[2]).unwrap()).unwrap();
        assert_eq!(left, right);
        assert_eq!(runs[1].merge(&runs[0]).unwrap(), runs[0].merge(&runs[1]).unwrap());
        assert_eq!(run_saturated_replicas(&c, 3).unwrap(), left);
        assert!(runs[0].merge(&SaturationStats::empty(3)).is_err());
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(run_saturated(&cfg(1.0, 2, 0, 1)).is_err());
        let mut q = cfg(1.0, 2, 10, 1);
        q.mode = Mode::Queued { lambda: 0.1 };
        assert!(run_saturated(&q).is_err());
    }
}

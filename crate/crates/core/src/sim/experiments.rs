use rayon::prelude::*;

use super::engine::{Engine, Step};
use super::{check_replicas, MAX_USERS};
use crate::error::{param, Result};
use crate::model::{BackoffLaw, SlotOutcome, SystemState};
use crate::stats::{stream_rng, CensoredSample};

fn check_common(n: usize, law: &BackoffLaw, t_max: u64, replicas: usize) -> Result<()> {
    law.validate()?;
    if !(2..=MAX_USERS).contains(&n) {
        return param(format!("N must be in 2..={MAX_USERS}, got {n}"));
    }
    if t_max == 0 {
        return param("truncation horizon must be at least 1");
    }
    check_replicas(replicas)
}

/// Slots up to and including the first success of a cohort user (users
/// `1..N`), starting from `(0, m, ..., m)`; `None` if none within `t_max`.
fn first_success(n: usize, law: BackoffLaw, m: u32, t_max: u64, seed: u64, stream: u64) -> Option<u64> {
    let mut rng = stream_rng(seed, stream);
    let mut watched = vec![true; n];
    watched[0] = false;
    let start = SystemState::cohort_start(n, m).expect("validated N");
    let mut eng = Engine::new(law, start.indices().to_vec(), watched);
    let mut t = 0u64;
    while t < t_max {
        match eng.step(&mut rng, t_max - t) {
            Step::Quiet(d) => t += d,
            Step::Event { quiet, set } => {
                t += quiet + 1;
                if let SlotOutcome::Success(u) = eng.apply(&set) {
                    if u != 0 {
                        return Some(t);
                    }
                }
            }
        }
    }
    None
}

/// Censored first-success times over `replicas` streams `0..replicas`.
pub fn run_first_success_experiment(
    n: usize,
    law: BackoffLaw,
    m: u32,
    t_max: u64,
    replicas: usize,
    seed: u64,
) -> Result<CensoredSample> {
    check_common(n, &law, t_max, replicas)?;
    let times = (0..replicas as u64).into_par_iter().map(|r| first_success(n, law, m, t_max, seed, r)).collect();
    Ok(CensoredSample { t_max, times })
}

/// First slot at which at least `r` indices are zero, starting from the
/// all-ones state left by a forced all-user collision.
fn return_time(n: usize, law: BackoffLaw, r: usize, t_max: u64, seed: u64, stream: u64) -> Option<u64> {
    let mut rng = stream_rng(seed, stream);
    let mut eng = Engine::new(law, vec![1; n], vec![false; n]);
    let mut t = 0u64;
    while t < t_max {
        match eng.step(&mut rng, t_max - t) {
            Step::Quiet(d) => t += d,
            Step::Event { quiet, set } => {
                t += quiet + 1;
                eng.apply(&set);
                if eng.state().iter().filter(|&&x| x == 0).count() >= r {
                    return Some(t);
                }
            }
        }
    }
    None
}

/// Censored return times of the rank-`r` component (1-based) to zero.
pub fn run_return_time_experiment(
    n: usize,
    law: BackoffLaw,
    r: usize,
    t_max: u64,
    replicas: usize,
    seed: u64,
) -> Result<CensoredSample> {
    check_common(n, &law, t_max, replicas)?;
    if r == 0 || r > n {
        return param(format!("rank must be in 1..={n}, got {r}"));
    }
    let times = (0..replicas as u64).into_par_iter().map(|s| return_time(n, law, r, t_max, seed, s)).collect();
    Ok(CensoredSample { t_max, times })
}

/// A slot in which at least one cohort user transmitted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CohortEvent {
    /// 1-based slot number.
    pub slot: u64,
    /// Index of user 0 at the start of the slot.
    pub x1_before: u32,
    /// All transmitters in the slot, sorted.
    pub transmitters: Vec<usize>,
    pub after: Vec<u32>,
}

impl CohortEvent {
    pub fn cohort_transmitters(&self) -> usize {
        self.transmitters.iter().filter(|&&u| u != 0).count()
    }
}

/// Cohort transmission record from `(0, m, ..., m)`, stopped at the first
/// cohort success.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CohortRecord {
    pub initial: Vec<u32>,
    pub entries: Vec<CohortEvent>,
    pub ended_by_success: bool,
    pub slots_run: u64,
}

/// Records every slot with a cohort transmission until the first cohort
/// success, `max_slots` slots or `max_entries` entries, whichever comes first.
pub fn record_cohort_trace(
    n: usize,
    law: BackoffLaw,
    m: u32,
    max_slots: u64,
    max_entries: usize,
    seed: u64,
    stream: u64,
) -> Result<CohortRecord> {
    check_common(n, &law, max_slots, 1)?;
    let initial = SystemState::cohort_start(n, m)?.indices().to_vec();
    let mut watched = vec![true; n];
    watched[0] = false;
    let mut eng = Engine::new(law, initial.clone(), watched);
    let mut rng = stream_rng(seed, stream);
    let mut entries = Vec::new();
    let mut t = 0u64;
    let mut ended_by_success = false;
    while t < max_slots && entries.len() < max_entries {
        match eng.step(&mut rng, max_slots - t) {
            Step::Quiet(d) => t += d,
            Step::Event { quiet, set } => {
                t += quiet + 1;
                let x1_before = eng.state()[0];
                let outcome = eng.apply(&set);
                if set.iter().any(|&u| u != 0) {
                    entries.push(CohortEvent { slot: t, x1_before, transmitters: set, after: eng.state().to_vec() });
                }
                if matches!(outcome, SlotOutcome::Success(u) if u != 0) {
                    ended_by_success = true;
                    break;
                }
            }
        }
    }
    Ok(CohortRecord { initial, entries, ended_by_success, slots_run: t })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law(i0: f64) -> BackoffLaw {
        BackoffLaw::exponential(2.0, i0).unwrap()
    }

    #[test]
    fn first_success_times_are_positive_and_bounded() {
        let s = run_first_success_experiment(2, law(2.0), 0, 1000, 200, 1).unwrap();
        assert_eq!(s.times.len(), 200);
        assert!(s.times.iter().flatten().all(|&t| (1..=1000).contains(&t)));
        assert_eq!(s, run_first_success_experiment(2, law(2.0), 0, 1000, 200, 1).unwrap());
    }

    #[test]
    fn lone_cohort_user_waits_geometrically() {
        // user 0 at index 0 with i0 large rarely transmits; user 1 at m
        let l = law(6.0);
        let s = run_first_success_experiment(2, l, 0, 1 << 30, 4000, 5).unwrap();
        let p1 = l.probability(0);
        let p = p1 * (1.0 - p1);
        let mean = s.times.iter().map(|t| t.unwrap() as f64).sum::<f64>() / 4000.0;
        let sd = ((1.0 - p) / (p * p)).sqrt() / (4000f64).sqrt();
        assert!((mean - 1.0 / p).abs() < 4.0 * sd, "{mean} vs {}", 1.0 / p);
    }

    #[test]
    fn return_time_rank_one_is_short() {
        let s = run_return_time_experiment(2, law(0.0), 1, 10_000, 100, 3).unwrap();
        assert!(s.times.iter().all(Option::is_some));
        assert!(run_return_time_experiment(2, law(0.0), 3, 10, 1, 3).is_err());
    }

    #[test]
    fn cohort_trace_entries_increase_and_stop_at_success() {
        let rec = record_cohort_trace(3, law(0.0), 5, 1 << 20, 100_000, 9, 0).unwrap();
        assert!(rec.entries.windows(2).all(|w| w[0].slot < w[1].slot));
        assert!(rec.entries.iter().all(|e| e.cohort_transmitters() >= 1));
        if rec.ended_by_success {
            assert_eq!(rec.entries.last().unwrap().cohort_transmitters(), 1);
        }
    }
}

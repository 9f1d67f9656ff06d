//! Exact results on the joint chain truncated at index `M`.
//!
//! States are all vectors in `{0..=M}^N`, numbered in mixed radix with user
//! 0 as the lowest digit. Collisions saturate at `M` rather than leaving the
//! space, so the truncated matrix stays stochastic; the stationary mass on
//! states touching `M` measures how much the truncation matters.

use rayon::prelude::*;

use crate::error::{param, Error, Result};
use crate::markov::{hitting_times, stationary_gth, stationary_power, SparseChain};
use crate::model::{enumerate_patterns, slot_probabilities_from, BackoffLaw};

/// Largest population the oracle enumerates.
pub const MAX_ORACLE_USERS: usize = 10;
/// Default budget on `N * (M+1)^N`.
pub const DEFAULT_BUDGET: u64 = 50_000_000;
/// State counts below this are solved directly; larger chains use power
/// iteration.
pub const DIRECT_LIMIT: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedChain {
    pub n: usize,
    pub m: u32,
    pub law: BackoffLaw,
    pub chain: SparseChain,
}

impl TruncatedChain {
    pub fn states(&self) -> usize {
        self.chain.len()
    }

    pub fn encode(&self, x: &[u32]) -> usize {
        encode(x, self.m)
    }

    pub fn decode(&self, id: usize) -> Vec<u32> {
        decode(id, self.n, self.m)
    }
}

fn encode(x: &[u32], m: u32) -> usize {
    let r = m as usize + 1;
    x.iter().rev().fold(0, |acc, &v| acc * r + v as usize)
}

fn decode(mut id: usize, n: usize, m: u32) -> Vec<u32> {
    let r = m as usize + 1;
    (0..n)
        .map(|_| {
            let v = (id % r) as u32;
            id /= r;
            v
        })
        .collect()
}

fn check_size(n: usize, m: u32, budget: u64) -> Result<usize> {
    if n < 2 {
        return param(format!("N must be at least 2, got {n}"));
    }
    if m < 1 {
        return param("index cap M must be at least 1");
    }
    if n > MAX_ORACLE_USERS {
        return Err(Error::Resource(format!("oracle enumeration limited to N <= {MAX_ORACLE_USERS}, got {n}")));
    }
    let states = (u64::from(m) + 1).checked_pow(n as u32);
    match states {
        Some(s) if s.saturating_mul(n as u64) <= budget => Ok(s as usize),
        _ => Err(Error::Resource(format!("N (M+1)^N exceeds the budget of {budget} for N = {n}, M = {m}"))),
    }
}

/// Rows of the truncated chain; with `absorb`, transitions in which a user
/// of `1..N` succeeds lead to an extra sink state numbered `states`.
fn rows(n: usize, m: u32, law: &BackoffLaw, states: usize, absorb: bool) -> Result<Vec<Vec<(usize, f64)>>> {
    (0..states)
        .into_par_iter()
        .map(|id| {
            let x = decode(id, n, m);
            let beta: Vec<f64> = x.iter().map(|&v| law.probability(v)).collect();
            let mut row = Vec::new();
            let mut next = x.clone();
            enumerate_patterns(&beta, |mask, p| {
                if p == 0.0 {
                    return;
                }
                match mask.count_ones() {
                    0 => row.push((id, p)),
                    1 => {
                        let u = mask.trailing_zeros() as usize;
                        if absorb && u != 0 {
                            row.push((states, p));
                            return;
                        }
                        next.copy_from_slice(&x);
                        next[u] = 0;
                        row.push((encode(&next, m), p));
                    }
                    _ => {
                        for (u, v) in next.iter_mut().enumerate() {
                            *v = if mask >> u & 1 == 1 { (x[u] + 1).min(m) } else { x[u] };
                        }
                        row.push((encode(&next, m), p));
                    }
                }
            })?;
            Ok(row)
        })
        .collect()
}

/// Enumerates the truncated chain, subject to `N (M+1)^N <= budget`.
pub fn build_truncated_chain(n: usize, m: u32, law: BackoffLaw, budget: u64) -> Result<TruncatedChain> {
    law.validate()?;
    let states = check_size(n, m, budget)?;
    let chain = SparseChain::new(rows(n, m, &law, states, false)?)?;
    Ok(TruncatedChain { n, m, law, chain })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    /// Direct solve below [`DIRECT_LIMIT`] states, power iteration above.
    Auto,
    Direct,
    Power,
}

/// Stationary distribution over all `(M+1)^N` states.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactStationary {
    pub pi: Vec<f64>,
    /// Mass on states with some index at `M`.
    pub boundary_mass: f64,
    pub residual: f64,
    /// Size of the closed class reached from the all-zero state.
    pub support: usize,
}

/// Solves `pi P = pi` on the closed class reached from the all-zero state.
pub fn exact_stationary(chain: &TruncatedChain, solver: Solver, tol: f64) -> Result<ExactStationary> {
    let class = chain.chain.closed_class_from(0)?;
    let sub = chain.chain.restrict(&class)?;
    let direct = match solver {
        Solver::Auto => class.len() < DIRECT_LIMIT,
        Solver::Direct => true,
        Solver::Power => false,
    };
    let local = if direct {
        // eliminate states with many busy users first, keep the emptiest last
        let mut order: Vec<usize> = (0..class.len()).collect();
        let key = |k: usize| {
            let x = chain.decode(class[k]);
            let busy = x.iter().filter(|&&v| v > 0).count();
            let sum: u32 = x.iter().sum();
            (std::cmp::Reverse(busy), std::cmp::Reverse(sum), k)
        };
        order.sort_by_key(|&k| key(k));
        stationary_gth(&sub, Some(&order))?
    } else {
        // from the emptiest state: deep states take astronomically long to
        // drain and should start with no mass
        let mut start = vec![0.0; class.len()];
        let emptiest = (0..class.len()).min_by_key(|&k| chain.decode(class[k]).iter().sum::<u32>()).expect("nonempty");
        start[emptiest] = 1.0;
        stationary_power(&sub, &start, tol, 1_000_000)?.pi
    };
    let mut pi = vec![0.0; chain.states()];
    for (k, &s) in class.iter().enumerate() {
        pi[s] = local[k];
    }
    let residual = chain.chain.residual(&pi);
    if residual > tol.max(1e-10) {
        return Err(Error::Diagnostic(format!("stationary residual {residual:e} above tolerance")));
    }
    let boundary_mass =
        pi.iter().enumerate().filter(|&(s, &p)| p > 0.0 && chain.decode(s).contains(&chain.m)).map(|(_, p)| p).sum();
    Ok(ExactStationary { pi, boundary_mass, residual, support: class.len() })
}

/// `sum_x pi(x) Pr(success | x)`.
pub fn exact_throughput(chain: &TruncatedChain, pi: &[f64]) -> Result<f64> {
    if pi.len() != chain.states() {
        return param("distribution length does not match the chain");
    }
    Ok(pi
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(s, &p)| {
            let beta: Vec<f64> = chain.decode(s).iter().map(|&v| chain.law.probability(v)).collect();
            p * slot_probabilities_from(&beta).success
        })
        .sum())
}

/// Expected number of slots until a user of `1..N` succeeds, from
/// `(0, m, ..., m)` on the chain truncated at `cap`.
pub fn exact_first_success_time(n: usize, cap: u32, law: BackoffLaw, m: u32, budget: u64) -> Result<f64> {
    law.validate()?;
    if m > cap {
        return param(format!("start index {m} above the cap {cap}"));
    }
    let states = check_size(n, cap, budget)?;
    let mut rows = rows(n, cap, &law, states, true)?;
    rows.push(vec![(states, 1.0)]);
    let full = SparseChain::new(rows)?;
    let mut start = vec![m; n];
    start[0] = 0;
    let start = encode(&start, cap);
    let reach = full.reachable_from(start);
    let sub = full.restrict(&reach)?;
    let targets: Vec<bool> = reach.iter().map(|&s| s == states).collect();
    let t = hitting_times(&sub, &targets, None)?;
    let k = reach.binary_search(&start).expect("start is reachable from itself");
    Ok(t[k])
}

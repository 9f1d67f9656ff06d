//! Sparse finite Markov chains and the exact solvers used by the oracle and
//! the queueing module.
//!
//! Stationary vectors are computed by GTH state reduction (Grassmann,
//! Taksar and Heyman): states are censored one at a time and every update
//! adds nonnegative terms, so results keep relative accuracy even when
//! transition probabilities span many orders of magnitude. Expected
//! absorption times use the same elimination with an absorbing-mass column.

use std::collections::{BTreeMap, BTreeSet};

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};

use crate::error::{param, Error, Result};

/// Tolerance on row sums of stochastic and substochastic matrices.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Row-major sparse transition matrix. Rows hold `(column, probability)`
/// pairs sorted by column without duplicates.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseChain {
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseChain {
    /// Builds a chain from unsorted rows, merging duplicate columns and
    /// dropping zero entries. Rows must sum to one.
    pub fn new(rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let chain = Self::from_rows_unchecked(rows);
        chain.check(1.0, true)?;
        Ok(chain)
    }

    /// Like [`SparseChain::new`] but rows may sum to less than one; the
    /// deficit is the probability of leaving the state space.
    pub fn substochastic(rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let chain = Self::from_rows_unchecked(rows);
        chain.check(1.0, false)?;
        Ok(chain)
    }

    fn from_rows_unchecked(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let rows = rows
            .into_iter()
            .map(|row| {
                let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
                for (j, p) in row {
                    if p != 0.0 {
                        *acc.entry(j).or_insert(0.0) += p;
                    }
                }
                acc.into_iter().collect()
            })
            .collect();
        SparseChain { rows }
    }

    fn check(&self, target: f64, exact: bool) -> Result<()> {
        let n = self.rows.len();
        if n == 0 {
            return param("chain has no states");
        }
        for (i, row) in self.rows.iter().enumerate() {
            let mut sum = 0.0;
            for &(j, p) in row {
                if j >= n {
                    return param(format!("row {i} points to state {j} outside 0..{n}"));
                }
                if !(p.is_finite() && p >= 0.0) {
                    return param(format!("row {i} has invalid probability {p}"));
                }
                sum += p;
            }
            let bad = if exact { (sum - target).abs() > ROW_SUM_TOL } else { sum > target + ROW_SUM_TOL };
            if bad {
                return param(format!("row {i} sums to {sum}"));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|&(_, p)| p).sum()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// `pi P`.
    pub fn left_multiply(&self, pi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (i, row) in self.rows.iter().enumerate() {
            let w = pi[i];
            if w == 0.0 {
                continue;
            }
            for &(j, p) in row {
                out[j] += w * p;
            }
        }
        out
    }

    /// `|| pi P - pi ||_1`.
    pub fn residual(&self, pi: &[f64]) -> f64 {
        self.left_multiply(pi).iter().zip(pi).map(|(a, b)| (a - b).abs()).sum()
    }

    /// States reachable from `start`, in increasing order.
    pub fn reachable_from(&self, start: usize) -> Vec<usize> {
        let mut seen = vec![false; self.len()];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            for &(j, _) in &self.rows[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        (0..self.len()).filter(|&i| seen[i]).collect()
    }

    /// The unique closed communicating class reachable from `start`.
    ///
    /// Errors when more than one closed class can be reached, since the
    /// long-run distribution then depends on the path taken.
    pub fn closed_class_from(&self, start: usize) -> Result<Vec<usize>> {
        if start >= self.len() {
            return param(format!("start state {start} out of range"));
        }
        let reach = self.reachable_from(start);
        let mut local = vec![usize::MAX; self.len()];
        let mut g: DiGraph<(), ()> = DiGraph::with_capacity(reach.len(), 0);
        for (k, &s) in reach.iter().enumerate() {
            local[s] = k;
            g.add_node(());
        }
        for &s in &reach {
            for &(j, _) in &self.rows[s] {
                g.add_edge(NodeIndex::new(local[s]), NodeIndex::new(local[j]), ());
            }
        }
        let sccs = tarjan_scc(&g);
        let mut comp = vec![0usize; reach.len()];
        for (c, scc) in sccs.iter().enumerate() {
            for v in scc {
                comp[v.index()] = c;
            }
        }
        let closed: Vec<usize> = (0..sccs.len())
            .filter(|&c| {
                sccs[c].iter().all(|v| {
                    let s = reach[v.index()];
                    self.rows[s].iter().all(|&(j, _)| comp[local[j]] == c)
                })
            })
            .collect();
        match closed.as_slice() {
            [c] => {
                let mut states: Vec<usize> = sccs[*c].iter().map(|v| reach[v.index()]).collect();
                states.sort_unstable();
                Ok(states)
            }
            _ => Err(Error::Diagnostic(format!(
                "{} closed classes reachable from state {start}",
                closed.len()
            ))),
        }
    }

    /// Chain restricted to `states` (which must be closed), renumbered in
    /// the given order. Row deficits of a substochastic chain are kept.
    pub fn restrict(&self, states: &[usize]) -> Result<SparseChain> {
        let mut local = vec![usize::MAX; self.len()];
        for (k, &s) in states.iter().enumerate() {
            local[s] = k;
        }
        let mut rows = Vec::with_capacity(states.len());
        for &s in states {
            let mut row = Vec::with_capacity(self.rows[s].len());
            for &(j, p) in &self.rows[s] {
                if local[j] == usize::MAX {
                    return param(format!("state {s} leaves the restricted set"));
                }
                row.push((local[j], p));
            }
            rows.push(row);
        }
        let chain = Self::from_rows_unchecked(rows);
        chain.check(1.0, false)?;
        Ok(chain)
    }
}

/// Working copy of a (sub)stochastic matrix during state reduction.
struct Reducer {
    out: Vec<BTreeMap<usize, f64>>,
    inn: Vec<BTreeSet<usize>>,
    absorb: Vec<f64>,
    cost: Vec<f64>,
    alive: Vec<bool>,
}

/// Snapshot of one eliminated state needed for back-substitution.
struct Eliminated {
    state: usize,
    exit: f64,
    links: Vec<(usize, f64)>,
    cost: f64,
}

impl Reducer {
    /// Transitions into `targets` count as absorption; with no targets the
    /// row deficits do.
    fn new(chain: &SparseChain, targets: Option<&[bool]>) -> Self {
        let n = chain.len();
        let mut out = vec![BTreeMap::new(); n];
        let mut inn = vec![BTreeSet::new(); n];
        let mut absorb = vec![0.0; n];
        for i in 0..n {
            let mut kept = 0.0;
            for &(j, p) in chain.row(i) {
                if targets.is_some_and(|t| t[j]) {
                    absorb[i] += p;
                } else if j != i {
                    out[i].insert(j, p);
                    inn[j].insert(i);
                }
                kept += p;
            }
            if targets.is_none() {
                absorb[i] = (1.0 - kept).max(0.0);
            }
        }
        Reducer { out, inn, absorb, cost: vec![1.0; n], alive: vec![true; n] }
    }

    /// Censors state `k`, returning the data needed to recover its value.
    /// `incoming` selects whether the snapshot keeps predecessor weights
    /// (stationary solve) or successor weights (absorption times).
    fn eliminate(&mut self, k: usize, incoming: bool) -> Result<Eliminated> {
        let exit: f64 = self.out[k].values().sum::<f64>() + self.absorb[k];
        if exit <= 0.0 {
            return Err(Error::Diagnostic(format!("state {k} has no exit during reduction")));
        }
        let succs: Vec<(usize, f64)> = std::mem::take(&mut self.out[k]).into_iter().collect();
        let preds: Vec<usize> = std::mem::take(&mut self.inn[k]).into_iter().collect();
        let mut pred_weights = Vec::with_capacity(if incoming { preds.len() } else { 0 });
        for &i in &preds {
            let w = self.out[i].remove(&k).unwrap_or(0.0);
            if incoming {
                pred_weights.push((i, w));
            }
            let f = w / exit;
            for &(j, p) in &succs {
                if j != i {
                    *self.out[i].entry(j).or_insert(0.0) += f * p;
                    self.inn[j].insert(i);
                }
            }
            self.absorb[i] += f * self.absorb[k];
            self.cost[i] += f * self.cost[k];
        }
        for &(j, _) in &succs {
            self.inn[j].remove(&k);
        }
        self.alive[k] = false;
        Ok(Eliminated {
            state: k,
            exit,
            links: if incoming { pred_weights } else { succs },
            cost: self.cost[k],
        })
    }
}

fn check_order(n: usize, order: &[usize]) -> Result<()> {
    if order.len() != n {
        return param(format!("elimination order has {} entries for {n} states", order.len()));
    }
    let mut seen = vec![false; n];
    for &s in order {
        if s >= n || std::mem::replace(&mut seen[s], true) {
            return param("elimination order is not a permutation");
        }
    }
    Ok(())
}

/// Stationary distribution of an irreducible chain by GTH reduction.
///
/// `order` lists states in elimination order; the last entry is kept as the
/// reference state. `None` eliminates from the highest state down.
pub fn stationary_gth(chain: &SparseChain, order: Option<&[usize]>) -> Result<Vec<f64>> {
    let n = chain.len();
    let default: Vec<usize>;
    let order = match order {
        Some(o) => {
            check_order(n, o)?;
            o
        }
        None => {
            default = (0..n).rev().collect();
            &default
        }
    };
    let mut red = Reducer::new(chain, None);
    if red.absorb.iter().any(|&a| a > ROW_SUM_TOL) {
        return param("stationary solve needs a stochastic matrix");
    }
    red.absorb.iter_mut().for_each(|a| *a = 0.0);
    let mut log = Vec::with_capacity(n - 1);
    for &k in &order[..n - 1] {
        log.push(red.eliminate(k, true).map_err(|_| {
            Error::Diagnostic(format!("chain is reducible: state {k} cannot reach the remaining states"))
        })?);
    }
    let mut pi = vec![0.0; n];
    pi[order[n - 1]] = 1.0;
    for e in log.iter().rev() {
        let mass: f64 = e.links.iter().map(|&(i, w)| pi[i] * w).sum();
        pi[e.state] = mass / e.exit;
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= total);
    Ok(pi)
}

/// Expected number of steps until absorption from every state of a
/// substochastic chain (the row deficit is the absorption probability).
pub fn absorption_times(chain: &SparseChain, order: Option<&[usize]>) -> Result<Vec<f64>> {
    absorption_solve(chain, None, order)
}

/// Expected number of steps until the chain first enters `targets`, from
/// every state (zero on targets). Absorption mass is summed from the
/// transition entries, so probabilities far below the rounding error of a
/// row sum still count.
pub fn hitting_times(chain: &SparseChain, targets: &[bool], order: Option<&[usize]>) -> Result<Vec<f64>> {
    if targets.len() != chain.len() {
        return param("target mask has the wrong length");
    }
    absorption_solve(chain, Some(targets), order)
}

fn absorption_solve(chain: &SparseChain, targets: Option<&[bool]>, order: Option<&[usize]>) -> Result<Vec<f64>> {
    let n = chain.len();
    let is_target = |i: usize| targets.is_some_and(|t| t[i]);
    let default: Vec<usize>;
    let order = match order {
        Some(o) => {
            let mut seen = vec![false; n];
            for &s in o {
                if s >= n || is_target(s) || std::mem::replace(&mut seen[s], true) {
                    return param("elimination order must list every non-target state once");
                }
            }
            if (0..n).any(|i| !is_target(i) && !seen[i]) {
                return param("elimination order must list every non-target state once");
            }
            o
        }
        None => {
            default = (0..n).rev().filter(|&i| !is_target(i)).collect();
            &default
        }
    };
    let mut red = Reducer::new(chain, targets);
    let mut log = Vec::with_capacity(n);
    for &k in order {
        log.push(red.eliminate(k, false).map_err(|_| {
            Error::Diagnostic(format!("singular system: state {k} cannot reach absorption"))
        })?);
    }
    let mut t = vec![0.0; n];
    for e in log.iter().rev() {
        let ahead: f64 = e.links.iter().map(|&(j, p)| p * t[j]).sum();
        t[e.state] = (e.cost + ahead) / e.exit;
    }
    Ok(t)
}

/// Outcome of [`stationary_power`].
#[derive(Debug, Clone)]
pub struct PowerResult {
    pub pi: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Power iteration with Cesàro averaging, started from `start`.
///
/// The running average of the iterates converges for periodic chains too.
/// Stops once the averaged vector has `||pi P - pi||_1 < tol`.
pub fn stationary_power(chain: &SparseChain, start: &[f64], tol: f64, max_iter: usize) -> Result<PowerResult> {
    let n = chain.len();
    if start.len() != n {
        return param("start vector has the wrong length");
    }
    let mut x = start.to_vec();
    let s: f64 = x.iter().sum();
    if !(s > 0.0) {
        return param("start vector must have positive mass");
    }
    x.iter_mut().for_each(|v| *v /= s);
    let mut avg = x.clone();
    for it in 1..=max_iter {
        x = chain.left_multiply(&x);
        let w = 1.0 / (it as f64 + 1.0);
        for (a, v) in avg.iter_mut().zip(&x) {
            *a += w * (v - *a);
        }
        if it % 16 == 0 || it == max_iter {
            // the plain iterate usually converges first on aperiodic chains
            for cand in [&x, &avg] {
                let r = chain.residual(cand);
                if r < tol {
                    return Ok(PowerResult { pi: cand.clone(), iterations: it, residual: r });
                }
            }
        }
    }
    Err(Error::Diagnostic(format!("power iteration did not reach residual {tol} in {max_iter} steps")))
}

use std::fmt;

use crate::error::{param, Error, Result};
use crate::markov::{stationary_gth, SparseChain};

/// Tolerance on the total mass of a service distribution.
const PMF_TOL: f64 = 1e-12;
/// Terms of the arrival distribution below this are dropped once past the mode.
const TERM_CUTOFF: f64 = 1e-18;

/// Integer service-time distribution (slots).
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceDist {
    /// `(s, Pr(S = s))` with `s >= 1`, increasing in `s`.
    pmf: Vec<(u64, f64)>,
    /// Mass cut off by truncating an unbounded law.
    pub tail_mass: f64,
}

impl ServiceDist {
    pub fn deterministic(s: u64) -> Result<Self> {
        if s == 0 {
            return param("service time must be at least one slot");
        }
        Ok(ServiceDist { pmf: vec![(s, 1.0)], tail_mass: 0.0 })
    }

    /// Geometric on `1, 2, ...` with the given mean, truncated where the
    /// remaining mass drops below `1e-16`. The cut mass goes to the last point.
    pub fn geometric(mean: f64) -> Result<Self> {
        if !(mean.is_finite() && mean >= 1.0) {
            return param(format!("geometric service mean must be >= 1, got {mean}"));
        }
        if mean == 1.0 {
            return Self::deterministic(1);
        }
        let p = 1.0 / mean;
        let mut pmf = Vec::new();
        let mut left = 1.0;
        let mut s = 1u64;
        while left > 1e-16 {
            let w = p * (1.0 - p).powf((s - 1) as f64);
            pmf.push((s, w));
            left -= w;
            s += 1;
        }
        let tail = left.max(0.0);
        pmf.last_mut().expect("nonempty").1 += tail;
        Ok(ServiceDist { pmf, tail_mass: tail })
    }

    /// From `(slots, probability)` pairs summing to one.
    pub fn from_pairs(pairs: &[(u64, f64)]) -> Result<Self> {
        if pairs.is_empty() {
            return param("empty service distribution");
        }
        let mut pmf: Vec<(u64, f64)> = Vec::with_capacity(pairs.len());
        let mut sorted = pairs.to_vec();
        sorted.sort_by_key(|p| p.0);
        for (s, p) in sorted {
            if s == 0 || !(p.is_finite() && p >= 0.0) {
                return param(format!("invalid service point ({s}, {p})"));
            }
            match pmf.last_mut() {
                Some(last) if last.0 == s => last.1 += p,
                _ => pmf.push((s, p)),
            }
        }
        let total: f64 = pmf.iter().map(|p| p.1).sum();
        if (total - 1.0).abs() > PMF_TOL {
            return param(format!("service probabilities sum to {total}, not 1"));
        }
        Ok(ServiceDist { pmf, tail_mass: 0.0 })
    }

    /// Empirical law of observed service times.
    pub fn from_samples(samples: &[u64]) -> Result<Self> {
        if samples.is_empty() {
            return param("no service samples");
        }
        let mut sorted = samples.to_vec();
        sorted.sort_unstable();
        let n = sorted.len() as f64;
        let mut pmf: Vec<(u64, f64)> = Vec::new();
        for s in sorted {
            if s == 0 {
                return param("service samples must be positive");
            }
            match pmf.last_mut() {
                Some(last) if last.0 == s => last.1 += 1.0,
                _ => pmf.push((s, 1.0)),
            }
        }
        pmf.iter_mut().for_each(|p| p.1 /= n);
        Ok(ServiceDist { pmf, tail_mass: 0.0 })
    }

    /// Parses `det:S`, `geom:MEAN` or `pmf:s=p,s=p,...`.
    pub fn parse(spec: &str) -> Result<Self> {
        let bad = || Error::Parameter(format!("cannot parse service distribution '{spec}'"));
        let (kind, rest) = spec.split_once(':').ok_or_else(bad)?;
        match kind.trim() {
            "det" => Self::deterministic(rest.trim().parse().map_err(|_| bad())?),
            "geom" => Self::geometric(rest.trim().parse().map_err(|_| bad())?),
            "pmf" => {
                let pairs = rest
                    .split(',')
                    .map(|kv| {
                        let (k, v) = kv.split_once('=').ok_or_else(bad)?;
                        Ok((k.trim().parse().map_err(|_| bad())?, v.trim().parse().map_err(|_| bad())?))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Self::from_pairs(&pairs)
            }
            _ => Err(bad()),
        }
    }

    pub fn pmf(&self) -> &[(u64, f64)] {
        &self.pmf
    }

    pub fn mean(&self) -> f64 {
        self.pmf.iter().map(|&(s, p)| s as f64 * p).sum()
    }

    pub fn second_moment(&self) -> f64 {
        self.pmf.iter().map(|&(s, p)| (s as f64).powi(2) * p).sum()
    }
}

impl fmt::Display for ServiceDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("pmf:")?;
        for (k, (s, p)) in self.pmf.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{s}={p:e}")?;
        }
        Ok(())
    }
}

/// Distribution of the number of arrivals during one service.
#[derive(Debug, Clone, PartialEq)]
pub struct Zeta {
    pub probs: Vec<f64>,
    /// `1 - sum(probs)`, the mass cut off by truncation.
    pub tail_mass: f64,
}

/// `zeta_j = sum_s Pr(S = s) e^{-lambda s} (lambda s)^j / j!`.
pub fn compute_zeta(service: &ServiceDist, lambda: f64) -> Result<Zeta> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return param(format!("arrival rate must be >= 0, got {lambda}"));
    }
    let mut probs: Vec<f64> = vec![0.0];
    for &(s, p) in &service.pmf {
        let mu = lambda * s as f64;
        if mu == 0.0 {
            probs[0] += p;
            continue;
        }
        // Poisson terms from the log of the first one, recurrence after
        let mut log_term = -mu;
        let mut j = 0usize;
        loop {
            let term = log_term.exp();
            if probs.len() <= j {
                probs.push(0.0);
            }
            probs[j] += p * term;
            if (j as f64) > mu && term < TERM_CUTOFF {
                break;
            }
            j += 1;
            log_term += mu.ln() - (j as f64).ln();
        }
    }
    let total: f64 = probs.iter().sum();
    Ok(Zeta { probs, tail_mass: (1.0 - total).max(0.0) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainKind {
    /// Queue length left behind by departures.
    Standard,
    /// Queue that never empties: position `p` stands for length `p + 1`.
    Modified,
}

impl fmt::Display for ChainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChainKind::Standard => "standard",
            ChainKind::Modified => "modified",
        })
    }
}

/// Embedded chain truncated at level `r_max`; mass above the top level is
/// reflected onto it.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedChain {
    pub kind: ChainKind,
    pub r_max: usize,
    pub chain: SparseChain,
}

impl EmbeddedChain {
    /// Row `i` as a dense vector over `0..=r_max`.
    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        let mut row = vec![0.0; self.r_max + 1];
        for &(j, p) in self.chain.row(i) {
            row[j] = p;
        }
        row
    }

    /// Expected queue length under a distribution over chain states.
    pub fn mean_queue(&self, pi: &[f64]) -> f64 {
        let shift = match self.kind {
            ChainKind::Standard => 0.0,
            ChainKind::Modified => 1.0,
        };
        pi.iter().enumerate().map(|(i, p)| (i as f64 + shift) * p).sum()
    }
}

pub fn build_chain(kind: ChainKind, zeta: &Zeta, r_max: usize) -> Result<EmbeddedChain> {
    if r_max < 2 {
        return param(format!("truncation level must be at least 2, got {r_max}"));
    }
    let z = &zeta.probs;
    // row of a state with i >= 1 customers: i - 1 + j, reflected at r_max
    let shifted = |base: usize| -> Vec<(usize, f64)> {
        let mut row = Vec::new();
        let mut kept = 0.0;
        for (j, &p) in z.iter().enumerate() {
            let to = base + j;
            if to >= r_max {
                break;
            }
            row.push((to, p));
            kept += p;
        }
        row.push((r_max, (1.0 - kept).max(0.0)));
        row
    };
    let mut rows = Vec::with_capacity(r_max + 1);
    rows.push(match kind {
        ChainKind::Standard => shifted(0),
        ChainKind::Modified => {
            let mut row = shifted(0);
            // zeta_0 and zeta_1 both lead to position 0, zeta_j to j - 1
            for e in row.iter_mut() {
                if e.0 < r_max {
                    e.0 = e.0.saturating_sub(1);
                }
            }
            row
        }
    });
    for i in 1..=r_max {
        rows.push(shifted(i - 1));
    }
    Ok(EmbeddedChain { kind, r_max, chain: SparseChain::new(rows)? })
}

/// Stationary law of a truncated chain, `pi[i]` for state `i`.
pub fn solve_chain(chain: &EmbeddedChain) -> Result<Vec<f64>> {
    stationary_gth(&chain.chain, None)
}

/// Settings for [`stationary_or_diverge`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mg1Solve {
    /// First truncation level; doubled up to `r_cap`.
    pub r0: usize,
    pub r_cap: usize,
    /// Upper-half mass below which the truncation is deemed harmless.
    pub stable_mass: f64,
    /// Upper-half mass above which, at two successive levels, the chain is
    /// declared unstable.
    pub leak_mass: f64,
}

impl Default for Mg1Solve {
    fn default() -> Self {
        Mg1Solve { r0: 100, r_cap: 3200, stable_mass: 1e-9, leak_mass: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mg1Verdict {
    Stable { pi: Vec<f64>, r_max: usize, residual: f64, mean_queue: f64 },
    Unstable { r_max: usize, upper_mass: f64 },
}

impl Mg1Verdict {
    pub fn is_stable(&self) -> bool {
        matches!(self, Mg1Verdict::Stable { .. })
    }
}

/// Solves the chain at doubling truncation levels and watches the mass in
/// the upper half of the state space.
pub fn stationary_or_diverge(kind: ChainKind, zeta: &Zeta, opts: &Mg1Solve) -> Result<Mg1Verdict> {
    if opts.r0 < 2 || opts.r_cap < opts.r0 {
        return param("need 2 <= r0 <= r_cap");
    }
    let mut r = opts.r0;
    let mut leaking = false;
    let mut last: Option<f64> = None;
    loop {
        let chain = build_chain(kind, zeta, r)?;
        let pi = solve_chain(&chain)?;
        let upper: f64 = pi[r / 2..].iter().sum();
        let mean = chain.mean_queue(&pi);
        if upper > opts.leak_mass {
            if leaking {
                return Ok(Mg1Verdict::Unstable { r_max: r, upper_mass: upper });
            }
            leaking = true;
        } else {
            leaking = false;
        }
        let settled = last.is_some_and(|m| (mean - m).abs() <= 1e-6 * m.abs().max(1.0));
        if upper < opts.stable_mass && settled {
            let residual = chain.chain.residual(&pi);
            return Ok(Mg1Verdict::Stable { pi, r_max: r, residual, mean_queue: mean });
        }
        last = Some(mean);
        if r * 2 > opts.r_cap {
            return Err(Error::Diagnostic(format!(
                "no verdict up to truncation level {r}: upper-half mass {upper:e}"
            )));
        }
        r *= 2;
    }
}

/// Pollaczek-Khinchine mean number in system for Poisson(`lambda`) input.
pub fn pk_mean(service: &ServiceDist, lambda: f64) -> Result<f64> {
    let rho = lambda * service.mean();
    if !(rho < 1.0) {
        return param(format!("load {rho} is not below 1"));
    }
    Ok(rho + lambda * lambda * service.second_moment() / (2.0 * (1.0 - rho)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::stream_rng;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::{Distribution, Poisson};

    #[test]
    fn zeta_special_cases() {
        let d = ServiceDist::deterministic(1).unwrap();
        let z = compute_zeta(&d, 0.7).unwrap();
        let mut fact = 1.0;
        for j in 0..10 {
            if j > 0 {
                fact *= j as f64;
            }
            assert_relative_eq!(z.probs[j], (-0.7f64).exp() * 0.7f64.powi(j as i32) / fact, max_relative = 1e-12);
        }
        assert!(z.tail_mass < 1e-10);
        let z0 = compute_zeta(&d, 0.0).unwrap();
        assert_eq!(z0.probs, vec![1.0]);
        assert!(compute_zeta(&d, -1.0).is_err());
    }

    #[test]
    fn zeta_geometric_matches_monte_carlo() {
        let g = ServiceDist::geometric(2.0).unwrap();
        let z = compute_zeta(&g, 0.3).unwrap();
        assert!(z.tail_mass < 1e-10);
        let mut rng = stream_rng(17, 0);
        let draws = 1_000_000;
        let mut counts = vec![0u64; 64];
        for _ in 0..draws {
            let mut s = 1u64;
            while rng.random::<f64>() >= 0.5 {
                s += 1;
            }
            let k = Poisson::new(0.3 * s as f64).unwrap().sample(&mut rng) as usize;
            counts[k.min(63)] += 1;
        }
        for (j, &c) in counts.iter().enumerate().take(6) {
            let f = c as f64 / draws as f64;
            let se = (z.probs[j] * (1.0 - z.probs[j]) / draws as f64).sqrt();
            assert!((f - z.probs[j]).abs() < 3.0 * se + 1e-12, "j={j}: {f} vs {}", z.probs[j]);
        }
    }

    #[test]
    fn matrices_differ_only_in_row_zero() {
        let z = compute_zeta(&ServiceDist::deterministic(1).unwrap(), 0.6).unwrap();
        let s = build_chain(ChainKind::Standard, &z, 40).unwrap();
        let m = build_chain(ChainKind::Modified, &z, 40).unwrap();
        assert_eq!(s.dense_row(0), s.dense_row(1));
        for i in 1..=40 {
            assert_eq!(s.dense_row(i), m.dense_row(i));
        }
        let r0 = m.dense_row(0);
        assert_eq!(r0[0], z.probs[0] + z.probs[1]);
        assert_eq!(r0[1], z.probs[2]);
        assert!(build_chain(ChainKind::Standard, &z, 1).is_err());
    }

    #[test]
    fn deterministic_half_load_matches_pk() {
        let d = ServiceDist::deterministic(1).unwrap();
        let z = compute_zeta(&d, 0.5).unwrap();
        let v = stationary_or_diverge(ChainKind::Standard, &z, &Mg1Solve::default()).unwrap();
        let Mg1Verdict::Stable { mean_queue, residual, .. } = v else { panic!("{v:?}") };
        assert!(residual < 1e-12);
        assert_relative_eq!(mean_queue, pk_mean(&d, 0.5).unwrap(), max_relative = 1e-6);
        assert_relative_eq!(pk_mean(&d, 0.5).unwrap(), 0.75);
    }

    #[test]
    fn overload_is_unstable_for_both_kinds() {
        let z = compute_zeta(&ServiceDist::deterministic(1).unwrap(), 1.5).unwrap();
        for kind in [ChainKind::Standard, ChainKind::Modified] {
            assert!(!stationary_or_diverge(kind, &z, &Mg1Solve::default()).unwrap().is_stable());
        }
    }

    #[test]
    fn empty_input_concentrates_on_row_zero() {
        let z = compute_zeta(&ServiceDist::deterministic(1).unwrap(), 0.0).unwrap();
        let m = build_chain(ChainKind::Modified, &z, 10).unwrap();
        let pi = solve_chain(&m).unwrap();
        assert_relative_eq!(pi[0], 1.0, max_relative = 1e-15);
    }

    #[test]
    fn parse_forms() {
        assert_eq!(ServiceDist::parse("det:3").unwrap().mean(), 3.0);
        assert_relative_eq!(ServiceDist::parse("geom:2").unwrap().mean(), 2.0, max_relative = 1e-12);
        assert_relative_eq!(ServiceDist::parse("pmf:1=0.25,3=0.75").unwrap().mean(), 2.5);
        assert!(ServiceDist::parse("pmf:1=0.5").is_err());
        assert!(ServiceDist::parse("wat").is_err());
    }
}

use rand::Rng;

use crate::error::{param, Result};
use crate::stats::stream_rng;

/// Auxiliary birth-death chain bounding the cohort spread.
///
/// From spread `delta` the chain moves up with probability
/// `alpha(delta) = (N-1) b^-delta` and, above `delta_star`, down with
/// probability `beta = (1 - b^-(x2+i0))^(N-1) / (N-1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BirthDeathSpec {
    pub b: f64,
    pub i0: f64,
    pub n: usize,
    pub x2: u32,
    pub delta_star: u32,
}

impl BirthDeathSpec {
    /// Uses the smallest `delta_star` with `alpha(delta_star) < 1/2`.
    pub fn new(b: f64, i0: f64, n: usize, x2: u32) -> Result<Self> {
        if !(b.is_finite() && b > 1.0) {
            return param(format!("base b must be > 1, got {b}"));
        }
        if !(i0.is_finite() && i0 >= 0.0) {
            return param(format!("offset i0 must be >= 0, got {i0}"));
        }
        if n < 2 {
            return param(format!("N must be at least 2, got {n}"));
        }
        let mut spec = BirthDeathSpec { b, i0, n, x2, delta_star: 0 };
        while spec.alpha(spec.delta_star) >= 0.5 {
            spec.delta_star += 1;
        }
        Ok(spec)
    }

    /// Overrides `delta_star`; it must satisfy `alpha(delta_star) <= 1/2`.
    pub fn with_delta_star(mut self, delta_star: u32) -> Result<Self> {
        self.delta_star = delta_star;
        if self.alpha(delta_star) > 0.5 {
            return param(format!("alpha({delta_star}) = {} exceeds 1/2", self.alpha(delta_star)));
        }
        Ok(self)
    }

    pub fn alpha(&self, delta: u32) -> f64 {
        (self.n - 1) as f64 * self.b.powf(-f64::from(delta))
    }

    pub fn beta(&self) -> f64 {
        let q = self.b.powf(-(f64::from(self.x2) + self.i0));
        (1.0 - q).powi(self.n as i32 - 1) / (self.n - 1) as f64
    }

    /// Unnormalised log weight of `delta_star + k`.
    pub fn log_weight(&self, k: u32) -> f64 {
        let k = f64::from(k);
        let ln_b = self.b.ln();
        let w = (self.n - 1) as f64;
        let q = self.b.powf(-(f64::from(self.x2) + self.i0));
        let ratio = 2.0 * w.ln() - w * (-q).ln_1p();
        -(k * (k - 1.0) / 2.0 + k * f64::from(self.delta_star)) * ln_b + k * ratio
    }
}

/// Stationary law of the auxiliary chain on `delta_star..=delta_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct BdDistribution {
    pub delta_star: u32,
    /// `probs[k]` is the mass at `delta_star + k`.
    pub probs: Vec<f64>,
    /// Mass the untruncated law puts above `delta_max`.
    pub truncation_mass: f64,
}

impl BdDistribution {
    pub fn delta_max(&self) -> u32 {
        self.delta_star + self.probs.len() as u32 - 1
    }

    pub fn prob(&self, delta: u32) -> f64 {
        delta
            .checked_sub(self.delta_star)
            .and_then(|k| self.probs.get(k as usize))
            .copied()
            .unwrap_or(0.0)
    }

    /// `(delta, ln p)` pairs with positive mass.
    pub fn log_points(&self) -> Vec<(f64, f64)> {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(k, &p)| (f64::from(self.delta_star + k as u32), p.ln()))
            .collect()
    }
}

pub fn bd_stationary(spec: &BirthDeathSpec, delta_max: u32) -> Result<BdDistribution> {
    let checked = BirthDeathSpec::new(spec.b, spec.i0, spec.n, spec.x2)?.with_delta_star(spec.delta_star)?;
    if delta_max <= checked.delta_star {
        return param(format!("delta_max {delta_max} must exceed delta_star {}", checked.delta_star));
    }
    let len = delta_max - checked.delta_star + 1;
    let logs: Vec<f64> = (0..len).map(|k| checked.log_weight(k)).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let kept: f64 = weights.iter().sum();
    let mut beyond = 0.0;
    for k in len..len + 256 {
        let w = (checked.log_weight(k) - top).exp();
        beyond += w;
        if w < kept * 1e-300 {
            break;
        }
    }
    Ok(BdDistribution {
        delta_star: checked.delta_star,
        probs: weights.iter().map(|w| w / kept).collect(),
        truncation_mass: beyond / (kept + beyond),
    })
}

/// Occupancy of a simulated run of the auxiliary chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuxChainRun {
    pub steps: u64,
    /// Steps spent at each spread, indexed from 0.
    pub delta_hist: Vec<u64>,
    /// Steps spent with more than one cohort user at the maximum.
    pub multi_top_steps: u64,
}

impl AuxChainRun {
    pub fn multi_top_fraction(&self) -> f64 {
        self.multi_top_steps as f64 / self.steps as f64
    }

    /// Total variation distance between the empirical spread law and `pi`.
    pub fn tv_distance(&self, pi: &BdDistribution) -> f64 {
        let top = self.delta_hist.len().max(pi.delta_max() as usize + 1);
        let total = self.steps as f64;
        (0..top)
            .map(|d| {
                let e = self.delta_hist.get(d).copied().unwrap_or(0) as f64 / total;
                (e - pi.prob(d as u32)).abs()
            })
            .sum::<f64>()
            / 2.0
    }
}

/// Simulates the auxiliary chain on `(delta, c)`, where `c` counts cohort
/// users at the top. It starts at `(delta_star, N - 1)`. A birth moves to
/// `(delta + 1, 1)`. With `c = 1` a death moves down, never below
/// `delta_star`; with `c > 1` the residual mass decrements `c`.
pub fn simulate_aux_chain(spec: &BirthDeathSpec, steps: u64, seed: u64) -> Result<AuxChainRun> {
    let spec = BirthDeathSpec::new(spec.b, spec.i0, spec.n, spec.x2)?.with_delta_star(spec.delta_star)?;
    let beta = spec.beta();
    if spec.alpha(spec.delta_star) + beta > 1.0 {
        return param(format!(
            "alpha + beta = {} exceeds 1; the chain is undefined at these parameters",
            spec.alpha(spec.delta_star) + beta
        ));
    }
    if steps == 0 {
        return param("need at least one step");
    }
    let mut rng = stream_rng(seed, 0xa0c5);
    let mut alpha = Vec::new();
    let mut delta = spec.delta_star;
    let mut c = spec.n - 1;
    let mut hist = Vec::new();
    let mut multi = 0u64;
    for _ in 0..steps {
        crate::sim::bump(&mut hist, delta as usize, 1);
        if c > 1 {
            multi += 1;
        }
        while alpha.len() <= delta as usize {
            alpha.push(spec.alpha(alpha.len() as u32));
        }
        let u: f64 = rng.random();
        if u < alpha[delta as usize] {
            delta += 1;
            c = 1;
        } else if c > 1 {
            c -= 1;
        } else if delta > spec.delta_star && u < alpha[delta as usize] + beta {
            delta -= 1;
        }
    }
    Ok(AuxChainRun { steps, delta_hist: hist, multi_top_steps: multi })
}

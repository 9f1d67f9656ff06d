//! Exact event-skipping sampler for the saturated chain.
//!
//! A slot leaves the state unchanged when it is idle or when its lone
//! transmitter already sits at index zero. Call such a slot *quiet*. From a
//! fixed state the slots are i.i.d., so the number of quiet slots before the
//! next state change is geometric, and the changing slot's transmitter set
//! can be drawn from the product measure conditioned on "not quiet". Runs of
//! quiet slots are therefore consumed in O(N) regardless of their length.
//!
//! A *watched* user is never quiet: its successes are reported as events
//! even at index zero. The first-success and cohort-trace experiments watch
//! the cohort so that every cohort transmission surfaces.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::model::{apply_in_place, BackoffLaw, SlotOutcome};

/// Result of one call to [`Engine::step`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Step {
    /// The whole budget elapsed in quiet slots.
    Quiet(u64),
    /// `quiet` quiet slots, then a state-changing slot with this sorted set.
    Event { quiet: u64, set: Vec<usize> },
}

pub(crate) struct Engine {
    law: BackoffLaw,
    state: Vec<u32>,
    beta: Vec<f64>,
    watched: Vec<bool>,
    // suffix quantities over users i..N
    none: Vec<f64>,
    any: Vec<f64>,
    many: Vec<f64>,
    one_quiet: Vec<f64>,
    one_loud: Vec<f64>,
    fresh: bool,
}

impl Engine {
    pub(crate) fn new(law: BackoffLaw, state: Vec<u32>, watched: Vec<bool>) -> Self {
        let n = state.len();
        debug_assert_eq!(watched.len(), n);
        let beta = state.iter().map(|&x| law.probability(x)).collect();
        Engine {
            law,
            state,
            beta,
            watched,
            none: vec![1.0; n + 1],
            any: vec![0.0; n + 1],
            many: vec![0.0; n + 1],
            one_quiet: vec![0.0; n + 1],
            one_loud: vec![0.0; n + 1],
            fresh: false,
        }
    }

    pub(crate) fn state(&self) -> &[u32] {
        &self.state
    }

    fn is_quiet(&self, u: usize) -> bool {
        self.state[u] == 0 && !self.watched[u]
    }

    fn refresh(&mut self) {
        if self.fresh {
            return;
        }
        let n = self.state.len();
        for i in (0..n).rev() {
            let p = self.beta[i];
            let q = 1.0 - p;
            self.none[i] = q * self.none[i + 1];
            self.any[i] = p + q * self.any[i + 1];
            self.many[i] = p * self.any[i + 1] + q * self.many[i + 1];
            let (z, l) = if self.is_quiet(i) { (p * self.none[i + 1], 0.0) } else { (0.0, p * self.none[i + 1]) };
            self.one_quiet[i] = z + q * self.one_quiet[i + 1];
            self.one_loud[i] = l + q * self.one_loud[i + 1];
        }
        self.fresh = true;
    }

    /// Probability that the next slot changes the state (or involves a
    /// watched transmitter).
    pub(crate) fn change_probability(&mut self) -> f64 {
        self.refresh();
        self.many[0] + self.one_loud[0]
    }

    /// Advances at most `budget` (>= 1) slots.
    pub(crate) fn step(&mut self, rng: &mut ChaCha8Rng, budget: u64) -> Step {
        let p = self.change_probability();
        let gap = geometric(rng, p);
        if gap >= budget {
            return Step::Quiet(budget);
        }
        Step::Event { quiet: gap, set: self.sample_changing_set(rng) }
    }

    /// Draws the transmitter set conditioned on the slot not being quiet.
    fn sample_changing_set(&mut self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        #[derive(Clone, Copy, PartialEq)]
        enum Class {
            Empty,
            OneQuiet,
            Settled,
        }
        self.refresh();
        let n = self.state.len();
        let mut class = Class::Empty;
        let mut set = Vec::with_capacity(2);
        for i in 0..n {
            let p = self.beta[i];
            let ptx = match class {
                Class::Settled => p,
                Class::OneQuiet => p / self.any[i],
                Class::Empty => {
                    let cur = self.many[i] + self.one_loud[i];
                    let after = if self.is_quiet(i) { self.any[i + 1] } else { 1.0 };
                    p * after / cur
                }
            };
            if rng.random::<f64>() < ptx {
                set.push(i);
                class = match class {
                    Class::Empty if self.is_quiet(i) => Class::OneQuiet,
                    _ => Class::Settled,
                };
            }
        }
        set
    }

    /// Lone-transmitter counts per quiet user over `slots` quiet slots from
    /// the current state. Must be called before the next [`Engine::apply`].
    pub(crate) fn quiet_successes(&mut self, rng: &mut ChaCha8Rng, slots: u64) -> Vec<(usize, u64)> {
        self.refresh();
        let quiet_total = self.none[0] + self.one_quiet[0];
        if slots == 0 || self.one_quiet[0] <= 0.0 {
            return Vec::new();
        }
        let mut left = draw_binomial(rng, slots, (self.one_quiet[0] / quiet_total).min(1.0));
        let n = self.state.len();
        // weight of user u being the lone transmitter
        let mut prefix = 1.0;
        let mut weights = Vec::new();
        for u in 0..n {
            if self.is_quiet(u) {
                weights.push((u, self.beta[u] * prefix * self.none[u + 1]));
            }
            prefix *= 1.0 - self.beta[u];
        }
        let mut rest: f64 = weights.iter().map(|w| w.1).sum();
        let mut out = Vec::with_capacity(weights.len());
        for (k, &(u, w)) in weights.iter().enumerate() {
            if left == 0 {
                break;
            }
            let c = if k + 1 == weights.len() { left } else { draw_binomial(rng, left, (w / rest).min(1.0)) };
            if c > 0 {
                out.push((u, c));
            }
            left -= c;
            rest -= w;
        }
        out
    }

    /// Applies a sorted transmitter set.
    pub(crate) fn apply(&mut self, set: &[usize]) -> SlotOutcome {
        let outcome = apply_in_place(&mut self.state, set);
        for &u in set {
            self.beta[u] = self.law.probability(self.state[u]);
        }
        if !set.is_empty() {
            self.fresh = false;
        }
        outcome
    }
}

/// Number of failures before the first success of a Bernoulli(p) sequence.
pub(crate) fn geometric(rng: &mut ChaCha8Rng, p: f64) -> u64 {
    if p >= 1.0 {
        return 0;
    }
    if p <= 0.0 {
        return u64::MAX;
    }
    let u = 1.0 - rng.random::<f64>();
    let g = (u.ln() / (-p).ln_1p()).floor();
    if g >= u64::MAX as f64 {
        u64::MAX
    } else {
        g as u64
    }
}

pub(crate) fn draw_binomial(rng: &mut ChaCha8Rng, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).map(|d| d.sample(rng)).unwrap_or(0)
}

//! One slot of saturated slotted Aloha under a backoff law.
//!
//! Users are identified by their position `0..N` in the state vector. The
//! state is stored per user (unsorted) so identities survive across slots;
//! [`SystemState::sorted`] gives the ordered view used when reporting
//! component ranks.

use std::fmt;

use crate::error::{param, Error, Result};

/// Largest population for which transmitter subsets are enumerated exhaustively.
pub const MAX_ENUMERATION_USERS: usize = 20;

/// Maps a backoff index to a per-slot transmission probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BackoffLaw {
    /// `base^-(index + offset)`.
    Exponential { base: f64, offset: f64 },
    /// `(index + 1)^-alpha`; kept for comparison runs only.
    Polynomial { alpha: f64 },
}

impl BackoffLaw {
    pub fn exponential(base: f64, offset: f64) -> Result<Self> {
        let law = BackoffLaw::Exponential { base, offset };
        law.validate()?;
        Ok(law)
    }

    pub fn polynomial(alpha: f64) -> Result<Self> {
        let law = BackoffLaw::Polynomial { alpha };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            BackoffLaw::Exponential { base, offset } => {
                if !(base.is_finite() && base > 1.0) {
                    return param(format!("exponential base must be > 1, got {base}"));
                }
                if !(offset.is_finite() && offset >= 0.0) {
                    return param(format!("offset i0 must be >= 0, got {offset}"));
                }
            }
            BackoffLaw::Polynomial { alpha } => {
                if !(alpha.is_finite() && alpha > 0.0) {
                    return param(format!("polynomial exponent must be > 0, got {alpha}"));
                }
            }
        }
        Ok(())
    }

    /// Transmission probability at `index`. The law must already be valid.
    #[inline]
    pub fn probability(&self, index: u32) -> f64 {
        match *self {
            BackoffLaw::Exponential { base, offset } => base.powf(-(f64::from(index) + offset)),
            BackoffLaw::Polynomial { alpha } => (f64::from(index) + 1.0).powf(-alpha),
        }
    }

    pub fn base(&self) -> Option<f64> {
        match *self {
            BackoffLaw::Exponential { base, .. } => Some(base),
            BackoffLaw::Polynomial { .. } => None,
        }
    }

    pub fn offset(&self) -> Option<f64> {
        match *self {
            BackoffLaw::Exponential { offset, .. } => Some(offset),
            BackoffLaw::Polynomial { .. } => None,
        }
    }
}

impl fmt::Display for BackoffLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackoffLaw::Exponential { base, offset } => write!(f, "exp(b={base}, i0={offset})"),
            BackoffLaw::Polynomial { alpha } => write!(f, "poly(alpha={alpha})"),
        }
    }
}

/// Checked transmission probability.
pub fn tx_probability(law: &BackoffLaw, index: u32) -> Result<f64> {
    law.validate()?;
    Ok(law.probability(index))
}

/// Per-user backoff indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SystemState {
    indices: Vec<u32>,
}

impl SystemState {
    pub fn new(indices: Vec<u32>) -> Result<Self> {
        if indices.len() < 2 {
            return param(format!("need at least 2 users, got {}", indices.len()));
        }
        Ok(SystemState { indices })
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::new(vec![0; n])
    }

    /// `(0, m, ..., m)`: user 0 at index zero, the cohort `1..N` at `m`.
    pub fn cohort_start(n: usize, m: u32) -> Result<Self> {
        let mut v = vec![m; n];
        if let Some(first) = v.first_mut() {
            *first = 0;
        }
        Self::new(v)
    }

    pub fn n(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn index(&self, user: usize) -> u32 {
        self.indices[user]
    }

    pub fn sorted(&self) -> Vec<u32> {
        let mut v = self.indices.clone();
        v.sort_unstable();
        v
    }

    pub fn is_all_zero(&self) -> bool {
        self.indices.iter().all(|&x| x == 0)
    }

    pub fn zero_count(&self) -> usize {
        self.indices.iter().filter(|&&x| x == 0).count()
    }

    pub(crate) fn indices_mut(&mut self) -> &mut [u32] {
        &mut self.indices
    }
}

impl fmt::Display for SystemState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.indices.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}

/// Classification of one slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SlotOutcome {
    Idle,
    Success(usize),
    /// Transmitters in increasing user order; always at least two.
    Collision(Vec<usize>),
}

impl SlotOutcome {
    pub fn is_success(&self) -> bool {
        matches!(self, SlotOutcome::Success(_))
    }
}

/// Applies one slot with the given transmitter set.
///
/// A lone transmitter resets its index; every member of a collision
/// increments by one. Users outside the set are untouched.
pub fn resolve_slot(state: &SystemState, transmitters: &[usize]) -> Result<(SystemState, SlotOutcome)> {
    let mut set = transmitters.to_vec();
    set.sort_unstable();
    if let Some(&u) = set.last() {
        if u >= state.n() {
            return param(format!("user {u} out of range for N = {}", state.n()));
        }
    }
    if set.windows(2).any(|w| w[0] == w[1]) {
        return param("transmitter set contains duplicates");
    }
    let mut next = state.clone();
    let outcome = apply_in_place(next.indices_mut(), &set);
    Ok((next, outcome))
}

/// Unchecked variant used by the simulators; `set` must be sorted and in range.
pub(crate) fn apply_in_place(indices: &mut [u32], set: &[usize]) -> SlotOutcome {
    match set.len() {
        0 => SlotOutcome::Idle,
        1 => {
            indices[set[0]] = 0;
            SlotOutcome::Success(set[0])
        }
        _ => {
            for &u in set {
                indices[u] = indices[u].saturating_add(1);
            }
            SlotOutcome::Collision(set.to_vec())
        }
    }
}

/// Outcome probabilities of a single slot from a given state.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotProbabilities {
    pub idle: f64,
    pub success: f64,
    pub collision: f64,
    /// Probability that user `u` is the lone transmitter.
    pub per_user_success: Vec<f64>,
}

/// Per-user transmission probabilities for a state.
pub fn tx_vector(state: &SystemState, law: &BackoffLaw) -> Vec<f64> {
    state.indices.iter().map(|&x| law.probability(x)).collect()
}

/// Idle/success/collision probabilities by a forward recursion over users.
///
/// Only sums and products of nonnegative terms are formed, so tiny collision
/// probabilities keep full relative precision.
pub fn slot_probabilities(state: &SystemState, law: &BackoffLaw) -> Result<SlotProbabilities> {
    law.validate()?;
    Ok(slot_probabilities_from(&tx_vector(state, law)))
}

pub(crate) fn slot_probabilities_from(beta: &[f64]) -> SlotProbabilities {
    let (mut none, mut one, mut many) = (1.0f64, 0.0f64, 0.0f64);
    for &p in beta {
        many += one * p;
        one = one * (1.0 - p) + none * p;
        none *= 1.0 - p;
    }
    // prefix/suffix products of (1 - beta) avoid dividing by zero when beta = 1
    let n = beta.len();
    let mut suffix = vec![1.0; n + 1];
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1] * (1.0 - beta[i]);
    }
    let mut prefix = 1.0;
    let per_user_success = (0..n)
        .map(|u| {
            let s = beta[u] * prefix * suffix[u + 1];
            prefix *= 1.0 - beta[u];
            s
        })
        .collect();
    SlotProbabilities { idle: none, success: one, collision: many, per_user_success }
}

/// `sum_u beta(x_u) prod_{v != u} (1 - beta(x_v))`.
pub fn success_probability(state: &SystemState, law: &BackoffLaw) -> Result<f64> {
    Ok(slot_probabilities(state, law)?.success)
}

/// Probability that at least one user of `subset` transmits.
pub fn any_tx_probability(state: &SystemState, law: &BackoffLaw, subset: &[usize]) -> Result<f64> {
    law.validate()?;
    if subset.is_empty() {
        return param("subset must be nonempty");
    }
    let mut any = 0.0f64;
    for &u in subset {
        if u >= state.n() {
            return param(format!("user {u} out of range for N = {}", state.n()));
        }
        let p = law.probability(state.index(u));
        any = p + (1.0 - p) * any;
    }
    Ok(any)
}

/// Calls `visit(mask, probability)` for each of the `2^N` transmitter patterns.
///
/// Bit `u` of `mask` is set when user `u` transmits. Patterns of zero
/// probability (some user with `beta = 1` silent) are still visited.
pub fn enumerate_patterns(beta: &[f64], mut visit: impl FnMut(u32, f64)) -> Result<()> {
    let n = beta.len();
    if n > MAX_ENUMERATION_USERS {
        return Err(Error::Resource(format!(
            "exhaustive enumeration limited to N <= {MAX_ENUMERATION_USERS}, got {n}"
        )));
    }
    for mask in 0u32..(1u32 << n) {
        let mut p = 1.0;
        for (u, &b) in beta.iter().enumerate() {
            p *= if mask >> u & 1 == 1 { b } else { 1.0 - b };
        }
        visit(mask, p);
    }
    Ok(())
}

/// Brute-force slot probabilities over all transmitter patterns.
pub fn enumerate_slot_probabilities(state: &SystemState, law: &BackoffLaw) -> Result<SlotProbabilities> {
    law.validate()?;
    let beta = tx_vector(state, law);
    let mut out = SlotProbabilities {
        idle: 0.0,
        success: 0.0,
        collision: 0.0,
        per_user_success: vec![0.0; beta.len()],
    };
    enumerate_patterns(&beta, |mask, p| match mask.count_ones() {
        0 => out.idle += p,
        1 => {
            out.success += p;
            out.per_user_success[mask.trailing_zeros() as usize] += p;
        }
        _ => out.collision += p,
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn exp(b: f64, i0: f64) -> BackoffLaw {
        BackoffLaw::exponential(b, i0).unwrap()
    }

    fn st(v: &[u32]) -> SystemState {
        SystemState::new(v.to_vec()).unwrap()
    }

    #[test]
    fn tx_probability_examples() {
        assert_eq!(tx_probability(&exp(2.0, 0.0), 0).unwrap(), 1.0);
        assert_eq!(tx_probability(&exp(2.0, 1.0), 1).unwrap(), 0.25);
        assert_eq!(tx_probability(&BackoffLaw::polynomial(1.0).unwrap(), 3).unwrap(), 0.25);
    }

    #[test]
    fn invalid_laws_are_rejected() {
        assert!(BackoffLaw::exponential(1.0, 0.0).is_err());
        assert!(BackoffLaw::exponential(2.0, -0.1).is_err());
        assert!(BackoffLaw::exponential(f64::NAN, 0.0).is_err());
        assert!(BackoffLaw::polynomial(0.0).is_err());
        let bad = BackoffLaw::Exponential { base: 0.5, offset: 0.0 };
        assert!(matches!(tx_probability(&bad, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn resolve_slot_examples() {
        let (s, o) = resolve_slot(&st(&[0, 0]), &[0, 1]).unwrap();
        assert_eq!(s, st(&[1, 1]));
        assert_eq!(o, SlotOutcome::Collision(vec![0, 1]));

        let (s, o) = resolve_slot(&st(&[3, 5]), &[0]).unwrap();
        assert_eq!(s, st(&[0, 5]));
        assert_eq!(o, SlotOutcome::Success(0));

        let (s, o) = resolve_slot(&st(&[3, 5]), &[]).unwrap();
        assert_eq!(s, st(&[3, 5]));
        assert_eq!(o, SlotOutcome::Idle);
    }

    #[test]
    fn resolve_slot_rejects_bad_sets() {
        assert!(resolve_slot(&st(&[0, 0]), &[2]).is_err());
        assert!(resolve_slot(&st(&[0, 0]), &[1, 1]).is_err());
    }

    #[test]
    fn success_probability_examples() {
        assert_eq!(success_probability(&st(&[0, 0]), &exp(2.0, 1.0)).unwrap(), 0.5);
        assert_eq!(success_probability(&st(&[0, 0]), &exp(2.0, 0.0)).unwrap(), 0.0);

        // (0,10,10), b=2, i0=2: sum over the eight transmit patterns.
        let beta = [0.25, 2f64.powi(-12), 2f64.powi(-12)];
        let mut brute = 0.0;
        for mask in 0..8u32 {
            let mut p = 1.0;
            for (u, b) in beta.iter().enumerate() {
                p *= if mask >> u & 1 == 1 { *b } else { 1.0 - b };
            }
            if mask.count_ones() == 1 {
                brute += p;
            }
        }
        let got = success_probability(&st(&[0, 10, 10]), &exp(2.0, 2.0)).unwrap();
        assert_abs_diff_eq!(got, brute, epsilon = 1e-15);
        // exact rational value 16793595 / 2^26
        assert_eq!(got, 16793595.0 / 67108864.0);
    }

    #[test]
    fn any_tx_probability_examples() {
        assert_eq!(any_tx_probability(&st(&[0, 0]), &exp(2.0, 0.0), &[1]).unwrap(), 1.0);
        for m in 0..20u32 {
            let got = any_tx_probability(&st(&[0, m]), &exp(2.0, 1.0), &[1]).unwrap();
            assert_eq!(got, 2f64.powi(-(m as i32) - 1));
        }
        let got = any_tx_probability(&st(&[0, 3, 3]), &exp(2.0, 1.0), &[1, 2]).unwrap();
        assert_abs_diff_eq!(got, 0.12109375, epsilon = 1e-15);
        assert!(any_tx_probability(&st(&[0, 3]), &exp(2.0, 1.0), &[]).is_err());
    }

    #[test]
    fn enumeration_is_capped() {
        let beta = vec![0.5; MAX_ENUMERATION_USERS + 1];
        assert!(matches!(enumerate_patterns(&beta, |_, _| {}), Err(Error::Resource(_))));
    }

    fn law_strategy() -> impl Strategy<Value = BackoffLaw> {
        prop_oneof![
            (1.01f64..8.0, 0.0f64..4.0).prop_map(|(b, i0)| BackoffLaw::Exponential { base: b, offset: i0 }),
            (0.1f64..4.0).prop_map(|alpha| BackoffLaw::Polynomial { alpha }),
        ]
    }

    proptest! {
        #[test]
        fn tx_probability_is_positive_and_decreasing(law in law_strategy(), idx in 0u32..60) {
            let p = law.probability(idx);
            let q = law.probability(idx + 1);
            prop_assert!(p > 0.0 && p <= 1.0);
            prop_assert!(q < p);
        }

        #[test]
        fn slot_probabilities_match_enumeration(
            law in law_strategy(),
            idx in proptest::collection::vec(0u32..12, 2..=10),
        ) {
            let s = SystemState::new(idx).unwrap();
            let fast = slot_probabilities(&s, &law).unwrap();
            let brute = enumerate_slot_probabilities(&s, &law).unwrap();
            prop_assert!((fast.idle - brute.idle).abs() < 1e-12);
            prop_assert!((fast.success - brute.success).abs() < 1e-12);
            prop_assert!((fast.collision - brute.collision).abs() < 1e-12);
            prop_assert!((brute.idle + brute.success + brute.collision - 1.0).abs() < 1e-12);
            for (a, b) in fast.per_user_success.iter().zip(&brute.per_user_success) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn single_user_any_tx_is_tx_probability(
            law in law_strategy(),
            idx in proptest::collection::vec(0u32..30, 2..8),
            pick in 0usize..8,
        ) {
            let s = SystemState::new(idx).unwrap();
            let u = pick % s.n();
            let any = any_tx_probability(&s, &law, &[u]).unwrap();
            prop_assert_eq!(any, law.probability(s.index(u)));
        }

        #[test]
        fn resolve_slot_bounds(
            idx in proptest::collection::vec(0u32..30, 2..8),
            mask in 0u32..256,
        ) {
            let s = SystemState::new(idx).unwrap();
            let set: Vec<usize> = (0..s.n()).filter(|u| mask >> u & 1 == 1).collect();
            let (next, _) = resolve_slot(&s, &set).unwrap();
            let before: i64 = s.indices().iter().map(|&x| i64::from(x)).sum();
            let after: i64 = next.indices().iter().map(|&x| i64::from(x)).sum();
            prop_assert!(after - before <= set.len() as i64);
            for u in 0..s.n() {
                if !set.contains(&u) {
                    prop_assert_eq!(next.index(u), s.index(u));
                }
            }
        }
    }
}

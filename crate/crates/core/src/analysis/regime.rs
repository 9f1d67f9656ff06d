use std::fmt;

use crate::error::{param, Error, Result};

/// Recurrence class of the joint backoff chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JointRegime {
    Ergodic,
    NullRecurrent,
    Transient,
}

impl fmt::Display for JointRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            JointRegime::Ergodic => "ergodic",
            JointRegime::NullRecurrent => "null-recurrent",
            JointRegime::Transient => "transient",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeReport {
    pub b: f64,
    pub i0: f64,
    pub n: usize,
    pub joint_regime: JointRegime,
    /// Largest rank `r` whose sorted component is positive recurrent.
    pub marginal_positive_recurrent_upto: usize,
    /// Whether the long-run throughput is one.
    pub throughput_one: bool,
}

/// Classifies `(b, i0, N)`.
///
/// * joint chain: ergodic iff `i0 > 1`, null recurrent iff `0 < i0 <= 1`,
///   transient iff `i0 = 0`;
/// * rank `r` is positive recurrent iff `i0 > 1/(N - r + 1)`, and rank 1
///   always is;
/// * throughput one iff `i0 <= 1/(N - 1)`.
pub fn classify_regime(b: f64, i0: f64, n: usize) -> Result<RegimeReport> {
    if b.is_nan() || b <= 1.0 {
        return Err(Error::Unsupported(format!("base b must be > 1, got {b}")));
    }
    if !b.is_finite() {
        return param(format!("base b must be finite, got {b}"));
    }
    if !(i0.is_finite() && i0 >= 0.0) {
        return param(format!("offset i0 must be >= 0, got {i0}"));
    }
    if n < 2 {
        return param(format!("N must be at least 2, got {n}"));
    }
    let joint_regime = if i0 > 1.0 {
        JointRegime::Ergodic
    } else if i0 > 0.0 {
        JointRegime::NullRecurrent
    } else {
        JointRegime::Transient
    };
    let r_star = (1..=n).rev().find(|&r| i0 > 1.0 / (n - r + 1) as f64).unwrap_or(1);
    let throughput_one = i0 <= 1.0 / (n - 1) as f64;
    Ok(RegimeReport { b, i0, n, joint_regime, marginal_positive_recurrent_upto: r_star, throughput_one })
}

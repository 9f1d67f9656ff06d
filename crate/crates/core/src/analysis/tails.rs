use nalgebra::{DMatrix, DVector};

use crate::error::{param, Result};
use crate::stats::{percentile_interval, Bootstrap, Interval};

/// Empirical complementary CDF `Pr(X > d)` on the support `0..len`, with
/// binomial standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct TailFunction {
    pub ccdf: Vec<f64>,
    pub se: Vec<f64>,
    pub samples: u64,
}

impl TailFunction {
    /// From a histogram of nonnegative integers; `len` fixes the support.
    pub fn from_histogram(hist: &[u64], len: usize) -> Result<Self> {
        let total: u64 = hist.iter().sum();
        if total == 0 {
            return param("empty histogram");
        }
        let n = total as f64;
        let mut above = total;
        let mut ccdf = Vec::with_capacity(len);
        let mut se = Vec::with_capacity(len);
        for d in 0..len {
            above -= hist.get(d).copied().unwrap_or(0);
            let p = above as f64 / n;
            ccdf.push(p);
            se.push((p * (1.0 - p) / n).sqrt());
        }
        Ok(TailFunction { ccdf, se, samples: total })
    }

    pub fn from_samples(xs: &[u32], len: usize) -> Result<Self> {
        let mut hist = Vec::new();
        for &x in xs {
            crate::sim::bump(&mut hist, x as usize, 1);
        }
        Self::from_histogram(&hist, len)
    }

    pub fn len(&self) -> usize {
        self.ccdf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ccdf.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DominanceVerdict {
    Dominates,
    /// First support point where `A` falls short, and the shortfall.
    Violated { delta: usize, gap: f64 },
}

/// Checks `ccdf_a(d) >= ccdf_b(d) - tolerance * se(d)` at every support
/// point, where `se` combines both standard errors.
pub fn dominance_test(a: &TailFunction, b: &TailFunction, tolerance: f64) -> Result<DominanceVerdict> {
    if a.len() != b.len() || a.is_empty() {
        return param(format!("support mismatch: {} vs {} points", a.len(), b.len()));
    }
    if !(tolerance >= 0.0) {
        return param(format!("tolerance must be >= 0, got {tolerance}"));
    }
    for d in 0..a.len() {
        let se = a.se[d].hypot(b.se[d]);
        let gap = b.ccdf[d] - a.ccdf[d];
        if gap > tolerance * se {
            return Ok(DominanceVerdict::Violated { delta: d, gap });
        }
    }
    Ok(DominanceVerdict::Dominates)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpMoment {
    pub estimate: f64,
    /// 95 % moving-block bootstrap interval.
    pub interval: Interval,
}

/// Sample mean of `b^x` with a block-bootstrap interval.
pub fn exp_moment(series: &[f64], b: f64, seed: u64) -> Result<ExpMoment> {
    if series.is_empty() {
        return param("exp_moment needs a nonempty series");
    }
    if !(b.is_finite() && b > 0.0) {
        return param(format!("base must be positive, got {b}"));
    }
    let ys: Vec<f64> = series.iter().map(|&x| b.powf(x)).collect();
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let reps = Bootstrap::for_len(ys.len(), seed).replicates(&ys, mean)?;
    Ok(ExpMoment { estimate: mean(&ys), interval: percentile_interval(reps, 0.95) })
}

/// Coefficients of `ln p(d) = c2 d^2 + c1 d + c0` with standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticFit {
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
    pub se: [f64; 3],
    pub points: usize,
}

/// Least-squares quadratic fit of `(d, ln p)` pairs. Optional weights are
/// inverse variances of the log-probabilities (for a histogram, the counts).
pub fn tail_quadratic_fit(points: &[(f64, f64)], weights: Option<&[f64]>) -> Result<QuadraticFit> {
    let pts: Vec<(usize, f64, f64)> = points
        .iter()
        .enumerate()
        .filter(|(_, (_, y))| y.is_finite())
        .map(|(i, &(x, y))| (i, x, y))
        .collect();
    if pts.len() < 4 {
        return param(format!("need at least 4 support points with positive mass, got {}", pts.len()));
    }
    if let Some(w) = weights {
        if w.len() != points.len() || w.iter().any(|&w| !(w > 0.0)) {
            return param("weights must be positive and match the points");
        }
    }
    let m = pts.len();
    let mut a = DMatrix::zeros(m, 3);
    let mut y = DVector::zeros(m);
    for (r, &(i, x, v)) in pts.iter().enumerate() {
        let s = weights.map_or(1.0, |w| w[i].sqrt());
        a[(r, 0)] = s * x * x;
        a[(r, 1)] = s * x;
        a[(r, 2)] = s;
        y[r] = s * v;
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= smax * 1e-12 {
        return param("degenerate support for a quadratic fit");
    }
    let coef = svd.solve(&y, smax * 1e-14).map_err(|e| crate::Error::Diagnostic(e.to_string()))?;
    let resid = &y - &a * &coef;
    let dof = (m - 3) as f64;
    let s2 = if dof > 0.0 { resid.norm_squared() / dof } else { 0.0 };
    let v_t = svd.v_t.as_ref().expect("computed");
    let mut se = [0.0; 3];
    for (k, s) in se.iter_mut().enumerate() {
        let var: f64 = (0..3).map(|j| (v_t[(j, k)] / svd.singular_values[j]).powi(2)).sum();
        *s = (s2 * var).sqrt();
    }
    Ok(QuadraticFit { c2: coef[0], c1: coef[1], c0: coef[2], se, points: m })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{bd_stationary, BirthDeathSpec};

    #[test]
    fn exp_moment_examples() {
        let e = exp_moment(&[0.0; 50], 2.0, 1).unwrap();
        assert_eq!(e.estimate, 1.0);
        assert_eq!(e.interval.width(), 0.0);
        let e = exp_moment(&[0.0, 1.0, 0.0, 1.0], 2.0, 1).unwrap();
        assert_eq!(e.estimate, 1.5);
        assert!(exp_moment(&[], 2.0, 1).is_err());
    }

    #[test]
    fn dominance_examples() {
        let a = TailFunction::from_samples(&[0, 1, 1, 2, 3, 3, 4, 7], 10).unwrap();
        assert_eq!(dominance_test(&a, &a, 0.0).unwrap(), DominanceVerdict::Dominates);
        let mut low = a.clone();
        low.ccdf[3] -= 10.0 * a.se[3].hypot(a.se[3]);
        match dominance_test(&low, &a, 3.0).unwrap() {
            DominanceVerdict::Violated { delta, gap } => {
                assert_eq!(delta, 3);
                assert!(gap > 0.0);
            }
            v => panic!("{v:?}"),
        }
        let short = TailFunction::from_samples(&[0, 1], 5).unwrap();
        assert!(dominance_test(&a, &short, 3.0).is_err());
    }

    #[test]
    fn quadratic_fit_on_analytic_vector() {
        let spec = BirthDeathSpec::new(2.0, 0.0, 3, 10).unwrap();
        let pi = bd_stationary(&spec, 30).unwrap();
        let fit = tail_quadratic_fit(&pi.log_points(), None).unwrap();
        assert!((fit.c2 + 2f64.ln() / 2.0).abs() < 1e-9, "{}", fit.c2);
    }

    #[test]
    fn quadratic_fit_on_geometric_is_flat() {
        let pts: Vec<(f64, f64)> = (0..20).map(|d| (d as f64, (0.3f64).ln() + d as f64 * (0.7f64).ln())).collect();
        let fit = tail_quadratic_fit(&pts, None).unwrap();
        assert!(fit.c2.abs() < 1e-10);
        assert!((fit.c1 - 0.7f64.ln()).abs() < 1e-9);
        assert!(tail_quadratic_fit(&pts[..3], None).is_err());
        let same: Vec<(f64, f64)> = (0..6).map(|_| (2.0, -1.0)).collect();
        assert!(tail_quadratic_fit(&same, None).is_err());
    }
}

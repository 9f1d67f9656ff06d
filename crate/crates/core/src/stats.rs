//! Small statistical helpers: summary moments, least squares, moving-block
//! bootstrap and censored samples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{param, Result};

/// Deterministic generator for `(seed, stream)`; distinct streams are
/// independent ChaCha sequences.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

pub fn mean_se(xs: &[f64]) -> MeanSe {
    let n = xs.len();
    if n == 0 {
        return MeanSe { mean: f64::NAN, se: f64::NAN, n };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let se = if n > 1 {
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        f64::NAN
    };
    MeanSe { mean, se, n }
}

/// Least-squares slope of `ys` against `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

/// Two-sided interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Moving-block bootstrap settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bootstrap {
    pub block_len: usize,
    pub resamples: usize,
    pub seed: u64,
}

impl Bootstrap {
    /// Block length of about `n^(1/3)`, 400 resamples.
    pub fn for_len(n: usize, seed: u64) -> Self {
        let block_len = ((n as f64).cbrt().ceil() as usize).max(1);
        Bootstrap { block_len, resamples: 400, seed }
    }

    /// One circular moving-block resample of `xs`.
    fn resample(&self, xs: &[f64], rng: &mut ChaCha8Rng, out: &mut Vec<f64>) {
        let n = xs.len();
        let l = self.block_len.clamp(1, n);
        out.clear();
        while out.len() < n {
            let start = rng.random_range(0..n);
            for k in 0..l {
                if out.len() == n {
                    break;
                }
                out.push(xs[(start + k) % n]);
            }
        }
    }

    /// Bootstrap replicates of `statistic`.
    pub fn replicates(&self, xs: &[f64], mut statistic: impl FnMut(&[f64]) -> f64) -> Result<Vec<f64>> {
        if xs.is_empty() {
            return param("bootstrap needs a nonempty series");
        }
        if self.resamples == 0 {
            return param("bootstrap needs at least one resample");
        }
        let mut rng = stream_rng(self.seed, 0xb007);
        let mut buf = Vec::with_capacity(xs.len());
        Ok((0..self.resamples)
            .map(|_| {
                self.resample(xs, &mut rng, &mut buf);
                statistic(&buf)
            })
            .collect())
    }
}

/// Empirical quantile by linear interpolation on sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile interval of bootstrap replicates at the given level.
pub fn percentile_interval(mut reps: Vec<f64>, level: f64) -> Interval {
    reps.sort_by(f64::total_cmp);
    let a = (1.0 - level) / 2.0;
    Interval { lo: quantile(&reps, a), hi: quantile(&reps, 1.0 - a) }
}

/// Standard deviation of bootstrap replicates.
pub fn replicate_sd(reps: &[f64]) -> f64 {
    let m = mean_se(reps);
    (m.se * m.se * reps.len() as f64).sqrt()
}

/// First-passage times observed up to a censoring horizon.
///
/// `None` marks a replica that had not hit by `t_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct CensoredSample {
    pub t_max: u64,
    pub times: Vec<Option<u64>>,
}

/// Censored mean and its standard error at one horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CensoredPoint {
    pub horizon: u64,
    pub mean: f64,
    pub se: f64,
    pub censored_fraction: f64,
}

impl CensoredSample {
    /// Summary of `min(T, horizon)` over replicas; `horizon <= t_max`.
    pub fn at(&self, horizon: u64) -> Result<CensoredPoint> {
        if horizon > self.t_max {
            return param(format!("horizon {horizon} beyond the simulated {}", self.t_max));
        }
        if self.times.is_empty() {
            return param("no replicas");
        }
        let vals: Vec<f64> = self
            .times
            .iter()
            .map(|t| match t {
                Some(t) if *t <= horizon => *t as f64,
                _ => horizon as f64,
            })
            .collect();
        let censored = self.times.iter().filter(|t| !matches!(t, Some(t) if *t <= horizon)).count();
        let m = mean_se(&vals);
        Ok(CensoredPoint {
            horizon,
            mean: m.mean,
            se: m.se,
            censored_fraction: censored as f64 / self.times.len() as f64,
        })
    }

    /// `Pr(T > t)` estimated at each `t` in `grid`.
    pub fn survival(&self, grid: &[u64]) -> Vec<(u64, f64)> {
        let n = self.times.len() as f64;
        grid.iter()
            .map(|&t| {
                let above = self.times.iter().filter(|x| x.is_none_or(|x| x > t)).count();
                (t, above as f64 / n)
            })
            .collect()
    }
}

/// Shape of censored means along an increasing horizon ladder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LadderVerdict {
    /// Relative change from the first to the last rung is below the tolerance.
    Saturates,
    /// Strictly increasing with total relative growth above the tolerance.
    Diverges,
    Inconclusive,
}

/// Classifies a ladder of censored means; `tol` is the relative change
/// separating saturation from growth (0.02 for the 2 % rule).
pub fn ladder_verdict(points: &[CensoredPoint], tol: f64) -> LadderVerdict {
    if points.len() < 2 {
        return LadderVerdict::Inconclusive;
    }
    let first = points[0].mean;
    let last = points[points.len() - 1].mean;
    let change = (last - first) / first;
    let monotone = points.windows(2).all(|w| w[1].mean > w[0].mean);
    if change.abs() < tol {
        LadderVerdict::Saturates
    } else if monotone && change > tol {
        LadderVerdict::Diverges
    } else {
        LadderVerdict::Inconclusive
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ols_recovers_line() {
        let xs: Vec<f64> = (0..50).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 0.25 * x).collect();
        assert_relative_eq!(ols_slope(&xs, &ys), -0.25, max_relative = 1e-12);
    }

    #[test]
    fn bootstrap_is_deterministic_and_degenerate_on_constants() {
        let xs = vec![2.0; 100];
        let b = Bootstrap::for_len(xs.len(), 9);
        let reps = b.replicates(&xs, |s| s.iter().sum::<f64>() / s.len() as f64).unwrap();
        let iv = percentile_interval(reps.clone(), 0.95);
        assert_eq!(iv.width(), 0.0);
        assert_eq!(reps, b.replicates(&xs, |s| s.iter().sum::<f64>() / s.len() as f64).unwrap());
    }

    #[test]
    fn censored_sample_summaries() {
        let s = CensoredSample { t_max: 10, times: vec![Some(2), Some(4), None, Some(9)] };
        let p = s.at(5).unwrap();
        assert_eq!(p.mean, (2.0 + 4.0 + 5.0 + 5.0) / 4.0);
        assert_eq!(p.censored_fraction, 0.5);
        assert!(s.at(11).is_err());
        assert_eq!(s.survival(&[0, 4, 10]), vec![(0, 1.0), (4, 0.5), (10, 0.25)]);
    }

    #[test]
    fn ladder_shapes() {
        let pt = |mean| CensoredPoint { horizon: 0, mean, se: 0.0, censored_fraction: 0.0 };
        assert_eq!(ladder_verdict(&[pt(10.0), pt(10.1), pt(10.15)], 0.02), LadderVerdict::Saturates);
        assert_eq!(ladder_verdict(&[pt(10.0), pt(13.0), pt(20.0)], 0.02), LadderVerdict::Diverges);
        assert_eq!(ladder_verdict(&[pt(10.0), pt(15.0), pt(14.0)], 0.02), LadderVerdict::Inconclusive);
    }
}

use crate::error::{Error, Result};
use crate::sim::CohortRecord;

/// State of the cohort just after its `j`-th transmission slot.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub slot: u64,
    /// Spread of the cohort indices, max minus min.
    pub delta_n: u32,
    /// Cohort transmitters in the slot beyond the first.
    pub extra: u32,
    /// Running sum of `extra`.
    pub extra_sum: u64,
    /// `extra_sum / (N - 1)`.
    pub delta_c: f64,
    /// Smallest cohort index.
    pub x2: u32,
    /// Sum of cohort indices.
    pub cohort_sum: u64,
}

/// Cohort collision instants on the collision-only prefix of a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionTrace {
    pub n: usize,
    /// Mean initial cohort index.
    pub a0: f64,
    pub initial_sum: u64,
    pub entries: Vec<TraceEntry>,
    /// Fraction of cohort transmission instants (the terminating success
    /// included) at which user 0 sat at index zero.
    pub x1_zero_fraction: f64,
    pub ended_by_success: bool,
}

impl CollisionTrace {
    /// Entries violating `-dN <= x2 - a0 - j/(N-1) <= dC`, checked exactly
    /// after scaling by `N - 1`.
    pub fn sandwich_violations(&self) -> usize {
        let w = (self.n - 1) as i128;
        let s0 = self.initial_sum as i128;
        self.entries
            .iter()
            .enumerate()
            .filter(|(i, e)| {
                let j = *i as i128 + 1;
                let mid = w * e.x2 as i128 - s0 - j;
                let lo = -w * e.delta_n as i128;
                let hi = e.extra_sum as i128;
                !(lo <= mid && mid <= hi)
            })
            .count()
    }

    pub fn delta_n_series(&self) -> Vec<u32> {
        self.entries.iter().map(|e| e.delta_n).collect()
    }

    pub fn delta_c_series(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.delta_c).collect()
    }
}

/// Builds the collision trace of a cohort record and verifies the sum
/// ledger `sum_cohort(k_j) = sum_cohort(0) + j + sum_{l<=j} C(k_l)` and the
/// sandwich bounds at every entry.
pub fn collision_trace(record: &CohortRecord) -> Result<CollisionTrace> {
    let n = record.initial.len();
    if n < 2 {
        return Err(Error::Parameter("trace needs N >= 2".into()));
    }
    let initial_sum: u64 = record.initial[1..].iter().map(|&x| u64::from(x)).sum();
    let zero_hits = record.entries.iter().filter(|e| e.x1_before == 0).count();
    let x1_zero_fraction =
        if record.entries.is_empty() { f64::NAN } else { zero_hits as f64 / record.entries.len() as f64 };
    let prefix = if record.ended_by_success { &record.entries[..record.entries.len() - 1] } else { &record.entries[..] };
    let mut entries = Vec::with_capacity(prefix.len());
    let mut extra_sum = 0u64;
    for (i, ev) in prefix.iter().enumerate() {
        let c = ev.cohort_transmitters();
        if c == 0 {
            return Err(Error::Integrity(format!("entry at slot {} has no cohort transmitter", ev.slot)));
        }
        extra_sum += (c - 1) as u64;
        let cohort = &ev.after[1..];
        let cohort_sum: u64 = cohort.iter().map(|&x| u64::from(x)).sum();
        let j = i as u64 + 1;
        if cohort_sum != initial_sum + j + extra_sum {
            return Err(Error::Integrity(format!(
                "sum ledger fails at slot {}: cohort sum {cohort_sum}, expected {}",
                ev.slot,
                initial_sum + j + extra_sum
            )));
        }
        let x2 = *cohort.iter().min().expect("nonempty cohort");
        let xn = *cohort.iter().max().expect("nonempty cohort");
        entries.push(TraceEntry {
            slot: ev.slot,
            delta_n: xn - x2,
            extra: (c - 1) as u32,
            extra_sum,
            delta_c: extra_sum as f64 / (n - 1) as f64,
            x2,
            cohort_sum,
        });
    }
    let trace = CollisionTrace {
        n,
        a0: initial_sum as f64 / (n - 1) as f64,
        initial_sum,
        entries,
        x1_zero_fraction,
        ended_by_success: record.ended_by_success,
    };
    let bad = trace.sandwich_violations();
    if bad > 0 {
        return Err(Error::Integrity(format!("sandwich bounds fail at {bad} entries")));
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BackoffLaw;
    use crate::sim::{record_cohort_trace, CohortEvent};

    fn record(initial: Vec<u32>, entries: Vec<CohortEvent>) -> CohortRecord {
        CohortRecord { initial, entries, ended_by_success: false, slots_run: 10 }
    }

    #[test]
    fn empty_trace() {
        let t = collision_trace(&record(vec![0, 5, 5], vec![])).unwrap();
        assert!(t.entries.is_empty());
    }

    #[test]
    fn double_cohort_collision() {
        let ev = CohortEvent { slot: 1, x1_before: 0, transmitters: vec![1, 2], after: vec![0, 6, 6] };
        let t = collision_trace(&record(vec![0, 5, 5], vec![ev])).unwrap();
        assert_eq!(t.entries[0].extra, 1);
        assert_eq!(t.entries[0].delta_c, 0.5);
        assert_eq!(t.x1_zero_fraction, 1.0);
    }

    #[test]
    fn broken_ledger_is_an_integrity_error() {
        let ev = CohortEvent { slot: 1, x1_before: 0, transmitters: vec![0, 1], after: vec![1, 7, 5] };
        assert!(matches!(collision_trace(&record(vec![0, 5, 5], vec![ev])), Err(Error::Integrity(_))));
    }

    #[test]
    fn simulated_traces_pass() {
        let law = BackoffLaw::exponential(2.0, 0.0).unwrap();
        for s in 0..20 {
            let rec = record_cohort_trace(3, law, 5, 1 << 24, 5000, 1, s).unwrap();
            let t = collision_trace(&rec).unwrap();
            assert_eq!(t.sandwich_violations(), 0);
            assert!(t.entries.windows(2).all(|w| w[0].slot < w[1].slot && w[0].delta_c <= w[1].delta_c));
        }
    }
}

//! Reference answers at the two ends of the preprocessing trade-off: a plain
//! scan of the range, and a table holding the answer to every range.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{MinCandidate, MinHierarchy};
use crate::query::{execute_batch, Query, QueryBatch, ResultRecord, SchedulingStrategy};

/// Default largest array accepted by [`FullTable::build`].
pub const FULL_TABLE_CAP: usize = 4096;

/// Minimum of `values[l..=r]` and its leftmost position, by linear scan.
pub fn full_scan_rmq(values: &[f32], l: usize, r: usize) -> Result<ResultRecord> {
    Query::new(l, r).check(values.len())?;
    let best = values[l..=r]
        .iter()
        .enumerate()
        .fold(MinCandidate::IDENTITY, |best, (k, &v)| best.merge(MinCandidate::new(v, (l + k) as u64)));
    Ok(ResultRecord { value: best.value, index: Some(best.position as usize) })
}

/// Answers for all `n(n+1)/2` ranges, stored row by row: row `l` holds `(l, l..n)`.
#[derive(Debug, Clone)]
pub struct FullTable {
    n: usize,
    values: Vec<f32>,
    positions: Vec<u32>,
}

impl FullTable {
    pub fn build(values: &[f32]) -> Result<Self> {
        Self::build_with_cap(values, FULL_TABLE_CAP)
    }

    pub fn build_with_cap(values: &[f32], cap: usize) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        if n > cap {
            return Err(Error::SizeCapExceeded { n, cap });
        }
        let entries = n * (n + 1) / 2;
        let mut table_values = Vec::with_capacity(entries);
        let mut positions = Vec::with_capacity(entries);
        for l in 0..n {
            let mut best = MinCandidate::IDENTITY;
            for (r, &v) in values.iter().enumerate().skip(l) {
                best = best.merge(MinCandidate::new(v, r as u64));
                table_values.push(best.value);
                positions.push(best.position as u32);
            }
        }
        Ok(FullTable { n, values: table_values, positions })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Number of stored answers.
    pub fn entries(&self) -> usize {
        self.values.len()
    }

    fn slot(&self, l: usize, r: usize) -> usize {
        // rows 0..l hold n + (n-1) + ... + (n-l+1) entries
        l * self.n - l * (l.saturating_sub(1)) / 2 + (r - l)
    }

    pub fn lookup(&self, l: usize, r: usize) -> Result<ResultRecord> {
        Query::new(l, r).check(self.n)?;
        let slot = self.slot(l, r);
        Ok(ResultRecord { value: self.values[slot], index: Some(self.positions[slot] as usize) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mismatch {
    pub query_id: usize,
    pub l: usize,
    pub r: usize,
    pub expected: ResultRecord,
    pub actual: ResultRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCheckReport {
    pub queries: usize,
    pub scheduling: SchedulingStrategy,
    pub mismatches: Vec<Mismatch>,
}

impl CrossCheckReport {
    pub fn is_clean(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Runs the batch through the hierarchy and compares every answer against
/// [`full_scan_rmq`]. Indices are compared only when the hierarchy tracks them.
pub fn cross_check(
    h: &MinHierarchy,
    batch: &QueryBatch,
    sched: SchedulingStrategy,
) -> Result<CrossCheckReport> {
    let output = execute_batch(h, batch, sched)?;
    let values = h.base().values();
    let mut mismatches = Vec::new();
    for (query_id, (q, actual)) in batch.queries().iter().zip(&output.results).enumerate() {
        let mut expected = full_scan_rmq(values, q.l, q.r)?;
        if !h.tracks_index() {
            expected.index = None;
        }
        if !expected.same_as(actual) {
            mismatches.push(Mismatch { query_id, l: q.l, r: q.r, expected, actual: *actual });
        }
    }
    Ok(CrossCheckReport { queries: batch.len(), scheduling: sched, mismatches })
}

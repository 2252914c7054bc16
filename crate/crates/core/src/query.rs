//! Answering range-minimum queries over a [`MinHierarchy`].
//!
//! A query climbs the hierarchy: on each level it scans the partial chunks at
//! both ends of its range, then continues with the fully covered chunks one
//! level up, until the remaining span is at most `2c` or the top level is
//! reached, where the remainder is scanned directly. Scans follow one of two
//! kernels ([`ScanKernel`]) and every scan reports its work into
//! [`QueryStats`], so the structural bounds can be checked per query.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{HierarchyConfig, ScanStrategy, VECTOR_WIDTH};
use crate::cost::{AccessStep, CoalescingModel};
use crate::error::{Error, Result};
use crate::hierarchy::{LevelView, MinCandidate, MinHierarchy};

/// Inclusive range `[l, r]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Query {
    pub l: usize,
    pub r: usize,
}

impl Query {
    pub fn new(l: usize, r: usize) -> Self {
        Query { l, r }
    }

    /// Number of positions covered, assuming `l <= r`.
    pub fn len(&self) -> usize {
        self.r - self.l + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn check(&self, n: usize) -> Result<()> {
        if self.l > self.r {
            return Err(Error::InvertedRange { l: self.l, r: self.r });
        }
        if self.r >= n {
            return Err(Error::OutOfBounds { position: self.r, len: n });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryBatch {
    queries: Vec<Query>,
}

impl QueryBatch {
    pub fn new(queries: Vec<Query>) -> Result<Self> {
        if queries.is_empty() {
            return Err(Error::EmptyBatch);
        }
        Ok(QueryBatch { queries })
    }

    pub fn queries(&self) -> &[Query] {
        &self.queries
    }

    /// Number of queries, `m`.
    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Checks every query against an array of length `n`, reporting the first offender.
    pub fn check(&self, n: usize) -> Result<()> {
        for (i, q) in self.queries.iter().enumerate() {
            q.check(n).map_err(|e| e.in_query(i))?;
        }
        Ok(())
    }
}

/// The answer to one query. `index` is present iff the hierarchy tracks positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub value: f32,
    pub index: Option<usize>,
}

impl ResultRecord {
    /// Exact comparison: bit-equal value and equal index.
    pub fn same_as(&self, other: &ResultRecord) -> bool {
        self.value.to_bits() == other.value.to_bits() && self.index == other.index
    }
}

/// How queries of a batch are handed to lane groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulingStrategy {
    /// Every query gets its own group of `g` lanes, each lane loading the bounds.
    MultiLoad,
    /// Lane `i` of a group loads query `i`; the group then answers its `g`
    /// queries one after another, all lanes cooperating on each.
    WarpLocalQueue,
}

impl SchedulingStrategy {
    pub const ALL: [SchedulingStrategy; 2] =
        [SchedulingStrategy::MultiLoad, SchedulingStrategy::WarpLocalQueue];

    pub fn as_str(self) -> &'static str {
        match self {
            SchedulingStrategy::MultiLoad => "multiload",
            SchedulingStrategy::WarpLocalQueue => "wlq",
        }
    }
}

impl fmt::Display for SchedulingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchedulingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "multiload" | "multi-load" => Ok(SchedulingStrategy::MultiLoad),
            "wlq" | "warp-local-queue" => Ok(SchedulingStrategy::WarpLocalQueue),
            other => Err(Error::config(format!("unknown scheduling strategy {other:?}"))),
        }
    }
}

/// Work done by one query.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryStats {
    /// Entries compared against the running minimum.
    pub entries_scanned: u64,
    pub levels_touched: u32,
    /// Modeled transactions issued by the scans.
    pub scan_transactions: u64,
    /// Group-wide load steps (lane steps) or vector loads.
    pub load_steps: u64,
    /// Lanes (or vector slots) that took part in a load step without a qualifying entry.
    pub idle_slots: u64,
}

impl QueryStats {
    fn absorb(&mut self, other: &QueryStats) {
        self.entries_scanned += other.entries_scanned;
        self.levels_touched += other.levels_touched;
        self.scan_transactions += other.scan_transactions;
        self.load_steps += other.load_steps;
        self.idle_slots += other.idle_slots;
    }
}

/// Instrumentation for a whole batch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecutionStats {
    pub per_query: Vec<QueryStats>,
    pub entries_scanned: u64,
    pub max_entries_scanned: u64,
    pub max_levels_touched: u32,
    /// Modeled transfers for loading the `(l, r)` pairs.
    pub bound_load_transactions: u64,
    pub scan_transactions: u64,
    pub load_steps: u64,
    pub idle_slots: u64,
    /// Lane groups the batch was split into.
    pub groups: u64,
}

impl ExecutionStats {
    pub fn mean_entries_scanned(&self) -> f64 {
        if self.per_query.is_empty() {
            0.0
        } else {
            self.entries_scanned as f64 / self.per_query.len() as f64
        }
    }

    fn from_parts(per_query: Vec<QueryStats>, bound_load_transactions: u64, groups: u64) -> Self {
        let mut total = QueryStats::default();
        let mut max_entries = 0;
        let mut max_levels = 0;
        for s in &per_query {
            total.absorb(s);
            max_entries = max_entries.max(s.entries_scanned);
            max_levels = max_levels.max(s.levels_touched);
        }
        ExecutionStats {
            per_query,
            entries_scanned: total.entries_scanned,
            max_entries_scanned: max_entries,
            max_levels_touched: max_levels,
            bound_load_transactions,
            scan_transactions: total.scan_transactions,
            load_steps: total.load_steps,
            idle_slots: total.idle_slots,
            groups,
        }
    }
}

/// Upper bound on entries a single query may scan: `t + 2c·⌈log_c(max(n, c))⌉`.
pub fn scan_bound(n: usize, chunk_size: usize, cutoff: usize) -> u64 {
    let n = n.max(chunk_size) as u128;
    let c = chunk_size as u128;
    // ⌈log_c n⌉ by integer powers, free of floating-point rounding
    let mut levels = 0u64;
    let mut reach = 1u128;
    while reach < n {
        reach *= c;
        levels += 1;
    }
    cutoff as u64 + 2 * chunk_size as u64 * levels
}

/// How a scan walks a contiguous run of entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanKernel {
    /// Aligned blocks of [`VECTOR_WIDTH`] entries, one load each; blocks
    /// without a qualifying entry are never loaded.
    Vector,
    /// `group` lanes stepping together from the last position `<= lo` that is
    /// congruent to `origin` modulo `group`; lanes outside the range skip
    /// their load.
    Lanes { group: usize, origin: usize },
}

impl ScanKernel {
    pub fn for_config(config: &HierarchyConfig) -> Self {
        match config.strategy {
            ScanStrategy::VectorBlock => ScanKernel::Vector,
            ScanStrategy::LaneGroup => ScanKernel::Lanes { group: config.group_size, origin: 0 },
        }
    }
}

/// Merges `running` with the minimum over `level[lo..hi)`.
pub fn scan_segment(
    level: LevelView<'_>,
    lo: usize,
    hi: usize,
    running: MinCandidate,
    kernel: ScanKernel,
    model: &CoalescingModel,
    stats: &mut QueryStats,
) -> Result<MinCandidate> {
    if hi > level.len() {
        return Err(Error::OutOfBounds { position: hi, len: level.len() });
    }
    if lo > hi {
        return Err(Error::InvertedRange { l: lo, r: hi });
    }
    Ok(scan_unchecked(level, lo, hi, running, kernel, model, stats))
}

#[inline]
fn scan_unchecked(
    level: LevelView<'_>,
    lo: usize,
    hi: usize,
    mut best: MinCandidate,
    kernel: ScanKernel,
    model: &CoalescingModel,
    stats: &mut QueryStats,
) -> MinCandidate {
    if lo >= hi {
        return best;
    }
    let entry_bytes = model.entry_bytes;
    let byte_of = |i: usize| (level.buffer_offset() + i) as u64 * entry_bytes;

    match kernel {
        ScanKernel::Lanes { group, origin } => {
            let g = group as i64;
            let shift = (lo as i64 - origin as i64).rem_euclid(g);
            let mut offset = lo as i64 - shift;
            while offset < hi as i64 {
                let first = (offset.max(lo as i64)) as usize;
                let last = ((offset + g) as usize).min(hi);
                let active = (last - first) as u64;
                stats.load_steps += 1;
                stats.entries_scanned += active;
                stats.idle_slots += group as u64 - active;
                stats.scan_transactions += model.contiguous_segments(byte_of(first), active);
                best = min_over(level, first, last, best);
                offset += g;
            }
        }
        ScanKernel::Vector => {
            let len = level.len();
            let mut block = lo / VECTOR_WIDTH * VECTOR_WIDTH;
            while block < hi {
                let block_end = (block + VECTOR_WIDTH).min(len);
                let first = block.max(lo);
                let last = block_end.min(hi);
                let active = (last - first) as u64;
                stats.load_steps += 1;
                stats.entries_scanned += active;
                stats.idle_slots += VECTOR_WIDTH as u64 - active;
                stats.scan_transactions +=
                    model.contiguous_segments(byte_of(block), (block_end - block) as u64);
                best = min_over(level, first, last, best);
                block += VECTOR_WIDTH;
            }
        }
    }
    best
}

#[inline]
fn min_over(level: LevelView<'_>, first: usize, last: usize, mut best: MinCandidate) -> MinCandidate {
    let values = level.values();
    for (i, &v) in values[first..last].iter().enumerate() {
        // cheap reject before fetching the position payload
        if v.total_cmp(&best.value).is_le() {
            best = best.merge(level.candidate(first + i));
        }
    }
    best
}

/// Answers a single query with the hierarchy's configured kernel.
pub fn rmq(h: &MinHierarchy, q: Query) -> Result<(ResultRecord, QueryStats)> {
    rmq_with_kernel(h, q, ScanKernel::for_config(h.config()), &CoalescingModel::default())
}

/// Answers a single query with an explicit kernel and cost model.
pub fn rmq_with_kernel(
    h: &MinHierarchy,
    q: Query,
    kernel: ScanKernel,
    model: &CoalescingModel,
) -> Result<(ResultRecord, QueryStats)> {
    q.check(h.len())?;
    Ok(traverse(h, q, kernel, model))
}

fn traverse(
    h: &MinHierarchy,
    q: Query,
    kernel: ScanKernel,
    model: &CoalescingModel,
) -> (ResultRecord, QueryStats) {
    let c = h.config().chunk_size;
    let num_levels = h.num_levels();
    let mut stats = QueryStats::default();
    let mut best = MinCandidate::IDENTITY;

    let mut l = q.l;
    let mut r = q.r + 1;
    let mut level = 0;
    while level < num_levels - 1 {
        if r - l <= 2 * c {
            break;
        }
        let next_l = (l + c - 1) - (l + c - 1) % c;
        let prev_r = r - r % c;

        let view = h.level(level);
        best = scan_unchecked(view, l, next_l, best, kernel, model, &mut stats);
        best = scan_unchecked(view, prev_r, r, best, kernel, model, &mut stats);
        stats.levels_touched += 1;

        l = next_l / c;
        r = prev_r / c;
        level += 1;
    }
    best = scan_unchecked(h.level(level), l, r, best, kernel, model, &mut stats);
    stats.levels_touched += 1;

    let record =
        ResultRecord { value: best.value, index: h.tracks_index().then_some(best.position as usize) };
    (record, stats)
}

pub fn rmq_value(h: &MinHierarchy, q: Query) -> Result<f32> {
    rmq(h, q).map(|(r, _)| r.value)
}

pub fn rmq_index(h: &MinHierarchy, q: Query) -> Result<usize> {
    if !h.tracks_index() {
        return Err(Error::IndexUntracked);
    }
    let (record, _) = rmq(h, q)?;
    Ok(record.index.expect("tracked hierarchy yields an index"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutput {
    /// One record per query, in input order.
    pub results: Vec<ResultRecord>,
    pub stats: ExecutionStats,
}

/// Queries per rayon task for multi-load groups.
const MULTILOAD_GRAIN: usize = 64;

/// Executes a batch on the current rayon pool.
///
/// Lane groups are independent: each worker owns whole groups and keeps its
/// own counters, which are merged once all groups are done.
pub fn execute_batch(h: &MinHierarchy, batch: &QueryBatch, sched: SchedulingStrategy) -> Result<BatchOutput> {
    execute_batch_with_model(h, batch, sched, &CoalescingModel::default())
}

pub fn execute_batch_with_model(
    h: &MinHierarchy,
    batch: &QueryBatch,
    sched: SchedulingStrategy,
    model: &CoalescingModel,
) -> Result<BatchOutput> {
    batch.check(h.len())?;
    let kernel = ScanKernel::for_config(h.config());
    let g = h.config().effective_group_size();
    let pair_bytes = 2 * h.base().position_width().bytes() as u64;
    let bounds_model = CoalescingModel { entry_bytes: pair_bytes, ..*model };
    let queries = batch.queries();

    let (answers, bound_loads, groups): (Vec<(ResultRecord, QueryStats)>, u64, u64) = match sched {
        SchedulingStrategy::MultiLoad => {
            let answers = queries
                .par_iter()
                .with_min_len(MULTILOAD_GRAIN)
                .map(|&q| traverse(h, q, kernel, model))
                .collect();
            // g lanes of query j all read pair j
            let bound_loads = (0..queries.len() as u64)
                .map(|j| bounds_model.coalesce_count(&AccessStep::new(vec![j * pair_bytes; g])))
                .sum();
            (answers, bound_loads, queries.len() as u64)
        }
        SchedulingStrategy::WarpLocalQueue => {
            let answers = queries
                .par_chunks(g)
                .flat_map_iter(|group| {
                    // every lane of the group holds one query; process them
                    // in rank order, one active query at a time
                    let mut slots: Vec<(ResultRecord, QueryStats)> = Vec::with_capacity(group.len());
                    for &active in group {
                        slots.push(traverse(h, active, kernel, model));
                    }
                    slots
                })
                .collect();
            // lane i of group k reads pair k·g + i
            let bound_loads = (0..queries.len().div_ceil(g) as u64)
                .map(|k| {
                    let first = k * g as u64;
                    let lanes = (g as u64).min(queries.len() as u64 - first) as usize;
                    bounds_model.coalesce_count(&AccessStep::consecutive(
                        first * pair_bytes,
                        lanes,
                        pair_bytes,
                    ))
                })
                .sum();
            (answers, bound_loads, queries.len().div_ceil(g) as u64)
        }
    };

    let (results, per_query): (Vec<_>, Vec<_>) = answers.into_iter().unzip();
    Ok(BatchOutput { results, stats: ExecutionStats::from_parts(per_query, bound_loads, groups) })
}

//! Memory-transaction model of coalesced access.
//!
//! A group of lanes that issues loads in the same step is served by one
//! transaction per distinct `segment_bytes`-aligned segment it touches. The
//! model counts those transactions exactly instead of timing anything, which
//! makes coalescing effects assertable on any host.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::query::SchedulingStrategy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoalescingModel {
    /// Transaction granularity in bytes.
    pub segment_bytes: u64,
    /// Width of one loaded entry in bytes.
    pub entry_bytes: u64,
    /// Lanes that can issue in one step.
    pub max_group: usize,
}

impl Default for CoalescingModel {
    fn default() -> Self {
        CoalescingModel { segment_bytes: 128, entry_bytes: 4, max_group: 32 }
    }
}

/// Byte offsets issued by a lane group in one simultaneous step.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AccessStep {
    pub addresses: Vec<u64>,
}

impl AccessStep {
    pub fn new(addresses: Vec<u64>) -> Self {
        AccessStep { addresses }
    }

    /// `count` consecutive entries of `entry_bytes` starting at `first_byte`.
    pub fn consecutive(first_byte: u64, count: usize, entry_bytes: u64) -> Self {
        AccessStep { addresses: (0..count as u64).map(|i| first_byte + i * entry_bytes).collect() }
    }
}

impl CoalescingModel {
    pub fn new(segment_bytes: u64, entry_bytes: u64, max_group: usize) -> Result<Self> {
        if !segment_bytes.is_power_of_two() || !entry_bytes.is_power_of_two() {
            return Err(Error::config("segment and entry widths must be powers of two"));
        }
        if entry_bytes > segment_bytes {
            return Err(Error::config("entry width exceeds segment width"));
        }
        if max_group == 0 {
            return Err(Error::config("max_group must be positive"));
        }
        Ok(CoalescingModel { segment_bytes, entry_bytes, max_group })
    }

    pub fn with_entry_bytes(self, entry_bytes: u64) -> Result<Self> {
        CoalescingModel::new(self.segment_bytes, entry_bytes, self.max_group)
    }

    /// Entries per segment.
    pub fn segment_entries(&self) -> u64 {
        self.segment_bytes / self.entry_bytes
    }

    /// Number of distinct segments touched by one step. An empty step costs nothing.
    pub fn coalesce_count(&self, step: &AccessStep) -> u64 {
        debug_assert!(step.addresses.len() <= self.max_group, "step wider than max_group");
        let segments: BTreeSet<u64> = step
            .addresses
            .iter()
            .flat_map(|&a| {
                let first = a / self.segment_bytes;
                let last = (a + self.entry_bytes - 1) / self.segment_bytes;
                first..=last
            })
            .collect();
        segments.len() as u64
    }

    /// Segments touched by `count` consecutive entries starting at `first_byte`;
    /// the closed form of [`CoalescingModel::coalesce_count`] on such a step.
    #[inline]
    pub fn contiguous_segments(&self, first_byte: u64, count: u64) -> u64 {
        if count == 0 {
            return 0;
        }
        let last_byte = first_byte + count * self.entry_bytes - 1;
        last_byte / self.segment_bytes - first_byte / self.segment_bytes + 1
    }

    /// Modeled transfers for loading the bounds of `m` queries with lane
    /// groups of `g`, where each `(l, r)` pair occupies `pair_bytes`.
    ///
    /// Multi-load spawns `g` lanes per query that all read the same pair;
    /// warp-local queuing has lane `i` of a group read pair `i`. When a
    /// group's pairs fit in one segment the counts are `m` and `⌈m/g⌉`;
    /// otherwise segments are counted group by group.
    pub fn assignment_transactions(
        &self,
        m: u64,
        g: u64,
        strategy: SchedulingStrategy,
        pair_bytes: u64,
    ) -> u64 {
        let g = g.max(1);
        match strategy {
            SchedulingStrategy::MultiLoad => {
                if self.segment_bytes.is_multiple_of(pair_bytes) {
                    m
                } else {
                    (0..m).map(|j| self.byte_range_segments(j * pair_bytes, pair_bytes)).sum()
                }
            }
            SchedulingStrategy::WarpLocalQueue => {
                if g * pair_bytes <= self.segment_bytes && self.segment_bytes.is_multiple_of(g * pair_bytes) {
                    m.div_ceil(g)
                } else {
                    (0..m.div_ceil(g))
                        .map(|k| {
                            let first = k * g;
                            let count = g.min(m - first);
                            self.byte_range_segments(first * pair_bytes, count * pair_bytes)
                        })
                        .sum()
                }
            }
        }
    }

    fn byte_range_segments(&self, first_byte: u64, len: u64) -> u64 {
        (first_byte + len - 1) / self.segment_bytes - first_byte / self.segment_bytes + 1
    }
}

/// [`CoalescingModel::assignment_transactions`] under the default model with
/// 32-bit positions (8-byte pairs).
pub fn assignment_transactions(m: u64, g: u64, strategy: SchedulingStrategy) -> u64 {
    CoalescingModel::default().assignment_transactions(m, g, strategy, 8)
}

/// Which entries the lanes of a group read in each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccessPattern {
    /// Lane `i` reads `p + i`, with `p` a multiple of the segment width.
    AlignedConsecutive,
    /// Lane `i` reads `p + i` for an arbitrary `p`.
    Consecutive,
    /// Every lane reads `p`.
    SamePosition,
}

/// Replays the grouped random-lookup micro-benchmark in the transaction model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoalescingBenchmark {
    pub total_lanes: usize,
    pub group_size: usize,
    pub iterations: usize,
    pub array_len: u64,
    pub seed: u64,
    pub pattern: AccessPattern,
}

impl CoalescingBenchmark {
    /// Total modeled transactions over all groups and iterations.
    pub fn run(&self, model: &CoalescingModel) -> Result<u64> {
        let g = self.group_size;
        if g == 0 || !g.is_power_of_two() || !self.total_lanes.is_multiple_of(g) {
            return Err(Error::config(format!(
                "group size {g} must be a power of two dividing {} lanes",
                self.total_lanes
            )));
        }
        if self.array_len < g as u64 {
            return Err(Error::config("array shorter than one group's reads"));
        }
        let groups = self.total_lanes / g;
        let align = match self.pattern {
            AccessPattern::AlignedConsecutive => model.segment_entries(),
            _ => 1,
        };
        let max_p = self.array_len - g as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut total = 0;
        let mut step = AccessStep::default();
        for _ in 0..self.iterations {
            for _ in 0..groups {
                let p = rng.random_range(0..=max_p) / align * align;
                // a group wider than max_group issues in several steps
                for base_lane in (0..g).step_by(model.max_group) {
                    let lanes = model.max_group.min(g - base_lane) as u64;
                    step.addresses.clear();
                    step.addresses.extend((0..lanes).map(|i| {
                        let entry = match self.pattern {
                            AccessPattern::SamePosition => p,
                            _ => p + base_lane as u64 + i,
                        };
                        entry * model.entry_bytes
                    }));
                    total += model.coalesce_count(&step);
                }
            }
        }
        Ok(total)
    }
}

/// [`CoalescingBenchmark::run`] with the default model and aligned reads.
pub fn simulate_coalescing_benchmark(
    total_lanes: usize,
    group_size: usize,
    iterations: usize,
    array_len: u64,
    seed: u64,
) -> Result<u64> {
    CoalescingBenchmark {
        total_lanes,
        group_size,
        iterations,
        array_len,
        seed,
        pattern: AccessPattern::AlignedConsecutive,
    }
    .run(&CoalescingModel::default())
}

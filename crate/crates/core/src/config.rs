//! Tunables of the minima hierarchy and the scan kernel that walks it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Array length from which the default configuration switches from
/// [`ScanStrategy::VectorBlock`] to [`ScanStrategy::LaneGroup`].
pub const LANE_GROUP_THRESHOLD: usize = 1 << 25;

/// Width of a single vector load, in entries.
pub const VECTOR_WIDTH: usize = 4;

/// Largest cooperative lane group (one warp).
pub const MAX_GROUP_SIZE: usize = 32;

/// How a single query scans a contiguous run of entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanStrategy {
    /// One lane walks the run in aligned blocks of [`VECTOR_WIDTH`] entries.
    VectorBlock,
    /// `g` lanes cooperate, each loading one entry per step.
    LaneGroup,
}

impl ScanStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            ScanStrategy::VectorBlock => "vector",
            ScanStrategy::LaneGroup => "lane",
        }
    }
}

impl fmt::Display for ScanStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScanStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vector" | "vector-block" | "vl" => Ok(ScanStrategy::VectorBlock),
            "lane" | "lane-group" | "cl" => Ok(ScanStrategy::LaneGroup),
            other => Err(Error::config(format!("unknown scan strategy {other:?}"))),
        }
    }
}

/// Width of stored positions, both in argmin payloads and in query files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PositionWidth {
    U32,
    U64,
}

impl PositionWidth {
    /// 32-bit positions below 2^31 elements, 64-bit from there on.
    pub fn for_len(n: usize) -> Self {
        if (n as u64) < (1u64 << 31) {
            PositionWidth::U32
        } else {
            PositionWidth::U64
        }
    }

    pub fn bytes(self) -> usize {
        match self {
            PositionWidth::U32 => 4,
            PositionWidth::U64 => 8,
        }
    }

    pub fn from_flag(flag: u8) -> Result<Self> {
        match flag {
            4 => Ok(PositionWidth::U32),
            8 => Ok(PositionWidth::U64),
            other => Err(Error::format(format!("position width flag must be 4 or 8, got {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyConfig {
    /// Entries summarized by one minimum on the level above (`c`).
    pub chunk_size: usize,
    /// Largest number of elements allowed on the topmost level (`t`).
    pub cutoff: usize,
    /// Cooperating lanes per query under [`ScanStrategy::LaneGroup`] (`g`).
    pub group_size: usize,
    pub strategy: ScanStrategy,
    pub track_index: bool,
}

impl HierarchyConfig {
    /// The tuned configuration for an array of `n` elements.
    pub fn default_for(n: usize) -> Self {
        if n < LANE_GROUP_THRESHOLD {
            Self::vector_block(8)
        } else {
            Self::lane_group(32, 16)
        }
    }

    /// Vector-block configuration with minimal cutoff `t = c`.
    pub fn vector_block(chunk_size: usize) -> Self {
        HierarchyConfig {
            chunk_size,
            cutoff: minimal_cutoff(ScanStrategy::VectorBlock, chunk_size),
            group_size: VECTOR_WIDTH,
            strategy: ScanStrategy::VectorBlock,
            track_index: false,
        }
    }

    /// Lane-group configuration with minimal cutoff `t = 2c`.
    pub fn lane_group(chunk_size: usize, group_size: usize) -> Self {
        HierarchyConfig {
            chunk_size,
            cutoff: minimal_cutoff(ScanStrategy::LaneGroup, chunk_size),
            group_size,
            strategy: ScanStrategy::LaneGroup,
            track_index: false,
        }
    }

    pub fn with_track_index(mut self, track_index: bool) -> Self {
        self.track_index = track_index;
        self
    }

    pub fn with_cutoff(mut self, cutoff: usize) -> Self {
        self.cutoff = cutoff;
        self
    }

    /// Lanes that cooperate on one query. Vector loads always act as a group of four.
    pub fn effective_group_size(&self) -> usize {
        match self.strategy {
            ScanStrategy::VectorBlock => VECTOR_WIDTH,
            ScanStrategy::LaneGroup => self.group_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.chunk_size;
        let g = self.group_size;
        if c < 2 || !c.is_power_of_two() {
            return Err(Error::config(format!("chunk size must be a power of two >= 2, got {c}")));
        }
        if g == 0 || !g.is_power_of_two() || g > MAX_GROUP_SIZE {
            return Err(Error::config(format!(
                "group size must be a power of two in [1, {MAX_GROUP_SIZE}], got {g}"
            )));
        }
        match self.strategy {
            ScanStrategy::VectorBlock => {
                if !c.is_multiple_of(VECTOR_WIDTH) {
                    return Err(Error::config(format!(
                        "vector-block scans need a chunk size that is a multiple of {VECTOR_WIDTH}, got {c}"
                    )));
                }
                if self.cutoff < c {
                    return Err(Error::config(format!(
                        "vector-block scans need cutoff >= chunk size ({} < {c})",
                        self.cutoff
                    )));
                }
            }
            ScanStrategy::LaneGroup => {
                if self.cutoff < 2 * c {
                    return Err(Error::config(format!(
                        "lane-group scans need cutoff >= 2 * chunk size ({} < {})",
                        self.cutoff,
                        2 * c
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Smallest admissible cutoff for a strategy.
pub fn minimal_cutoff(strategy: ScanStrategy, chunk_size: usize) -> usize {
    match strategy {
        ScanStrategy::VectorBlock => chunk_size,
        ScanStrategy::LaneGroup => 2 * chunk_size,
    }
}

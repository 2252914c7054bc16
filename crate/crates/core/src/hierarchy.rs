//! The minima hierarchy: the input array plus every auxiliary level of
//! chunk minima, stored bottom-up in one contiguous buffer.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{HierarchyConfig, PositionWidth};
use crate::error::{Error, Result};

/// Position stored with the reduction identity; never a real array position.
pub const NO_POSITION: u64 = u64::MAX;

/// Chunks per rayon task when building a level.
const BUILD_GRAIN: usize = 4096;

/// A value together with the original-array position it came from.
///
/// Candidates are totally ordered: by value under IEEE total order, then by
/// position. Merging therefore gives the same answer in any order and always
/// keeps the leftmost of several equal minima.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinCandidate {
    pub value: f32,
    pub position: u64,
}

impl MinCandidate {
    /// `+inf` with the sentinel position; the identity of [`MinCandidate::merge`].
    pub const IDENTITY: MinCandidate = MinCandidate { value: f32::INFINITY, position: NO_POSITION };

    pub fn new(value: f32, position: u64) -> Self {
        MinCandidate { value, position }
    }

    #[inline]
    pub fn beats(&self, other: &MinCandidate) -> bool {
        match self.value.total_cmp(&other.value) {
            Ordering::Less => true,
            Ordering::Equal => self.position < other.position,
            Ordering::Greater => false,
        }
    }

    #[inline]
    pub fn merge(self, other: MinCandidate) -> MinCandidate {
        if other.beats(&self) {
            other
        } else {
            self
        }
    }

    pub fn is_identity(&self) -> bool {
        self.position == NO_POSITION && self.value == f32::INFINITY
    }
}

/// The validated input array.
#[derive(Debug, Clone, PartialEq)]
pub struct InputArray {
    values: Vec<f32>,
}

impl InputArray {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(position) = values.iter().position(|v| v.is_nan()) {
            return Err(Error::NanInput { position });
        }
        Ok(InputArray { values })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn position_width(&self) -> PositionWidth {
        PositionWidth::for_len(self.len())
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }
}

/// Integer type used for stored argmin positions.
pub trait Position: Copy + Send + Sync + 'static {
    fn from_u64(p: u64) -> Self;
    fn to_u64(self) -> u64;
}

impl Position for u32 {
    #[inline]
    fn from_u64(p: u64) -> Self {
        p as u32
    }
    #[inline]
    fn to_u64(self) -> u64 {
        self as u64
    }
}

impl Position for u64 {
    #[inline]
    fn from_u64(p: u64) -> Self {
        p
    }
    #[inline]
    fn to_u64(self) -> u64 {
        self
    }
}

/// Argmin payloads, parallel to the auxiliary minima.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PositionBuffer {
    U32(Vec<u32>),
    U64(Vec<u64>),
}

impl PositionBuffer {
    fn zeroed(width: PositionWidth, len: usize) -> Self {
        match width {
            PositionWidth::U32 => PositionBuffer::U32(vec![0; len]),
            PositionWidth::U64 => PositionBuffer::U64(vec![0; len]),
        }
    }

    #[inline]
    pub fn get(&self, i: usize) -> u64 {
        match self {
            PositionBuffer::U32(v) => v[i] as u64,
            PositionBuffer::U64(v) => v[i],
        }
    }

    pub fn len(&self) -> usize {
        match self {
            PositionBuffer::U32(v) => v.len(),
            PositionBuffer::U64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self) -> PositionWidth {
        match self {
            PositionBuffer::U32(_) => PositionWidth::U32,
            PositionBuffer::U64(_) => PositionWidth::U64,
        }
    }

    pub fn byte_len(&self) -> usize {
        self.len() * self.width().bytes()
    }

    pub fn to_vec(&self) -> Vec<u64> {
        (0..self.len()).map(|i| self.get(i)).collect()
    }
}

/// Sizes and buffer offsets of the auxiliary levels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelLayout {
    /// Element count of each auxiliary level, bottom-up.
    pub level_sizes: Vec<usize>,
    /// Start of each auxiliary level inside the upper buffer.
    pub level_offsets: Vec<usize>,
    /// Level count including level 0, the input array.
    pub num_levels: usize,
}

impl LevelLayout {
    /// Total number of auxiliary entries, `E`.
    pub fn aux_len(&self) -> usize {
        self.level_sizes.iter().sum()
    }

    /// Element count of `level`, where level 0 has `n` entries.
    pub fn level_len(&self, n: usize, level: usize) -> usize {
        if level == 0 {
            n
        } else {
            self.level_sizes[level - 1]
        }
    }
}

/// Plans the successive `⌈·/c⌉` reductions of an `n`-element array, stopping
/// at the first level with at most `cutoff` elements.
pub fn plan_levels(n: usize, chunk_size: usize, cutoff: usize) -> Result<LevelLayout> {
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if chunk_size < 2 || !chunk_size.is_power_of_two() {
        return Err(Error::config(format!("chunk size must be a power of two >= 2, got {chunk_size}")));
    }
    if cutoff < chunk_size {
        return Err(Error::config(format!("cutoff {cutoff} is below chunk size {chunk_size}")));
    }

    let mut level_sizes = Vec::new();
    let mut level_offsets = Vec::new();
    let mut size = n;
    let mut offset = 0;
    while size > cutoff {
        size = size.div_ceil(chunk_size);
        level_offsets.push(offset);
        level_sizes.push(size);
        offset += size;
    }
    let num_levels = level_sizes.len() + 1;
    Ok(LevelLayout { level_sizes, level_offsets, num_levels })
}

/// Where a level lives; used to derive modeled memory addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Buffer {
    Base,
    Upper,
}

#[derive(Debug, Clone, Copy)]
enum LevelPositions<'a> {
    /// Level 0: an entry's position is its own index.
    Identity,
    Stored {
        buffer: &'a PositionBuffer,
        start: usize,
    },
    Untracked,
}

/// Read-only view of one level of a hierarchy.
#[derive(Debug, Clone, Copy)]
pub struct LevelView<'a> {
    values: &'a [f32],
    positions: LevelPositions<'a>,
    buffer: Buffer,
    buffer_offset: usize,
}

impl<'a> LevelView<'a> {
    /// A standalone level whose positions are its own indices.
    pub fn from_slice(values: &'a [f32]) -> Self {
        LevelView { values, positions: LevelPositions::Identity, buffer: Buffer::Base, buffer_offset: 0 }
    }

    pub fn values(&self) -> &'a [f32] {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn buffer(&self) -> Buffer {
        self.buffer
    }

    /// Entry offset of this level's first element within its buffer.
    pub fn buffer_offset(&self) -> usize {
        self.buffer_offset
    }

    /// The candidate held by entry `i` of this level.
    #[inline]
    pub fn candidate(&self, i: usize) -> MinCandidate {
        let position = match self.positions {
            LevelPositions::Identity => i as u64,
            LevelPositions::Stored { buffer, start } => buffer.get(start + i),
            LevelPositions::Untracked => NO_POSITION,
        };
        MinCandidate { value: self.values[i], position }
    }
}

/// Byte accounting for a built hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryReport {
    pub base_bytes: usize,
    pub aux_min_bytes: usize,
    pub aux_argmin_bytes: usize,
    pub metadata_bytes: usize,
    pub aux_total_bytes: usize,
    /// `aux_total_bytes / base_bytes`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinHierarchy {
    base: InputArray,
    layout: LevelLayout,
    upper_mins: Vec<f32>,
    upper_argmins: Option<PositionBuffer>,
    config: HierarchyConfig,
}

impl MinHierarchy {
    /// Builds every auxiliary level bottom-up. Chunks within a level are
    /// reduced in parallel; a level is complete before the next one starts.
    pub fn build(base: InputArray, config: HierarchyConfig) -> Result<Self> {
        config.validate()?;
        let n = base.len();
        let layout = plan_levels(n, config.chunk_size, config.cutoff)?;
        let aux_len = layout.aux_len();
        let mut upper_mins = vec![0.0f32; aux_len];

        let upper_argmins = if config.track_index {
            let mut positions = PositionBuffer::zeroed(base.position_width(), aux_len);
            match &mut positions {
                PositionBuffer::U32(p) => {
                    build_levels(&base, &layout, config.chunk_size, &mut upper_mins, Some(p))
                }
                PositionBuffer::U64(p) => {
                    build_levels(&base, &layout, config.chunk_size, &mut upper_mins, Some(p))
                }
            }
            Some(positions)
        } else {
            build_levels::<u32>(&base, &layout, config.chunk_size, &mut upper_mins, None);
            None
        };

        Ok(MinHierarchy { base, layout, upper_mins, upper_argmins, config })
    }

    /// Reassembles a hierarchy from stored buffers, checking that they match
    /// the layout `config` implies for the array.
    pub fn from_parts(
        base: InputArray,
        config: HierarchyConfig,
        level_sizes: Vec<usize>,
        upper_mins: Vec<f32>,
        upper_argmins: Option<PositionBuffer>,
    ) -> Result<Self> {
        config.validate()?;
        let layout = plan_levels(base.len(), config.chunk_size, config.cutoff)?;
        if layout.level_sizes != level_sizes {
            return Err(Error::format(format!(
                "stored level sizes {level_sizes:?} do not match chunk size {} and cutoff {} (expected {:?})",
                config.chunk_size, config.cutoff, layout.level_sizes
            )));
        }
        if upper_mins.len() != layout.aux_len() {
            return Err(Error::format("minima buffer length does not match level sizes"));
        }
        if let Some(argmins) = &upper_argmins {
            if argmins.len() != upper_mins.len() {
                return Err(Error::format("argmin buffer length does not match minima buffer"));
            }
        }
        if upper_argmins.is_some() != config.track_index {
            return Err(Error::format(format!(
                "config says track_index = {}, but argmins are {}",
                config.track_index,
                if upper_argmins.is_some() { "present" } else { "absent" }
            )));
        }
        if upper_mins.iter().any(|v| v.is_nan()) {
            return Err(Error::format("minima buffer contains NaN"));
        }
        let upper_argmins = upper_argmins.map(|p| match (p, base.position_width()) {
            (PositionBuffer::U64(v), PositionWidth::U32) => {
                PositionBuffer::U32(v.into_iter().map(|p| p as u32).collect())
            }
            (PositionBuffer::U32(v), PositionWidth::U64) => {
                PositionBuffer::U64(v.into_iter().map(u64::from).collect())
            }
            (p, _) => p,
        });
        Ok(MinHierarchy { base, layout, upper_mins, upper_argmins, config })
    }

    pub fn base(&self) -> &InputArray {
        &self.base
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn layout(&self) -> &LevelLayout {
        &self.layout
    }

    pub fn config(&self) -> &HierarchyConfig {
        &self.config
    }

    pub fn num_levels(&self) -> usize {
        self.layout.num_levels
    }

    pub fn upper_mins(&self) -> &[f32] {
        &self.upper_mins
    }

    pub fn upper_argmins(&self) -> Option<&PositionBuffer> {
        self.upper_argmins.as_ref()
    }

    pub fn tracks_index(&self) -> bool {
        self.upper_argmins.is_some()
    }

    /// Total auxiliary entry count `E`.
    pub fn aux_len(&self) -> usize {
        self.upper_mins.len()
    }

    /// Level `level`, where level 0 is the input array.
    pub fn level(&self, level: usize) -> LevelView<'_> {
        if level == 0 {
            return LevelView {
                values: self.base.values(),
                positions: LevelPositions::Identity,
                buffer: Buffer::Base,
                buffer_offset: 0,
            };
        }
        let start = self.layout.level_offsets[level - 1];
        let len = self.layout.level_sizes[level - 1];
        let positions = match &self.upper_argmins {
            Some(buffer) => LevelPositions::Stored { buffer, start },
            None => LevelPositions::Untracked,
        };
        LevelView {
            values: &self.upper_mins[start..start + len],
            positions,
            buffer: Buffer::Upper,
            buffer_offset: start,
        }
    }

    /// Same structure, scanned with a different kernel. Only the strategy
    /// and group size may change; the chunk layout is fixed at build time.
    pub fn with_scan(mut self, strategy: crate::config::ScanStrategy, group_size: usize) -> Result<Self> {
        let mut config = self.config;
        config.strategy = strategy;
        config.group_size = group_size;
        config.validate()?;
        self.config = config;
        Ok(self)
    }

    pub fn memory_report(&self) -> MemoryReport {
        let base_bytes = self.base.len() * std::mem::size_of::<f32>();
        let aux_min_bytes = self.upper_mins.len() * std::mem::size_of::<f32>();
        let aux_argmin_bytes = self.upper_argmins.as_ref().map_or(0, PositionBuffer::byte_len);
        // level sizes and offsets, one 8-byte word each
        let metadata_bytes = 2 * self.layout.level_sizes.len() * 8;
        let aux_total_bytes = aux_min_bytes + aux_argmin_bytes + metadata_bytes;
        MemoryReport {
            base_bytes,
            aux_min_bytes,
            aux_argmin_bytes,
            metadata_bytes,
            aux_total_bytes,
            ratio: aux_total_bytes as f64 / base_bytes as f64,
        }
    }
}

fn build_levels<P: Position>(
    base: &InputArray,
    layout: &LevelLayout,
    chunk_size: usize,
    upper_mins: &mut [f32],
    mut upper_argmins: Option<&mut [P]>,
) {
    for (level, (&offset, &size)) in layout.level_offsets.iter().zip(&layout.level_sizes).enumerate() {
        let (below_mins, rest) = upper_mins.split_at_mut(offset);
        let dst_mins = &mut rest[..size];

        if level == 0 {
            let src = base.values();
            match upper_argmins.as_deref_mut() {
                Some(pos) => {
                    let dst_pos = &mut pos[..size];
                    dst_mins
                        .par_iter_mut()
                        .zip(dst_pos.par_iter_mut())
                        .with_min_len(BUILD_GRAIN)
                        .enumerate()
                        .for_each(|(j, (m, p))| {
                            let start = j * chunk_size;
                            let end = (start + chunk_size).min(src.len());
                            let (v, at) = chunk_min(&src[start..end], |k| (start + k) as u64);
                            *m = v;
                            *p = P::from_u64(at);
                        });
                }
                None => {
                    dst_mins.par_iter_mut().with_min_len(BUILD_GRAIN).enumerate().for_each(|(j, m)| {
                        let start = j * chunk_size;
                        let end = (start + chunk_size).min(src.len());
                        *m = chunk_min(&src[start..end], |_| NO_POSITION).0;
                    });
                }
            }
        } else {
            let src_offset = layout.level_offsets[level - 1];
            let src_len = layout.level_sizes[level - 1];
            let src = &below_mins[src_offset..src_offset + src_len];
            match upper_argmins.as_deref_mut() {
                Some(pos) => {
                    let (below_pos, rest_pos) = pos.split_at_mut(offset);
                    let src_pos = &below_pos[src_offset..src_offset + src_len];
                    let dst_pos = &mut rest_pos[..size];
                    dst_mins
                        .par_iter_mut()
                        .zip(dst_pos.par_iter_mut())
                        .with_min_len(BUILD_GRAIN)
                        .enumerate()
                        .for_each(|(j, (m, p))| {
                            let start = j * chunk_size;
                            let end = (start + chunk_size).min(src.len());
                            let (v, at) = chunk_min(&src[start..end], |k| src_pos[start + k].to_u64());
                            *m = v;
                            *p = P::from_u64(at);
                        });
                }
                None => {
                    dst_mins.par_iter_mut().with_min_len(BUILD_GRAIN).enumerate().for_each(|(j, m)| {
                        let start = j * chunk_size;
                        let end = (start + chunk_size).min(src.len());
                        *m = chunk_min(&src[start..end], |_| NO_POSITION).0;
                    });
                }
            }
        }
    }
}

/// Minimum of a chunk and the position of its leftmost occurrence.
#[inline]
fn chunk_min(chunk: &[f32], position_of: impl Fn(usize) -> u64) -> (f32, u64) {
    let mut best = 0;
    for (k, v) in chunk.iter().enumerate().skip(1) {
        if v.total_cmp(&chunk[best]) == Ordering::Less {
            best = k;
        }
    }
    (chunk[best], position_of(best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScanStrategy;

    fn lane(c: usize, t: usize) -> HierarchyConfig {
        HierarchyConfig {
            chunk_size: c,
            cutoff: t,
            group_size: 1,
            strategy: ScanStrategy::LaneGroup,
            track_index: true,
        }
    }

    #[test]
    fn plan_seventeen_elements() {
        let layout = plan_levels(17, 2, 4).unwrap();
        assert_eq!(layout.level_sizes, vec![9, 5, 3]);
        assert_eq!(layout.level_offsets, vec![0, 9, 14]);
        assert_eq!(layout.num_levels, 4);
    }

    #[test]
    fn plan_exact_and_empty() {
        let layout = plan_levels(16, 4, 4).unwrap();
        assert_eq!(layout.level_sizes, vec![4]);
        assert_eq!(layout.num_levels, 2);

        let layout = plan_levels(8, 32, 64).unwrap();
        assert!(layout.level_sizes.is_empty());
        assert!(layout.level_offsets.is_empty());
        assert_eq!(layout.num_levels, 1);
    }

    #[test]
    fn plan_rejects_bad_parameters() {
        assert!(matches!(plan_levels(10, 3, 6), Err(Error::InvalidConfig(_))));
        assert!(matches!(plan_levels(10, 4, 2), Err(Error::InvalidConfig(_))));
        assert!(matches!(plan_levels(0, 4, 8), Err(Error::EmptyInput)));
    }

    #[test]
    fn build_six_element_example() {
        // c = 2, t = 2 is below the lane-group minimum cutoff, so drive the
        // level builder directly with the planned layout.
        let base = InputArray::new(vec![2.0, 6.0, 7.0, 4.0, 1.0, 3.0]).unwrap();
        let layout = plan_levels(6, 2, 2).unwrap();
        assert_eq!(layout.level_sizes, vec![3, 2]);
        let mut mins = vec![0.0; 5];
        let mut pos = vec![0u32; 5];
        build_levels(&base, &layout, 2, &mut mins, Some(&mut pos));
        assert_eq!(mins, vec![2.0, 4.0, 1.0, 2.0, 1.0]);
        assert_eq!(pos, vec![0, 3, 4, 0, 4]);

        let h = MinHierarchy::build(base, lane(2, 4)).unwrap();
        assert_eq!(h.layout().level_sizes, vec![3]);
        assert_eq!(h.upper_mins(), &[2.0, 4.0, 1.0]);
    }

    #[test]
    fn build_single_element() {
        let h = MinHierarchy::build(InputArray::new(vec![5.0]).unwrap(), HierarchyConfig::default_for(1))
            .unwrap();
        assert_eq!(h.aux_len(), 0);
        assert_eq!(h.num_levels(), 1);
        let report = h.memory_report();
        assert_eq!(report.aux_total_bytes, 0);
        assert_eq!(report.ratio, 0.0);
    }

    #[test]
    fn build_constant_array_ties_left() {
        let base = InputArray::new(vec![0.0; 1024]).unwrap();
        let h =
            MinHierarchy::build(base, HierarchyConfig::lane_group(32, 16).with_track_index(true)).unwrap();
        assert_eq!(h.layout().level_sizes, vec![32]);
        assert!(h.upper_mins().iter().all(|&v| v == 0.0));
        let expected: Vec<u64> = (0..32).map(|j| j * 32).collect();
        assert_eq!(h.upper_argmins().unwrap().to_vec(), expected);
    }

    #[test]
    fn rejects_nan_and_empty() {
        assert!(matches!(InputArray::new(vec![]), Err(Error::EmptyInput)));
        assert!(matches!(InputArray::new(vec![1.0, f32::NAN]), Err(Error::NanInput { position: 1 })));
    }

    #[test]
    fn trailing_partial_chunk() {
        let base = InputArray::new(vec![9.0, 8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0, 0.5]).unwrap();
        let h = MinHierarchy::build(base, HierarchyConfig::vector_block(4).with_track_index(true)).unwrap();
        assert_eq!(h.layout().level_sizes, vec![3]);
        assert_eq!(h.upper_mins(), &[6.0, 2.0, 0.5]);
        assert_eq!(h.upper_argmins().unwrap().to_vec(), vec![3, 7, 9]);
    }

    #[test]
    fn memory_report_matches_bound() {
        let n = 1 << 20;
        let base = InputArray::new((0..n).map(|i| i as f32).collect()).unwrap();
        let h = MinHierarchy::build(base.clone(), HierarchyConfig::lane_group(32, 16)).unwrap();
        let r = h.memory_report();
        assert!(r.aux_min_bytes <= (n / 31 + h.num_levels()) * 4);
        assert!(r.ratio <= 0.033, "ratio {}", r.ratio);

        let h =
            MinHierarchy::build(base, HierarchyConfig::lane_group(32, 16).with_track_index(true)).unwrap();
        let r = h.memory_report();
        assert_eq!(r.aux_argmin_bytes, r.aux_min_bytes);
        assert!(r.ratio <= 0.066, "ratio {}", r.ratio);
    }

    #[test]
    fn candidate_merge_is_leftmost_and_total() {
        let a = MinCandidate::new(1.0, 5);
        let b = MinCandidate::new(1.0, 2);
        assert_eq!(a.merge(b), b);
        assert_eq!(b.merge(a), b);
        assert_eq!(MinCandidate::IDENTITY.merge(a), a);
        let inf = MinCandidate::new(f32::INFINITY, 3);
        assert_eq!(MinCandidate::IDENTITY.merge(inf), inf);
        let neg_zero = MinCandidate::new(-0.0, 9);
        assert_eq!(MinCandidate::new(0.0, 1).merge(neg_zero), neg_zero);
    }
}

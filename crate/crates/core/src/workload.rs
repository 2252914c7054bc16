//! Seeded generators for input arrays and query batches.
//!
//! All randomness comes from [`ChaCha8Rng`]. Output index space is cut into
//! blocks of [`STREAM_BLOCK`] items; block `b` of an array draws from
//! `ChaCha8Rng::seed_from_u64(seed)` on stream `(1 << 40) | b`, block `b` of
//! a query batch from stream `(2 << 40) | b`. Blocks are generated in
//! parallel, so output is identical for any worker count.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PositionWidth;
use crate::error::{Error, Result};
use crate::hierarchy::InputArray;
use crate::query::{Query, QueryBatch};

pub const GENERATOR_NAME: &str = "ChaCha8Rng";

/// Items per independently seeded sub-stream.
pub const STREAM_BLOCK: usize = 1 << 16;

const ARRAY_DOMAIN: u64 = 1 << 40;
const QUERY_DOMAIN: u64 = 2 << 40;

/// Standard deviation of the log-normal range-size classes.
pub const LOG_NORMAL_SIGMA: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RangeClass {
    /// Size uniform on `[1, n]`.
    Large,
    /// Log-normal size with median `n^0.6`.
    Medium,
    /// Log-normal size with median `n^0.3`.
    Small,
    /// One of the three above, chosen with equal probability per query.
    Mixed,
}

impl RangeClass {
    pub const SOURCES: [RangeClass; 3] = [RangeClass::Large, RangeClass::Medium, RangeClass::Small];

    pub fn as_str(self) -> &'static str {
        match self {
            RangeClass::Large => "large",
            RangeClass::Medium => "medium",
            RangeClass::Small => "small",
            RangeClass::Mixed => "mixed",
        }
    }

    /// Exponent `e` in the log-normal location `μ = ln(n^e)`.
    fn log_normal_exponent(self) -> Option<f64> {
        match self {
            RangeClass::Medium => Some(0.6),
            RangeClass::Small => Some(0.3),
            _ => None,
        }
    }
}

impl fmt::Display for RangeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RangeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "large" => Ok(RangeClass::Large),
            "medium" => Ok(RangeClass::Medium),
            "small" => Ok(RangeClass::Small),
            "mixed" => Ok(RangeClass::Mixed),
            other => Err(Error::config(format!("unknown range class {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub n: usize,
    pub m: usize,
    pub class: RangeClass,
    pub seed: u64,
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("n must be at least 1"));
        }
        if self.m == 0 {
            return Err(Error::config("m must be at least 1"));
        }
        Ok(())
    }
}

fn block_rng(seed: u64, domain: u64, block: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(domain | block as u64);
    rng
}

/// `n` values uniform on `[0, 1)`.
pub fn gen_array(n: usize, seed: u64) -> Result<InputArray> {
    if n == 0 {
        return Err(Error::config("n must be at least 1"));
    }
    let mut values = vec![0.0f32; n];
    values.par_chunks_mut(STREAM_BLOCK).enumerate().for_each(|(b, chunk)| {
        let mut rng = block_rng(seed, ARRAY_DOMAIN, b);
        for v in chunk {
            *v = rng.random::<f32>();
        }
    });
    InputArray::new(values)
}

struct SizeSampler {
    n: usize,
    medium: LogNormal<f64>,
    small: LogNormal<f64>,
}

impl SizeSampler {
    fn new(n: usize) -> Self {
        let ln_n = (n as f64).ln();
        let dist = |class: RangeClass| {
            let mu = class.log_normal_exponent().unwrap() * ln_n;
            LogNormal::new(mu, LOG_NORMAL_SIGMA).expect("finite log-normal parameters")
        };
        SizeSampler { n, medium: dist(RangeClass::Medium), small: dist(RangeClass::Small) }
    }

    fn sample(&self, class: RangeClass, rng: &mut ChaCha8Rng) -> (RangeClass, usize) {
        match class {
            RangeClass::Large => (class, rng.random_range(1..=self.n)),
            RangeClass::Medium => (class, self.round_clamp(self.medium.sample(rng))),
            RangeClass::Small => (class, self.round_clamp(self.small.sample(rng))),
            RangeClass::Mixed => {
                let source = RangeClass::SOURCES[rng.random_range(0..3)];
                self.sample(source, rng)
            }
        }
    }

    fn round_clamp(&self, s: f64) -> usize {
        (s.round() as usize).clamp(1, self.n)
    }
}

/// Queries whose size follows the spec's range class, with the left end
/// uniform over all placements of that size.
pub fn gen_queries(spec: &WorkloadSpec) -> Result<QueryBatch> {
    gen_queries_labeled(spec).map(|(batch, _)| batch)
}

/// Like [`gen_queries`], also returning the class each size was drawn from
/// (which differs from the spec's class only for [`RangeClass::Mixed`]).
pub fn gen_queries_labeled(spec: &WorkloadSpec) -> Result<(QueryBatch, Vec<RangeClass>)> {
    spec.validate()?;
    let sampler = SizeSampler::new(spec.n);
    let labeled: Vec<(Query, RangeClass)> = (0..spec.m.div_ceil(STREAM_BLOCK))
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut rng = block_rng(spec.seed, QUERY_DOMAIN, b);
            let count = STREAM_BLOCK.min(spec.m - b * STREAM_BLOCK);
            let sampler = &sampler;
            (0..count)
                .map(move |_| {
                    let (class, s) = sampler.sample(spec.class, &mut rng);
                    let l = rng.random_range(0..=spec.n - s);
                    (Query::new(l, l + s - 1), class)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let (queries, classes) = labeled.into_iter().unzip();
    Ok((QueryBatch::new(queries)?, classes))
}

/// Provenance sidecar written next to generated files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadMeta {
    pub n: usize,
    pub m: usize,
    pub class: RangeClass,
    pub seed: u64,
    pub generator: String,
    pub stream_block: usize,
    pub position_width: PositionWidth,
    pub mean_range_size: f64,
    pub median_range_size: f64,
}

impl WorkloadMeta {
    pub fn describe(spec: &WorkloadSpec, batch: &QueryBatch) -> Self {
        let sizes: Vec<usize> = batch.queries().iter().map(Query::len).collect();
        WorkloadMeta {
            n: spec.n,
            m: spec.m,
            class: spec.class,
            seed: spec.seed,
            generator: GENERATOR_NAME.to_string(),
            stream_block: STREAM_BLOCK,
            position_width: PositionWidth::for_len(spec.n),
            mean_range_size: mean(&sizes),
            median_range_size: median(&sizes),
        }
    }
}

pub fn mean(sizes: &[usize]) -> f64 {
    sizes.iter().map(|&s| s as f64).sum::<f64>() / sizes.len().max(1) as f64
}

pub fn median(sizes: &[usize]) -> f64 {
    if sizes.is_empty() {
        return 0.0;
    }
    let mut sorted = sizes.to_vec();
    sorted.sort_unstable();
    let mid = sorted.len() / 2;
    if sorted.len().is_multiple_of(2) {
        (sorted[mid - 1] + sorted[mid]) as f64 / 2.0
    } else {
        sorted[mid] as f64
    }
}

//! Batch range-minimum queries over a hierarchy of chunk minima.
//!
//! [`hierarchy`] builds the structure, [`query`] answers single queries and
//! batches while recording how much work each query did, [`cost`] turns
//! access patterns into modeled memory transactions, [`workload`] produces
//! seeded arrays and query batches, and [`oracle`] holds the brute-force
//! references everything is checked against.

pub mod config;
pub mod cost;
pub mod error;
pub mod hierarchy;
pub mod io;
pub mod oracle;
pub mod query;
pub mod workload;

pub use config::{HierarchyConfig, PositionWidth, ScanStrategy};
pub use cost::{assignment_transactions, simulate_coalescing_benchmark, CoalescingModel};
pub use error::{Error, Result};
pub use hierarchy::{plan_levels, InputArray, LevelLayout, MemoryReport, MinCandidate, MinHierarchy};
pub use oracle::{cross_check, full_scan_rmq, CrossCheckReport, FullTable};
pub use query::{
    execute_batch, rmq, rmq_index, rmq_value, scan_bound, BatchOutput, ExecutionStats, Query, QueryBatch,
    QueryStats, ResultRecord, SchedulingStrategy,
};
pub use workload::{gen_array, gen_queries, RangeClass, WorkloadSpec};

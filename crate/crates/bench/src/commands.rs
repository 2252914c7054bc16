use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use minima_hierarchy::config::{minimal_cutoff, ScanStrategy};
use minima_hierarchy::io::{
    load_array, load_queries, read_hierarchy, save_array, save_hierarchy, save_queries, write_results_csv,
};
use minima_hierarchy::workload::WorkloadMeta;
use minima_hierarchy::{
    assignment_transactions, cross_check, execute_batch, full_scan_rmq, gen_array, gen_queries, scan_bound,
    ExecutionStats, HierarchyConfig, InputArray, LevelLayout, MemoryReport, MinHierarchy, QueryBatch,
    ResultRecord, SchedulingStrategy,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::settings::{Knobs, Settings};

pub const ARRAY_FILE: &str = "array.grmq";
pub const QUERY_FILE: &str = "queries.grmqq";
pub const WORKLOAD_FILE: &str = "workload.json";

const DEFAULT_M: usize = 1 << 16;
const DEFAULT_SWEEP_N: usize = 1 << 16;
const DEFAULT_SWEEP_M: usize = 1 << 14;

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub knobs: Knobs,
    /// Directory receiving array.grmq, queries.grmqq and workload.json.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[command(flatten)]
    pub knobs: Knobs,
    #[arg(long, default_value = ARRAY_FILE)]
    pub array: PathBuf,
    /// Hierarchy file; its config, layout and memory report go to `<out>.json`.
    #[arg(long, default_value = "hierarchy.grmqh")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[command(flatten)]
    pub knobs: Knobs,
    #[arg(long, default_value = "hierarchy.grmqh")]
    pub hierarchy: PathBuf,
    #[arg(long, default_value = QUERY_FILE)]
    pub queries: PathBuf,
    /// Results CSV; batch statistics go to `<out>.stats.json`.
    #[arg(long, default_value = "results.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub knobs: Knobs,
    #[arg(long, default_value = "hierarchy.grmqh")]
    pub hierarchy: PathBuf,
    #[arg(long, default_value = QUERY_FILE)]
    pub queries: PathBuf,
    /// JSON mismatch report.
    #[arg(long, default_value = "verify.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub knobs: Knobs,
    /// Array lengths to sweep (default: --n, else 65536).
    #[arg(long, value_delimiter = ',')]
    pub n_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [4, 8, 16, 32])]
    pub c_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [4, 8, 16, 32])]
    pub g_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [ScanStrategy::VectorBlock, ScanStrategy::LaneGroup])]
    pub strategy_list: Vec<ScanStrategy>,
    #[arg(long, default_value = "sweep.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub knobs: Knobs,
    /// Array file; generated from --n/--m/--class/--seed when omitted.
    #[arg(long, requires = "queries")]
    pub array: Option<PathBuf>,
    #[arg(long, requires = "array")]
    pub queries: Option<PathBuf>,
    /// Also time a full scan over a sample of the batch.
    #[arg(long)]
    pub baseline: bool,
    #[arg(long, default_value_t = 256)]
    pub baseline_sample: usize,
    /// CSV report; rows are appended.
    #[arg(long, default_value = "bench.csv")]
    pub out: PathBuf,
}

/// What `build` records next to a hierarchy file so later commands can read it back.
#[derive(Debug, Serialize, Deserialize)]
pub struct HierarchySidecar {
    pub n: usize,
    pub config: HierarchyConfig,
    pub layout: LevelLayout,
    pub memory: MemoryReport,
}

#[derive(Debug, Serialize)]
struct AssignmentCounts {
    multiload: u64,
    wlq: u64,
}

#[derive(Debug, Serialize)]
struct StatsReport {
    n: usize,
    m: usize,
    scheduling: SchedulingStrategy,
    config: HierarchyConfig,
    entries_scanned: u64,
    mean_entries_scanned: f64,
    max_entries_scanned: u64,
    scan_bound: u64,
    max_levels_touched: u32,
    scan_transactions: u64,
    bound_load_transactions: u64,
    load_steps: u64,
    idle_slots: u64,
    groups: u64,
    assignment_transactions: AssignmentCounts,
    wall_ms: f64,
}

impl StatsReport {
    fn new(h: &MinHierarchy, sched: SchedulingStrategy, stats: &ExecutionStats, wall_ms: f64) -> Self {
        let config = *h.config();
        let m = stats.per_query.len();
        let g = config.effective_group_size() as u64;
        StatsReport {
            n: h.len(),
            m,
            scheduling: sched,
            config,
            entries_scanned: stats.entries_scanned,
            mean_entries_scanned: stats.mean_entries_scanned(),
            max_entries_scanned: stats.max_entries_scanned,
            scan_bound: scan_bound(h.len(), config.chunk_size, config.cutoff),
            max_levels_touched: stats.max_levels_touched,
            scan_transactions: stats.scan_transactions,
            bound_load_transactions: stats.bound_load_transactions,
            load_steps: stats.load_steps,
            idle_slots: stats.idle_slots,
            groups: stats.groups,
            assignment_transactions: AssignmentCounts {
                multiload: assignment_transactions(m as u64, g, SchedulingStrategy::MultiLoad),
                wlq: assignment_transactions(m as u64, g, SchedulingStrategy::WarpLocalQueue),
            },
            wall_ms,
        }
    }
}

pub fn gen(args: &GenArgs, s: &Settings) -> CliResult<()> {
    let spec = s.workload(DEFAULT_M)?;
    let array = gen_array(spec.n, spec.seed)?;
    let batch = gen_queries(&spec)?;
    fs::create_dir_all(&args.out)?;
    save_array(args.out.join(ARRAY_FILE), &array)?;
    save_queries(args.out.join(QUERY_FILE), &batch, array.position_width())?;
    let meta = WorkloadMeta::describe(&spec, &batch);
    write_json(&args.out.join(WORKLOAD_FILE), &meta)?;
    eprintln!(
        "gen: n={} m={} class={} seed={} median range size {} -> {}",
        spec.n,
        spec.m,
        spec.class,
        spec.seed,
        meta.median_range_size,
        args.out.display()
    );
    Ok(())
}

pub fn build(args: &BuildArgs, s: &Settings) -> CliResult<()> {
    let array = at(&args.array, load_array(&args.array))?;
    let n = array.len();
    let config = s.hierarchy_config(HierarchyConfig::default_for(n))?;
    let start = Instant::now();
    let h = MinHierarchy::build(array, config)?;
    let build_ms = ms_since(start);
    save_hierarchy(&args.out, &h)?;
    let sidecar = HierarchySidecar { n, config, layout: h.layout().clone(), memory: h.memory_report() };
    write_json(&sidecar_path(&args.out), &sidecar)?;
    eprintln!(
        "build: n={n} strategy={} c={} g={} t={} levels={} aux ratio {:.4} in {build_ms:.1} ms",
        config.strategy,
        config.chunk_size,
        config.group_size,
        config.cutoff,
        h.num_levels(),
        sidecar.memory.ratio
    );
    Ok(())
}

pub fn query(args: &QueryArgs, s: &Settings) -> CliResult<()> {
    let h = open_hierarchy(&args.hierarchy, s)?;
    let batch = at(&args.queries, load_queries(&args.queries))?;
    let sched = s.scheduling_or_default();
    let start = Instant::now();
    let output = execute_batch(&h, &batch, sched)?;
    let wall_ms = ms_since(start);

    let mut w = BufWriter::new(File::create(&args.out)?);
    write_results_csv(&mut w, &batch, &output.results)?;
    w.flush()?;
    let stats = StatsReport::new(&h, sched, &output.stats, wall_ms);
    write_json(&with_suffix(&args.out, ".stats.json"), &stats)?;
    eprintln!(
        "query: {} queries ({sched}) mean entries scanned {:.1}, max {} (bound {}), {wall_ms:.1} ms",
        batch.len(),
        stats.mean_entries_scanned,
        stats.max_entries_scanned,
        stats.scan_bound
    );
    Ok(())
}

pub fn verify(args: &VerifyArgs, s: &Settings) -> CliResult<()> {
    let h = open_hierarchy(&args.hierarchy, s)?;
    let batch = at(&args.queries, load_queries(&args.queries))?;
    let report = cross_check(&h, &batch, s.scheduling_or_default())?;
    write_json(&args.out, &report)?;
    if report.is_clean() {
        eprintln!("verify: {} queries match the full scan", report.queries);
        Ok(())
    } else {
        Err(CliError::Mismatch { mismatches: report.mismatches.len(), queries: report.queries })
    }
}

#[derive(Debug)]
struct SweepRow {
    n: usize,
    config: HierarchyConfig,
    mean_entries: f64,
    max_entries: u64,
    transactions_per_query: f64,
    ns_per_query: f64,
}

pub fn sweep(args: &SweepArgs, s: &Settings) -> CliResult<()> {
    let n_list =
        if args.n_list.is_empty() { vec![s.n.unwrap_or(DEFAULT_SWEEP_N)] } else { args.n_list.clone() };
    if args.c_list.is_empty() || args.g_list.is_empty() || args.strategy_list.is_empty() {
        return Err(CliError::usage("sweep grid is empty"));
    }
    let sched = s.scheduling_or_default();
    let track_index = s.track_index.unwrap_or(false);

    let mut w = BufWriter::new(File::create(&args.out)?);
    writeln!(
        w,
        "n,m,class,seed,strategy,scheduling,c,g,t,mean_entries_scanned,max_entries_scanned,\
         transactions_per_query,ns_per_query,norm_entries,norm_transactions,norm_time"
    )?;
    for &n in &n_list {
        let spec = Knobs { n: Some(n), ..s.clone() }.workload(DEFAULT_SWEEP_M)?;
        let array = gen_array(n, spec.seed)?;
        let batch = gen_queries(&spec)?;
        let mut rows = Vec::new();
        for &strategy in &args.strategy_list {
            for &c in &args.c_list {
                for &g in &args.g_list {
                    let config = HierarchyConfig {
                        chunk_size: c,
                        cutoff: minimal_cutoff(strategy, c),
                        group_size: g,
                        strategy,
                        track_index,
                    };
                    if let Err(e) = config.validate() {
                        eprintln!("sweep: skipping {strategy} c={c} g={g}: {e}");
                        continue;
                    }
                    rows.push(sweep_point(&array, &batch, config, sched)?);
                }
            }
        }
        let best =
            |f: fn(&SweepRow) -> f64| rows.iter().map(f).fold(f64::INFINITY, f64::min).max(f64::MIN_POSITIVE);
        let best_entries = best(|r| r.mean_entries);
        let best_tx = best(|r| r.transactions_per_query);
        let best_time = best(|r| r.ns_per_query);
        for r in &rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{:.4},{},{:.4},{:.1},{:.6},{:.6},{:.6}",
                r.n,
                spec.m,
                spec.class,
                spec.seed,
                r.config.strategy,
                sched,
                r.config.chunk_size,
                r.config.group_size,
                r.config.cutoff,
                r.mean_entries,
                r.max_entries,
                r.transactions_per_query,
                r.ns_per_query,
                r.mean_entries / best_entries,
                r.transactions_per_query / best_tx,
                r.ns_per_query / best_time
            )?;
        }
        eprintln!("sweep: n={n}: {} configurations", rows.len());
    }
    w.flush()?;
    Ok(())
}

fn sweep_point(
    array: &InputArray,
    batch: &QueryBatch,
    config: HierarchyConfig,
    sched: SchedulingStrategy,
) -> CliResult<SweepRow> {
    let h = MinHierarchy::build(array.clone(), config)?;
    let start = Instant::now();
    let output = execute_batch(&h, batch, sched)?;
    let elapsed = start.elapsed().as_secs_f64();
    let m = batch.len() as f64;
    let stats = &output.stats;
    Ok(SweepRow {
        n: array.len(),
        config,
        mean_entries: stats.mean_entries_scanned(),
        max_entries: stats.max_entries_scanned,
        transactions_per_query: (stats.scan_transactions + stats.bound_load_transactions) as f64 / m,
        ns_per_query: elapsed * 1e9 / m,
    })
}

const BENCH_HEADER: &str = "n,m,class,seed,strategy,scheduling,c,g,t,track_index,wall_ms,ns_per_query,\
mean_entries_scanned,max_entries_scanned,scan_transactions,bound_load_transactions,aux_bytes,memory_ratio,\
checksum,baseline_sample,baseline_mean_entries,baseline_ns_per_query,baseline_speedup";

pub fn bench(args: &BenchArgs, s: &Settings) -> CliResult<()> {
    let (array, batch, class, seed) = match (&args.array, &args.queries) {
        (Some(array_path), Some(query_path)) => {
            let meta = query_path.parent().map(|dir| dir.join(WORKLOAD_FILE)).filter(|p| p.exists());
            let meta: Option<WorkloadMeta> = match meta {
                Some(path) => Some(serde_json::from_slice(&fs::read(path)?)?),
                None => None,
            };
            let class = meta.as_ref().map(|m| m.class.to_string()).unwrap_or_default();
            let seed = meta.map(|m| m.seed.to_string()).unwrap_or_default();
            (at(array_path, load_array(array_path))?, at(query_path, load_queries(query_path))?, class, seed)
        }
        _ => {
            let spec = s.workload(DEFAULT_M)?;
            (
                gen_array(spec.n, spec.seed)?,
                gen_queries(&spec)?,
                spec.class.to_string(),
                spec.seed.to_string(),
            )
        }
    };
    let n = array.len();
    let config = s.hierarchy_config(HierarchyConfig::default_for(n))?;
    let h = MinHierarchy::build(array, config)?;
    let memory = h.memory_report();
    let m = batch.len();

    let baseline =
        if args.baseline { Some(full_scan_baseline(&h, &batch, args.baseline_sample)?) } else { None };

    let schedules = match s.scheduling {
        Some(sched) => vec![sched],
        None => SchedulingStrategy::ALL.to_vec(),
    };
    let fresh = fs::metadata(&args.out).map(|md| md.len() == 0).unwrap_or(true);
    let mut w = BufWriter::new(OpenOptions::new().create(true).append(true).open(&args.out)?);
    if fresh {
        writeln!(w, "{BENCH_HEADER}")?;
    }
    for sched in schedules {
        let start = Instant::now();
        let output = execute_batch(&h, &batch, sched)?;
        let wall_ms = ms_since(start);
        let ns_per_query = wall_ms * 1e6 / m as f64;
        let stats = &output.stats;
        let checksum = checksum(&output.results);
        let baseline_cols = match &baseline {
            Some(b) => format!(
                "{},{:.1},{:.1},{:.1}",
                b.sample,
                b.mean_entries,
                b.ns_per_query,
                b.ns_per_query / ns_per_query.max(f64::MIN_POSITIVE)
            ),
            None => ",,,".to_string(),
        };
        writeln!(
            w,
            "{n},{m},{class},{seed},{},{sched},{},{},{},{},{wall_ms:.3},{ns_per_query:.1},{:.4},{},{},{},{},{:.6},{checksum:016x},{baseline_cols}",
            config.strategy,
            config.chunk_size,
            config.group_size,
            config.cutoff,
            config.track_index,
            stats.mean_entries_scanned(),
            stats.max_entries_scanned,
            stats.scan_transactions,
            stats.bound_load_transactions,
            memory.aux_total_bytes,
            memory.ratio,
        )?;
        eprintln!(
            "bench: {sched}: {m} queries in {wall_ms:.1} ms, mean entries scanned {:.1}, checksum {checksum:016x}",
            stats.mean_entries_scanned()
        );
    }
    w.flush()?;
    Ok(())
}

struct Baseline {
    sample: usize,
    /// Exact mean over the whole batch: a full scan reads every entry of the range.
    mean_entries: f64,
    /// Measured on the first `sample` queries.
    ns_per_query: f64,
}

fn full_scan_baseline(h: &MinHierarchy, batch: &QueryBatch, sample: usize) -> CliResult<Baseline> {
    let queries = batch.queries();
    let mean_entries = queries.iter().map(|q| q.len() as f64).sum::<f64>() / queries.len() as f64;
    let sample = sample.clamp(1, queries.len());
    let start = Instant::now();
    let mut sink = 0.0f32;
    for q in &queries[..sample] {
        sink += full_scan_rmq(h.base().values(), q.l, q.r)?.value;
    }
    let ns_per_query = start.elapsed().as_secs_f64() * 1e9 / sample as f64;
    std::hint::black_box(sink);
    Ok(Baseline { sample, mean_entries, ns_per_query })
}

/// FNV-1a over each result's value bits and index, in input order.
pub fn checksum(results: &[ResultRecord]) -> u64 {
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for r in results {
        let index = r.index.map_or(u64::MAX, |i| i as u64);
        for byte in r.value.to_bits().to_le_bytes().into_iter().chain(index.to_le_bytes()) {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(PRIME);
        }
    }
    hash
}

pub fn sidecar_path(hierarchy: &Path) -> PathBuf {
    with_suffix(hierarchy, ".json")
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Loads a hierarchy file using the config recorded by `build`, or the
/// default for its length when there is no sidecar. Flags override either.
fn open_hierarchy(path: &Path, s: &Settings) -> CliResult<MinHierarchy> {
    let bytes = fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let sidecar = sidecar_path(path);
    let base = if sidecar.exists() {
        serde_json::from_slice::<HierarchySidecar>(&fs::read(&sidecar)?)?.config
    } else {
        let n = bytes
            .get(6..14)
            .map(|b| u64::from_le_bytes(b.try_into().unwrap()) as usize)
            .ok_or_else(|| CliError::Input(format!("{}: truncated header", path.display())))?;
        HierarchyConfig::default_for(n)
    };
    let config = s.hierarchy_config(base)?;
    at(path, read_hierarchy(&mut bytes.as_slice(), config))
}

/// Prefixes file errors with the path they concern.
fn at<T>(path: &Path, result: minima_hierarchy::Result<T>) -> CliResult<T> {
    result.map_err(|e| match CliError::from(e) {
        CliError::Input(msg) => CliError::Input(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn ms_since(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

//! Settings shared by all subcommands: command-line flags layered over an
//! optional `key = value` config file. Flags always win.

use std::collections::HashMap;
use std::fmt::Display;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;
use minima_hierarchy::config::{minimal_cutoff, ScanStrategy};
use minima_hierarchy::{HierarchyConfig, RangeClass, SchedulingStrategy, WorkloadSpec};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, Args)]
pub struct Knobs {
    /// Array length.
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of queries.
    #[arg(long)]
    pub m: Option<usize>,
    /// Range-size class: large, medium, small or mixed.
    #[arg(long)]
    pub class: Option<RangeClass>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Entries summarized per entry of the level above (c).
    #[arg(long)]
    pub chunk_size: Option<usize>,
    /// Cooperating lanes per query (g).
    #[arg(long)]
    pub group_size: Option<usize>,
    /// Largest top-level size (t); defaults to the minimum for the strategy.
    #[arg(long)]
    pub cutoff: Option<usize>,
    /// Scan strategy: vector or lane.
    #[arg(long)]
    pub strategy: Option<ScanStrategy>,
    /// Query assignment: multiload or wlq.
    #[arg(long)]
    pub scheduling: Option<SchedulingStrategy>,
    /// Store argmin positions so results carry indices.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub track_index: Option<bool>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Plain-text `key = value` file with defaults for any of these flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

const KEYS: [&str; 11] = [
    "n",
    "m",
    "class",
    "seed",
    "chunk-size",
    "group-size",
    "cutoff",
    "strategy",
    "scheduling",
    "track-index",
    "workers",
];

/// Flags after merging in the config file.
pub type Settings = Knobs;

impl Knobs {
    pub fn resolve(self) -> CliResult<Settings> {
        let Some(path) = &self.config else {
            return Ok(self);
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config file {}: {e}", path.display())))?;
        let file = parse_config(&text)?;
        Ok(Knobs {
            n: self.n.or(lookup(&file, "n")?),
            m: self.m.or(lookup(&file, "m")?),
            class: self.class.or(lookup(&file, "class")?),
            seed: self.seed.or(lookup(&file, "seed")?),
            chunk_size: self.chunk_size.or(lookup(&file, "chunk-size")?),
            group_size: self.group_size.or(lookup(&file, "group-size")?),
            cutoff: self.cutoff.or(lookup(&file, "cutoff")?),
            strategy: self.strategy.or(lookup(&file, "strategy")?),
            scheduling: self.scheduling.or(lookup(&file, "scheduling")?),
            track_index: self.track_index.or(lookup(&file, "track-index")?),
            workers: self.workers.or(lookup(&file, "workers")?),
            config: self.config,
        })
    }

    pub fn workload(&self, default_m: usize) -> CliResult<WorkloadSpec> {
        let n = self.n.ok_or_else(|| CliError::usage("--n is required"))?;
        let spec = WorkloadSpec {
            n,
            m: self.m.unwrap_or(default_m),
            class: self.class.unwrap_or(RangeClass::Mixed),
            seed: self.seed.unwrap_or(0),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn scheduling_or_default(&self) -> SchedulingStrategy {
        self.scheduling.unwrap_or(SchedulingStrategy::WarpLocalQueue)
    }

    /// Applies the hierarchy flags on top of `base`. Changing the strategy or
    /// chunk size resets the cutoff to its minimum unless `--cutoff` is given.
    pub fn hierarchy_config(&self, base: HierarchyConfig) -> CliResult<HierarchyConfig> {
        let strategy = self.strategy.unwrap_or(base.strategy);
        let chunk_size = self.chunk_size.unwrap_or(base.chunk_size);
        let cutoff = match self.cutoff {
            Some(t) => t,
            None if strategy == base.strategy && chunk_size == base.chunk_size => base.cutoff,
            None => minimal_cutoff(strategy, chunk_size),
        };
        let config = HierarchyConfig {
            chunk_size,
            cutoff,
            group_size: self.group_size.unwrap_or(base.group_size),
            strategy,
            track_index: self.track_index.unwrap_or(base.track_index),
        };
        config.validate()?;
        Ok(config)
    }
}

fn parse_config(text: &str) -> CliResult<HashMap<String, String>> {
    let mut entries = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("config line {}: expected key = value", lineno + 1)))?;
        let key = key.trim().replace('_', "-");
        if !KEYS.contains(&key.as_str()) {
            return Err(CliError::usage(format!("config line {}: unknown key {key:?}", lineno + 1)));
        }
        entries.insert(key, value.trim().to_string());
    }
    Ok(entries)
}

fn lookup<T>(file: &HashMap<String, String>, key: &str) -> CliResult<Option<T>>
where
    T: FromStr,
    T::Err: Display,
{
    file.get(key)
        .map(|raw| raw.parse().map_err(|e| CliError::usage(format!("config key {key}: {e}"))))
        .transpose()
}

//! Flat `key = value` run configuration with dotted namespaces.
//!
//! Lines are `key = value`, `#` starts a comment, blank lines are skipped.
//! Unknown keys are rejected. Every key has a default matching the
//! simulated machine: 32KB/8-way split L1 (DCache under CBP), 1MB/16-way
//! LRU L2 with 10/40 read/write cycle latencies, exclusive inclusion,
//! selective copy-back, stride prefetcher.

use thiserror::Error;

use crate::core::{CacheGeometry, GeometryError, DEFAULT_BLOCK_BYTES};
use crate::engine::{LatencyConfig, PrefetchFillLevel, PrefetcherKind, SimConfig};
use crate::hierarchy::{CopybackPolicy, InclusionMode, RdMissScope};
use crate::policy::PolicyKind;
use crate::trace::GeneratorModel;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value {value:?} for {key}: {msg}")]
    BadValue {
        line: usize,
        key: String,
        value: String,
        msg: String,
    },
    #[error("invalid geometry for {cache}: {source}")]
    Geometry {
        cache: &'static str,
        source: GeometryError,
    },
}

/// Materialized configuration: the engine config plus the generator model
/// and the shared seed.
#[derive(Debug, Clone, Copy)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub gen: GeneratorModel,
    pub seed: u64,
}

/// (key, default, description) for every accepted key.
pub const CONFIG_KEYS: &[(&str, &str, &str)] = &[
    ("l1i.size_kb", "32", "L1 ICache capacity in KiB"),
    ("l1i.assoc", "8", "L1 ICache associativity"),
    ("l1d.size_kb", "32", "L1 DCache capacity in KiB"),
    ("l1d.assoc", "8", "L1 DCache associativity"),
    ("l1d.policy", "cbp", "L1 DCache replacement policy: lru | cbp"),
    ("l2.size_kb", "1024", "L2 capacity in KiB"),
    ("l2.assoc", "16", "L2 associativity"),
    ("l2.read_lat", "10", "L2 read latency in cycles"),
    ("l2.write_lat", "40", "L2 write latency in cycles"),
    ("l1_hit_lat", "1", "L1 hit latency in cycles"),
    ("mem_lat", "100", "memory latency in cycles"),
    ("block_bytes", "64", "cache block size in bytes"),
    ("inclusion", "exclusive", "inclusion mode: exclusive | non_inclusive"),
    (
        "copyback",
        "selective",
        "clean copy-back policy: all | none | icache_only | dcache_only | selective",
    ),
    ("prefetcher", "stride", "prefetcher: none | stride"),
    ("prefetch.table_entries", "64", "stride table entries"),
    ("prefetch.confidence_threshold", "2", "stride confidence needed to issue"),
    ("prefetch.fill_level", "l1d", "where prefetches land: l1d | l2"),
    ("exclusive_fill_l2", "false", "also fill L2 on demand misses in exclusive mode"),
    ("rd_miss_scope", "per_set", "rd aging scope on a miss: per_set | global"),
    ("seed", "0", "seed for all randomness"),
    ("gen.num_blocks", "10000", "generator working-set size in blocks"),
    ("gen.hot_fraction", "0.1", "fraction of live blocks that are hot"),
    ("gen.hot_weight", "0.5", "probability mass on hot blocks"),
    ("gen.dead_fraction", "0.0", "fraction of blocks touched exactly once"),
    ("gen.write_ratio", "0.3", "store fraction of data accesses"),
    ("gen.instr_ratio", "0.0", "instruction-fetch fraction of accesses"),
];

/// One line per key for `--help`.
pub fn config_keys_help() -> String {
    let mut out = String::from("Config file keys (key = value, # comments):\n");
    for (key, default, desc) in CONFIG_KEYS {
        out.push_str(&format!("  {key:<32} default {default:<12} {desc}\n"));
    }
    out
}

#[derive(Debug, Clone)]
struct RawConfig {
    l1i_size_kb: u64,
    l1i_assoc: u64,
    l1d_size_kb: u64,
    l1d_assoc: u64,
    l1d_policy: PolicyKind,
    l2_size_kb: u64,
    l2_assoc: u64,
    l2_read_lat: u64,
    l2_write_lat: u64,
    l1_hit_lat: u64,
    mem_lat: u64,
    block_bytes: u64,
    inclusion: InclusionMode,
    copyback: CopybackPolicy,
    prefetcher: PrefetcherKind,
    prefetch_table_entries: u64,
    prefetch_confidence_threshold: u64,
    prefetch_fill_level: PrefetchFillLevel,
    exclusive_fill_l2: bool,
    rd_miss_scope: RdMissScope,
    seed: u64,
    gen: GeneratorModel,
}

impl Default for RawConfig {
    fn default() -> Self {
        Self {
            l1i_size_kb: 32,
            l1i_assoc: 8,
            l1d_size_kb: 32,
            l1d_assoc: 8,
            l1d_policy: PolicyKind::Cbp,
            l2_size_kb: 1024,
            l2_assoc: 16,
            l2_read_lat: 10,
            l2_write_lat: 40,
            l1_hit_lat: 1,
            mem_lat: 100,
            block_bytes: DEFAULT_BLOCK_BYTES,
            inclusion: InclusionMode::Exclusive,
            copyback: CopybackPolicy::Selective,
            prefetcher: PrefetcherKind::Stride,
            prefetch_table_entries: 64,
            prefetch_confidence_threshold: 2,
            prefetch_fill_level: PrefetchFillLevel::L1D,
            exclusive_fill_l2: false,
            rd_miss_scope: RdMissScope::PerSet,
            seed: 0,
            gen: GeneratorModel::default(),
        }
    }
}

fn bad(line: usize, key: &str, value: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        line,
        key: key.to_string(),
        value: value.to_string(),
        msg: msg.into(),
    }
}

fn parse_u64(line: usize, key: &str, value: &str) -> Result<u64, ConfigError> {
    value
        .parse()
        .map_err(|_| bad(line, key, value, "expected an unsigned integer"))
}

fn parse_f64(line: usize, key: &str, value: &str) -> Result<f64, ConfigError> {
    value
        .parse()
        .map_err(|_| bad(line, key, value, "expected a number"))
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(bad(line, key, value, "expected true or false")),
    }
}

impl RawConfig {
    fn set(&mut self, line: usize, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "l1i.size_kb" => self.l1i_size_kb = parse_u64(line, key, value)?,
            "l1i.assoc" => self.l1i_assoc = parse_u64(line, key, value)?,
            "l1d.size_kb" => self.l1d_size_kb = parse_u64(line, key, value)?,
            "l1d.assoc" => self.l1d_assoc = parse_u64(line, key, value)?,
            "l1d.policy" => {
                self.l1d_policy = match value {
                    "lru" => PolicyKind::Lru,
                    "cbp" => PolicyKind::Cbp,
                    _ => return Err(bad(line, key, value, "expected lru or cbp")),
                }
            }
            "l2.size_kb" => self.l2_size_kb = parse_u64(line, key, value)?,
            "l2.assoc" => self.l2_assoc = parse_u64(line, key, value)?,
            "l2.read_lat" => self.l2_read_lat = parse_u64(line, key, value)?,
            "l2.write_lat" => self.l2_write_lat = parse_u64(line, key, value)?,
            "l1_hit_lat" => self.l1_hit_lat = parse_u64(line, key, value)?,
            "mem_lat" => self.mem_lat = parse_u64(line, key, value)?,
            "block_bytes" => self.block_bytes = parse_u64(line, key, value)?,
            "inclusion" => {
                self.inclusion = match value {
                    "exclusive" => InclusionMode::Exclusive,
                    "non_inclusive" => InclusionMode::NonInclusive,
                    _ => return Err(bad(line, key, value, "expected exclusive or non_inclusive")),
                }
            }
            "copyback" => {
                self.copyback = match value {
                    "all" => CopybackPolicy::All,
                    "none" => CopybackPolicy::None,
                    "icache_only" => CopybackPolicy::ICacheOnly,
                    "dcache_only" => CopybackPolicy::DCacheOnly,
                    "selective" => CopybackPolicy::Selective,
                    _ => {
                        return Err(bad(
                            line,
                            key,
                            value,
                            "expected all, none, icache_only, dcache_only, or selective",
                        ))
                    }
                }
            }
            "prefetcher" => {
                self.prefetcher = match value {
                    "none" => PrefetcherKind::None,
                    "stride" => PrefetcherKind::Stride,
                    _ => return Err(bad(line, key, value, "expected none or stride")),
                }
            }
            "prefetch.table_entries" => {
                self.prefetch_table_entries = parse_u64(line, key, value)?
            }
            "prefetch.confidence_threshold" => {
                self.prefetch_confidence_threshold = parse_u64(line, key, value)?
            }
            "prefetch.fill_level" => {
                self.prefetch_fill_level = match value {
                    "l1d" => PrefetchFillLevel::L1D,
                    "l2" => PrefetchFillLevel::L2,
                    _ => return Err(bad(line, key, value, "expected l1d or l2")),
                }
            }
            "exclusive_fill_l2" => self.exclusive_fill_l2 = parse_bool(line, key, value)?,
            "rd_miss_scope" => {
                self.rd_miss_scope = match value {
                    "per_set" => RdMissScope::PerSet,
                    "global" => RdMissScope::Global,
                    _ => return Err(bad(line, key, value, "expected per_set or global")),
                }
            }
            "seed" => self.seed = parse_u64(line, key, value)?,
            "gen.num_blocks" => self.gen.num_blocks = parse_u64(line, key, value)?,
            "gen.hot_fraction" => self.gen.hot_fraction = parse_f64(line, key, value)?,
            "gen.hot_weight" => self.gen.hot_weight = parse_f64(line, key, value)?,
            "gen.dead_fraction" => self.gen.dead_fraction = parse_f64(line, key, value)?,
            "gen.write_ratio" => self.gen.write_ratio = parse_f64(line, key, value)?,
            "gen.instr_ratio" => self.gen.instr_ratio = parse_f64(line, key, value)?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    fn build(mut self) -> Result<RunConfig, ConfigError> {
        let geom = |cache, size_kb: u64, assoc| {
            CacheGeometry::new(size_kb * 1024, assoc, self.block_bytes)
                .map_err(|source| ConfigError::Geometry { cache, source })
        };
        let sim = SimConfig {
            l1i: geom("l1i", self.l1i_size_kb, self.l1i_assoc)?,
            l1d: geom("l1d", self.l1d_size_kb, self.l1d_assoc)?,
            l2: geom("l2", self.l2_size_kb, self.l2_assoc)?,
            l1i_policy: PolicyKind::Lru,
            l1d_policy: self.l1d_policy,
            inclusion: self.inclusion,
            copyback: self.copyback,
            rd_miss_scope: self.rd_miss_scope,
            exclusive_fill_l2: self.exclusive_fill_l2,
            latency: LatencyConfig {
                l1_hit_cycles: self.l1_hit_lat,
                l2_read_cycles: self.l2_read_lat,
                l2_write_cycles: self.l2_write_lat,
                mem_cycles: self.mem_lat,
            },
            prefetcher: self.prefetcher,
            prefetch_table_entries: self.prefetch_table_entries as usize,
            prefetch_confidence_threshold: self.prefetch_confidence_threshold.min(3) as u8,
            prefetch_fill_level: self.prefetch_fill_level,
            seed: self.seed,
        };
        self.gen.block_bytes = self.block_bytes;
        self.gen.seed = self.seed;
        Ok(RunConfig {
            sim,
            gen: self.gen,
            seed: self.seed,
        })
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = RawConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: line_no,
                text: content.to_string(),
            })?;
            raw.set(line_no, key.trim(), value.trim())?;
        }
        raw.build()
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RawConfig::default().build().expect("defaults are valid")
    }
}

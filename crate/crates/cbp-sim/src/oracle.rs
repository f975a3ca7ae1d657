//! Offline analyses with full-trace knowledge: miss-based reuse distances,
//! the dead-line breakdown, and the future-knowledge selective copy-back
//! baseline.

use std::cell::Cell;
use std::collections::HashMap;
use std::rc::Rc;

use thiserror::Error;

use crate::core::CacheGeometry;
use crate::engine::{EngineError, SimConfig, SimReport, Simulation};
use crate::hierarchy::{AccessKind, CacheLevel, RdMissScope};
use crate::policy::PolicyKind;
use crate::trace::AccessRecord;

/// Which L1 stream the analysis cache models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalysisCache {
    ICache,
    DCache,
}

/// All reuse visits of one block: the miss-based distance of every
/// consecutive access pair, plus an implicit terminal visit for the final
/// access.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockReuse {
    pub block: u64,
    pub distances: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeadLineBreakdown {
    pub reused_fraction: f64,
    pub dead_fraction: f64,
    pub threshold: u64,
}

/// Population for the breakdown: classify individual visits, or whole
/// blocks (a block is reused if any of its visits is).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BreakdownMode {
    Visits,
    PerBlock,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("no reuse records to classify (empty or irrelevant trace)")]
    Empty,
}

pub const DEFAULT_DEAD_THRESHOLD: u64 = 1000;

fn relevant(kind: AccessKind, cache: AnalysisCache) -> bool {
    match cache {
        AnalysisCache::ICache => kind == AccessKind::InstrFetch,
        AnalysisCache::DCache => matches!(kind, AccessKind::Load | AccessKind::Store),
    }
}

/// Simulate one LRU cache over the relevant stream, logging the global miss
/// counter, then difference per block. The distance of a visit pair counts
/// the misses strictly between the two accesses.
pub fn miss_based_reuse(
    records: &[AccessRecord],
    geom: CacheGeometry,
    cache: AnalysisCache,
) -> Vec<BlockReuse> {
    let mut sim_cache = SingleCache::new(geom);
    let mut miss_count = 0u64;
    // miss counter value right after each block's previous access
    let mut post_counter: HashMap<u64, u64> = HashMap::new();
    let mut reuse: HashMap<u64, Vec<u64>> = HashMap::new();

    for r in records.iter().filter(|r| relevant(r.kind, cache)) {
        let block = geom.block_addr(r.addr);
        let pre = miss_count;
        if !sim_cache.access(r.addr) {
            miss_count += 1;
        }
        if let Some(prev_post) = post_counter.get(&block) {
            reuse.entry(block).or_default().push(pre - prev_post);
        } else {
            reuse.entry(block).or_default();
        }
        post_counter.insert(block, miss_count);
    }

    let mut out: Vec<BlockReuse> = reuse
        .into_iter()
        .map(|(block, distances)| BlockReuse { block, distances })
        .collect();
    out.sort_by_key(|r| r.block);
    out
}

/// Classify visits (or blocks) as reused vs dead. A visit is dead when its
/// distance is strictly greater than the threshold; terminal visits (no
/// next access) are dead by definition.
pub fn dead_breakdown(
    records: &[BlockReuse],
    threshold: u64,
    mode: BreakdownMode,
) -> Result<DeadLineBreakdown, OracleError> {
    if records.is_empty() {
        return Err(OracleError::Empty);
    }
    let (dead, total) = match mode {
        BreakdownMode::Visits => {
            let mut dead = 0u64;
            let mut total = 0u64;
            for r in records {
                dead += r.distances.iter().filter(|&&d| d > threshold).count() as u64;
                dead += 1; // terminal visit
                total += r.distances.len() as u64 + 1;
            }
            (dead, total)
        }
        BreakdownMode::PerBlock => {
            let dead = records
                .iter()
                .filter(|r| !r.distances.iter().any(|&d| d <= threshold))
                .count() as u64;
            (dead, records.len() as u64)
        }
    };
    let dead_fraction = dead as f64 / total as f64;
    Ok(DeadLineBreakdown {
        reused_fraction: 1.0 - dead_fraction,
        dead_fraction,
        threshold,
    })
}

/// Power-of-two distance histogram rows, plus a `terminal` row.
pub fn distance_histogram(records: &[BlockReuse]) -> Vec<(String, u64)> {
    let mut buckets: Vec<u64> = Vec::new();
    let mut terminals = 0u64;
    for r in records {
        terminals += 1;
        for &d in &r.distances {
            let idx = if d == 0 { 0 } else { 64 - d.leading_zeros() as usize };
            if buckets.len() <= idx {
                buckets.resize(idx + 1, 0);
            }
            buckets[idx] += 1;
        }
    }
    let mut out: Vec<(String, u64)> = buckets
        .iter()
        .enumerate()
        .map(|(i, &count)| {
            let lo = if i == 0 { 0 } else { 1u64 << (i - 1) };
            (lo.to_string(), count)
        })
        .collect();
    out.push(("terminal".to_string(), terminals));
    out
}

/// Run the hierarchy with LRU replacement everywhere, copying back a clean
/// L1 victim iff the block's next access falls within `horizon` subsequent
/// trace accesses. Two-pass: the next-use index is built up front.
pub fn future_selective_copyback(
    records: &[AccessRecord],
    config: &SimConfig,
    horizon: u64,
) -> Result<SimReport, EngineError> {
    let mut config = *config;
    config.l1i_policy = PolicyKind::Lru;
    config.l1d_policy = PolicyKind::Lru;

    let block_bytes = config.l1d.block_bytes;
    let mut positions: HashMap<u64, Vec<usize>> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        positions.entry(r.addr / block_bytes).or_default().push(i);
    }

    let mut sim = Simulation::new(&config)?;
    let pos = Rc::new(Cell::new(0usize));
    {
        let pos = Rc::clone(&pos);
        sim.hierarchy_mut()
            .set_clean_copyback_hook(Box::new(move |block| {
                let i = pos.get();
                match positions.get(&block) {
                    None => false,
                    Some(ps) => {
                        // first access strictly after the current one
                        let j = ps.partition_point(|&p| p <= i);
                        j < ps.len() && (ps[j] - i) as u64 <= horizon
                    }
                }
            }));
    }
    for (i, r) in records.iter().enumerate() {
        pos.set(i);
        sim.step(r);
    }
    Ok(sim.finish())
}

/// Minimal standalone LRU cache used by the reuse analysis.
struct SingleCache {
    level: CacheLevel,
}

impl SingleCache {
    fn new(geom: CacheGeometry) -> Self {
        Self {
            level: CacheLevel::new(geom, PolicyKind::Lru, RdMissScope::PerSet),
        }
    }

    /// Returns true on hit.
    fn access(&mut self, addr: u64) -> bool {
        if let Some((set, way)) = self.level.lookup(addr) {
            self.level.touch(set, way);
            true
        } else {
            self.level.fill_lru(addr);
            false
        }
    }
}

//! Two-level cache hierarchy: split L1 (ICache/DCache) over a shared L2,
//! with exclusive or non-inclusive inclusion and a configurable policy for
//! copying back clean L1 victims.
//!
//! Every access is processed to completion, including recursive L2
//! evictions, before the next begins. A copied-back victim is installed in
//! L2 before its L1 entry is invalidated, so there is no window where the
//! block lives nowhere.

use std::collections::HashSet;

use crate::core::{Address, CacheGeometry, LineMeta};
use crate::policy::{self, PolicyKind, SetPolicyState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InclusionMode {
    Exclusive,
    NonInclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CopybackPolicy {
    All,
    None,
    ICacheOnly,
    DCacheOnly,
    Selective,
}

/// Scope of the rd aging on a miss: only the missed set (the default)
/// or every set of the cache (prose-literal).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RdMissScope {
    PerSet,
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessKind {
    InstrFetch,
    Load,
    Store,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheId {
    L1I,
    L1D,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServiceLevel {
    L1,
    L2,
    Memory,
}

/// One L2 data-array operation, in the order it claims the port.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PortOp {
    /// Demand read (L2 hit data or tag probe on the miss path); stalls the core.
    Read,
    /// Copy-back / write-back / fill write; occupies the port only.
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvictionOutcome {
    pub cache: CacheId,
    pub victim_block: u64,
    pub was_dirty: bool,
    pub copied_back: bool,
    pub l2_writeback_to_memory: bool,
}

/// Everything the timing model needs to know about one completed access.
#[derive(Debug, Clone, Default)]
pub struct Transaction {
    pub serviced_by: Option<ServiceLevel>,
    pub port_ops: Vec<PortOp>,
    pub evictions: Vec<EvictionOutcome>,
    pub hit_on_prefetched: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
}

impl CacheStats {
    pub fn accesses(&self) -> u64 {
        self.hits + self.misses
    }

    pub fn miss_rate(&self) -> f64 {
        if self.accesses() == 0 {
            0.0
        } else {
            self.misses as f64 / self.accesses() as f64
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HierarchyStats {
    pub l1i: CacheStats,
    pub l1d: CacheStats,
    pub l2: CacheStats,
    /// Victims installed into L2, dirty and clean alike.
    pub copybacks_l1i: u64,
    pub copybacks_l1d: u64,
    pub clean_evictions_l1i: u64,
    pub clean_evictions_l1d: u64,
    pub dirty_evictions_l1i: u64,
    pub dirty_evictions_l1d: u64,
    pub l2_writebacks_to_memory: u64,
}

/// One set-associative cache level.
pub struct CacheLevel {
    pub geom: CacheGeometry,
    pub policy: PolicyKind,
    sets: Vec<Vec<LineMeta>>,
    set_state: Vec<SetPolicyState>,
    tick: u64,
    rd_miss_scope: RdMissScope,
}

impl CacheLevel {
    pub fn new(geom: CacheGeometry, policy: PolicyKind, rd_miss_scope: RdMissScope) -> Self {
        let num_sets = geom.num_sets() as usize;
        let ways = geom.associativity as usize;
        Self {
            geom,
            policy,
            sets: vec![vec![LineMeta::invalid(); ways]; num_sets],
            set_state: vec![SetPolicyState::new(); num_sets],
            tick: 0,
            rd_miss_scope,
        }
    }

    fn next_tick(&mut self) -> u64 {
        self.tick += 1;
        self.tick
    }

    pub fn lookup(&self, addr: Address) -> Option<(usize, usize)> {
        let (tag, set) = self.geom.decompose(addr);
        let set = set as usize;
        self.sets[set]
            .iter()
            .position(|l| l.valid && l.tag == tag)
            .map(|way| (set, way))
    }

    pub fn line(&self, set: usize, way: usize) -> &LineMeta {
        &self.sets[set][way]
    }

    pub fn line_mut(&mut self, set: usize, way: usize) -> &mut LineMeta {
        &mut self.sets[set][way]
    }

    pub fn set_lines(&self, set: usize) -> &[LineMeta] {
        &self.sets[set]
    }

    fn on_hit(&mut self, set: usize, way: usize) {
        let tick = self.next_tick();
        match self.policy {
            PolicyKind::Lru => policy::lru_on_hit(&mut self.sets[set], way, tick),
            PolicyKind::Cbp => {
                policy::cbp_on_hit(&mut self.sets[set], &mut self.set_state[set], way, tick)
            }
        }
    }

    fn on_miss(&mut self, set: usize) {
        if self.policy != PolicyKind::Cbp {
            return;
        }
        match self.rd_miss_scope {
            RdMissScope::PerSet => policy::cbp_on_miss(&mut self.sets[set]),
            RdMissScope::Global => {
                for s in self.sets.iter_mut() {
                    policy::cbp_on_miss(s);
                }
            }
        }
    }

    /// Victim way plus its priority under CBP (None under LRU).
    fn choose_victim(&self, set: usize) -> (usize, Option<u8>) {
        match self.policy {
            PolicyKind::Lru => (policy::lru_select_victim(&self.sets[set]), None),
            PolicyKind::Cbp => {
                let way = policy::cbp_select_victim(&self.sets[set], &self.set_state[set]);
                let p = policy::cbp_priority(&self.sets[set][way], self.set_state[set].rd_avg);
                (way, Some(p))
            }
        }
    }

    fn invalid_way(&self, set: usize) -> Option<usize> {
        self.sets[set].iter().position(|l| !l.valid)
    }

    fn install(&mut self, tag: u64, set: usize, way: usize, dirty: bool, prefetched: bool) {
        let tick = self.next_tick();
        self.sets[set][way] = LineMeta::filled(tag, dirty, prefetched, tick);
    }

    /// Refresh the recency of a resident line (standalone-cache use).
    pub fn touch(&mut self, set: usize, way: usize) {
        let tick = self.next_tick();
        policy::lru_on_hit(&mut self.sets[set], way, tick);
    }

    /// Fill a block, evicting the LRU line when the set is full
    /// (standalone-cache use; no lower level involved).
    pub fn fill_lru(&mut self, addr: Address) {
        let (tag, set) = self.geom.decompose(addr);
        let set = set as usize;
        let way = self.invalid_way(set).unwrap_or_else(|| {
            let way = policy::lru_select_victim(&self.sets[set]);
            self.sets[set][way] = LineMeta::invalid();
            way
        });
        self.install(tag, set, way, false, false);
    }

    /// All valid block addresses held by this cache.
    pub fn valid_blocks(&self) -> HashSet<u64> {
        let mut blocks = HashSet::new();
        for (set, lines) in self.sets.iter().enumerate() {
            for line in lines.iter().filter(|l| l.valid) {
                blocks.insert(self.geom.recompose(line.tag, set as u64));
            }
        }
        blocks
    }
}

/// Predicate consulted for clean L1 victims instead of the static policy;
/// used by the future-knowledge baseline. Receives the victim block address.
pub type CleanCopybackHook = Box<dyn FnMut(u64) -> bool>;

pub struct Hierarchy {
    pub l1i: CacheLevel,
    pub l1d: CacheLevel,
    pub l2: CacheLevel,
    inclusion: InclusionMode,
    copyback: CopybackPolicy,
    exclusive_fill_l2: bool,
    clean_copyback_hook: Option<CleanCopybackHook>,
    pub stats: HierarchyStats,
}

impl Hierarchy {
    pub fn new(
        l1i_geom: CacheGeometry,
        l1d_geom: CacheGeometry,
        l2_geom: CacheGeometry,
        l1i_policy: PolicyKind,
        l1d_policy: PolicyKind,
        inclusion: InclusionMode,
        copyback: CopybackPolicy,
        rd_miss_scope: RdMissScope,
        exclusive_fill_l2: bool,
    ) -> Self {
        Self {
            l1i: CacheLevel::new(l1i_geom, l1i_policy, rd_miss_scope),
            l1d: CacheLevel::new(l1d_geom, l1d_policy, rd_miss_scope),
            l2: CacheLevel::new(l2_geom, PolicyKind::Lru, rd_miss_scope),
            inclusion,
            copyback,
            exclusive_fill_l2,
            clean_copyback_hook: None,
            stats: HierarchyStats::default(),
        }
    }

    pub fn set_copyback_policy(&mut self, policy: CopybackPolicy) {
        self.copyback = policy;
    }

    pub fn copyback_policy(&self) -> CopybackPolicy {
        self.copyback
    }

    pub fn inclusion(&self) -> InclusionMode {
        self.inclusion
    }

    /// Overrides the clean-victim copy-back decision for both L1 caches.
    pub fn set_clean_copyback_hook(&mut self, hook: CleanCopybackHook) {
        self.clean_copyback_hook = Some(hook);
    }

    fn l1(&mut self, id: CacheId) -> &mut CacheLevel {
        match id {
            CacheId::L1I => &mut self.l1i,
            CacheId::L1D => &mut self.l1d,
            CacheId::L2 => unreachable!("l1() called with L2"),
        }
    }

    /// Process one demand access to completion.
    pub fn access(&mut self, kind: AccessKind, addr: Address) -> Transaction {
        let mut txn = Transaction::default();
        let cache_id = match kind {
            AccessKind::InstrFetch => CacheId::L1I,
            AccessKind::Load | AccessKind::Store => CacheId::L1D,
        };

        if let Some((set, way)) = self.l1(cache_id).lookup(addr) {
            let l1 = self.l1(cache_id);
            l1.on_hit(set, way);
            let line = l1.line_mut(set, way);
            if kind == AccessKind::Store {
                line.dirty = true;
            }
            if line.prefetched {
                // The prefetch proved useful; stop penalizing the line.
                line.prefetched = false;
                txn.hit_on_prefetched = true;
            }
            match cache_id {
                CacheId::L1I => self.stats.l1i.hits += 1,
                _ => self.stats.l1d.hits += 1,
            }
            txn.serviced_by = Some(ServiceLevel::L1);
            return txn;
        }

        // L1 miss.
        match cache_id {
            CacheId::L1I => self.stats.l1i.misses += 1,
            _ => self.stats.l1d.misses += 1,
        }
        {
            let (_, set) = self.l1(cache_id).geom.decompose(addr);
            self.l1(cache_id).on_miss(set as usize);
        }

        let (dirty_from_l2, serviced) = self.fetch_through_l2(addr, true, &mut txn);
        self.fill_l1(cache_id, addr, dirty_from_l2, false, &mut txn);
        if kind == AccessKind::Store {
            let (set, way) = self.l1(cache_id).lookup(addr).expect("just filled");
            self.l1(cache_id).line_mut(set, way).dirty = true;
        }
        txn.serviced_by = Some(serviced);
        txn
    }

    /// Fill a prefetched block into the configured L1 cache. Dropped when
    /// already resident there. Never stalls the core; evictions it triggers
    /// still occupy the L2 port. Returns the transaction when a fill happened.
    pub fn prefetch_fill(&mut self, addr: Address) -> Option<Transaction> {
        if self.l1d.lookup(addr).is_some() {
            return None;
        }
        let mut txn = Transaction::default();
        let (dirty_from_l2, serviced) = self.fetch_through_l2(addr, false, &mut txn);
        // Prefetch port traffic is off the demand path entirely.
        txn.port_ops.retain(|op| *op == PortOp::Write);
        self.fill_l1(CacheId::L1D, addr, dirty_from_l2, true, &mut txn);
        txn.serviced_by = Some(serviced);
        Some(txn)
    }

    /// Fill a prefetched block straight into L2 (alternate fill level).
    /// Dropped when the block is already resident in L1D or L2.
    pub fn prefetch_fill_to_l2(&mut self, addr: Address) -> Option<Transaction> {
        if self.l1d.lookup(addr).is_some()
            || self.l1i.lookup(addr).is_some()
            || self.l2.lookup(addr).is_some()
        {
            return None;
        }
        let mut txn = Transaction::default();
        self.insert_into_l2(self.l2.geom.block_addr(addr), false, &mut txn);
        txn.serviced_by = Some(ServiceLevel::Memory);
        Some(txn)
    }

    /// Probe L2 (and memory behind it). Returns the dirty bit the block
    /// carries into L1 and the servicing level.
    fn fetch_through_l2(
        &mut self,
        addr: Address,
        demand: bool,
        txn: &mut Transaction,
    ) -> (bool, ServiceLevel) {
        if let Some((set, way)) = self.l2.lookup(addr) {
            if demand {
                self.stats.l2.hits += 1;
                txn.port_ops.push(PortOp::Read);
            }
            match self.inclusion {
                InclusionMode::Exclusive => {
                    // Block moves up; the L2 copy is gone before the L1
                    // fill below completes.
                    let line = self.l2.line_mut(set, way);
                    let dirty = line.dirty;
                    *line = LineMeta::invalid();
                    (dirty, ServiceLevel::L2)
                }
                InclusionMode::NonInclusive => {
                    self.l2.on_hit(set, way);
                    // L2 keeps the (possibly dirty) copy; the L1 copy
                    // starts clean.
                    (false, ServiceLevel::L2)
                }
            }
        } else {
            if demand {
                self.stats.l2.misses += 1;
                // Tag probe on the miss path still occupies the port.
                txn.port_ops.push(PortOp::Read);
            }
            self.l2.on_miss({
                let (_, set) = self.l2.geom.decompose(addr);
                set as usize
            });
            let fill_l2 = match self.inclusion {
                InclusionMode::Exclusive => self.exclusive_fill_l2,
                InclusionMode::NonInclusive => true,
            };
            if fill_l2 {
                self.insert_into_l2(self.l2.geom.block_addr(addr), false, txn);
            }
            (false, ServiceLevel::Memory)
        }
    }

    /// Allocate a way in the given L1 (evicting if the set is full) and
    /// install the block.
    fn fill_l1(
        &mut self,
        cache_id: CacheId,
        addr: Address,
        mut dirty: bool,
        prefetched: bool,
        txn: &mut Transaction,
    ) {
        // A block lives in at most one L1: when I and D streams touch the
        // same block the sibling copy migrates (dirty bit carried), keeping
        // L1I ∪ L1D free of duplicates and the exclusive invariant intact.
        let sibling = match cache_id {
            CacheId::L1I => &mut self.l1d,
            _ => &mut self.l1i,
        };
        if let Some((s, w)) = sibling.lookup(addr) {
            dirty |= sibling.line(s, w).dirty;
            *sibling.line_mut(s, w) = LineMeta::invalid();
        }
        let (tag, set) = self.l1(cache_id).geom.decompose(addr);
        let set = set as usize;
        let way = match self.l1(cache_id).invalid_way(set) {
            Some(way) => way,
            None => {
                let outcome = self.evict_from_l1(cache_id, set, txn);
                txn.evictions.push(outcome);
                self.l1(cache_id)
                    .invalid_way(set)
                    .expect("eviction freed a way")
            }
        };
        self.l1(cache_id).install(tag, set, way, dirty, prefetched);
    }

    /// Evict one line from a full L1 set. The victim is copied back to L2
    /// before its L1 slot is invalidated.
    fn evict_from_l1(
        &mut self,
        cache_id: CacheId,
        set: usize,
        txn: &mut Transaction,
    ) -> EvictionOutcome {
        let (way, priority) = self.l1(cache_id).choose_victim(set);
        let victim = *self.l1(cache_id).line(set, way);
        let victim_block = self.l1(cache_id).geom.recompose(victim.tag, set as u64);

        let copy_back = victim.dirty || self.clean_copyback_granted(cache_id, victim_block, &victim, priority);

        let mut l2_writeback = false;
        if copy_back {
            l2_writeback = self.insert_into_l2(victim_block, victim.dirty, txn);
            match cache_id {
                CacheId::L1I => self.stats.copybacks_l1i += 1,
                _ => self.stats.copybacks_l1d += 1,
            }
        }
        match (cache_id, victim.dirty) {
            (CacheId::L1I, false) => self.stats.clean_evictions_l1i += 1,
            (CacheId::L1I, true) => self.stats.dirty_evictions_l1i += 1,
            (_, false) => self.stats.clean_evictions_l1d += 1,
            (_, true) => self.stats.dirty_evictions_l1d += 1,
        }

        let l1 = self.l1(cache_id);
        *l1.line_mut(set, way) = LineMeta::invalid();
        // A replacement happened in this set: hit counters start over.
        if l1.policy == PolicyKind::Cbp {
            policy::reset_hit_counters(&mut l1.sets[set]);
        }

        EvictionOutcome {
            cache: cache_id,
            victim_block,
            was_dirty: victim.dirty,
            copied_back: copy_back,
            l2_writeback_to_memory: l2_writeback,
        }
    }

    fn clean_copyback_granted(
        &mut self,
        cache_id: CacheId,
        victim_block: u64,
        victim: &LineMeta,
        priority: Option<u8>,
    ) -> bool {
        if let Some(hook) = self.clean_copyback_hook.as_mut() {
            return hook(victim_block);
        }
        match self.copyback {
            CopybackPolicy::All => true,
            CopybackPolicy::None => false,
            CopybackPolicy::ICacheOnly => cache_id == CacheId::L1I,
            CopybackPolicy::DCacheOnly => cache_id == CacheId::L1D,
            CopybackPolicy::Selective => match priority {
                Some(p) => policy::cbp_copyback_decision(victim, p),
                // LRU caches carry no predictor; fall back to copy-all.
                None => true,
            },
        }
    }

    /// Install a block into L2, evicting an L2 victim when the set is full.
    /// Returns whether a dirty L2 victim went to memory.
    fn insert_into_l2(&mut self, block: u64, dirty: bool, txn: &mut Transaction) -> bool {
        let addr = block * self.l2.geom.block_bytes;
        txn.port_ops.push(PortOp::Write);
        if let Some((set, way)) = self.l2.lookup(addr) {
            // Non-inclusive refresh of an already resident block.
            let tick = self.l2.next_tick();
            let line = self.l2.line_mut(set, way);
            line.dirty |= dirty;
            line.recency = tick;
            return false;
        }
        let (tag, set) = self.l2.geom.decompose(addr);
        let set = set as usize;
        let mut writeback = false;
        let way = match self.l2.invalid_way(set) {
            Some(way) => way,
            None => {
                let (way, _) = self.l2.choose_victim(set);
                let victim = *self.l2.line(set, way);
                let victim_block = self.l2.geom.recompose(victim.tag, set as u64);
                if victim.dirty {
                    self.stats.l2_writebacks_to_memory += 1;
                    writeback = true;
                }
                txn.evictions.push(EvictionOutcome {
                    cache: CacheId::L2,
                    victim_block,
                    was_dirty: victim.dirty,
                    copied_back: false,
                    l2_writeback_to_memory: victim.dirty,
                });
                *self.l2.line_mut(set, way) = LineMeta::invalid();
                way
            }
        };
        self.l2.install(tag, set, way, dirty, false);
        writeback
    }

    /// In exclusive mode: no block may be valid in an L1 and in L2 at once.
    pub fn check_exclusiveness(&self) -> bool {
        for l1 in [&self.l1i, &self.l1d] {
            for (set, lines) in l1.sets.iter().enumerate() {
                for line in lines.iter().filter(|l| l.valid) {
                    let block = l1.geom.recompose(line.tag, set as u64);
                    if self.l2.lookup(block * l1.geom.block_bytes).is_some() {
                        return false;
                    }
                }
            }
        }
        true
    }
}

//! Replacement policies: classic LRU and the reuse-distance copy-back
//! predictor (CBP).
//!
//! CBP keeps a 4-bit private reuse distance `rd` per line and a per-set
//! average `RD` recomputed every eight hits by a shift-to-right. On a
//! replacement request every valid line is scored 0..=10 from its prefetch
//! bit, hit counter, and rd band relative to RD; the highest score is the
//! victim, and a clean victim is copied back to the next level only when its
//! score is below the threshold.

use crate::core::{CacheGeometry, LineMeta};

/// Clean victims with priority at or above this are not copied back.
pub const CLEAN_COPYBACK_THRESHOLD: u8 = 9;

/// Number of hits folded into one RD update (average done as `>> 3`).
pub const RD_UPDATE_INTERVAL: u8 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Lru,
    Cbp,
}

/// Per-set CBP state: the shared average RD (4 bits), the running sum of the
/// last hits' rd values (7 bits), and the hit counter toward the next
/// average (3 bits).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SetPolicyState {
    pub rd_avg: u8,
    pub rd_sum: u16,
    pub rd_counter: u8,
}

impl SetPolicyState {
    pub fn new() -> Self {
        Self {
            rd_avg: 0,
            rd_sum: 0,
            rd_counter: 0,
        }
    }
}

impl Default for SetPolicyState {
    fn default() -> Self {
        Self::new()
    }
}

/// Miss path of the rd/RD calculation: every valid line in the set ages by
/// one.
pub fn cbp_on_miss(set_lines: &mut [LineMeta]) {
    for line in set_lines.iter_mut().filter(|l| l.valid) {
        line.rd.inc();
    }
}

/// Hit path of the rd/RD calculation. Folds the hit line's rd into the
/// running sum, resets it, and refreshes RD every eight hits. Also bumps the
/// line's hit counter and recency.
pub fn cbp_on_hit(
    set_lines: &mut [LineMeta],
    state: &mut SetPolicyState,
    hit_way: usize,
    recency: u64,
) {
    let line = &mut set_lines[hit_way];
    assert!(line.valid, "cbp_on_hit on invalid way {hit_way}");
    state.rd_sum += u16::from(line.rd.get());
    line.rd.reset();
    state.rd_counter += 1;
    if state.rd_counter == RD_UPDATE_INTERVAL {
        state.rd_avg = (state.rd_sum >> 3) as u8;
        state.rd_sum = 0;
        state.rd_counter = 0;
    }
    line.hit_count.inc();
    line.recency = recency;
}

/// Priority of one valid line: +1 if prefetched, +1 if hit at most once
/// since the last replacement, +4 for rd within [2·RD, 3·RD], +8 for rd
/// beyond 3·RD. Band products are computed in widened arithmetic.
pub fn cbp_priority(line: &LineMeta, rd_avg: u8) -> u8 {
    assert!(line.valid, "cbp_priority on invalid line");
    let mut p = 0u8;
    if line.prefetched {
        p += 1;
    }
    if line.hit_count.get() <= 1 {
        p += 1;
    }
    let rd = u16::from(line.rd.get());
    let rd_avg = u16::from(rd_avg);
    if 2 * rd_avg <= rd && rd <= 3 * rd_avg {
        p += 4;
    } else if rd > 3 * rd_avg {
        p += 8;
    }
    p
}

/// Victim selection: the valid line with the highest priority; ties go to
/// the least recent line, then the lowest way index.
pub fn cbp_select_victim(set_lines: &[LineMeta], state: &SetPolicyState) -> usize {
    let mut best: Option<(usize, u8, u64)> = None;
    for (way, line) in set_lines.iter().enumerate() {
        if !line.valid {
            continue;
        }
        let p = cbp_priority(line, state.rd_avg);
        let better = match best {
            None => true,
            Some((_, bp, brec)) => p > bp || (p == bp && line.recency < brec),
        };
        if better {
            best = Some((way, p, line.recency));
        }
    }
    best.expect("cbp_select_victim on a set with no valid line").0
}

/// A victim leaves toward the lower level iff it is dirty or its priority is
/// below the clean-line threshold.
pub fn cbp_copyback_decision(victim: &LineMeta, priority: u8) -> bool {
    assert!(victim.valid, "cbp_copyback_decision on invalid line");
    victim.dirty || priority < CLEAN_COPYBACK_THRESHOLD
}

/// All lines in a set drop their hit counters when a replacement occurs in
/// that set ("hits since the last replacement").
pub fn reset_hit_counters(set_lines: &mut [LineMeta]) {
    for line in set_lines.iter_mut().filter(|l| l.valid) {
        line.hit_count.reset();
    }
}

pub fn lru_on_hit(set_lines: &mut [LineMeta], hit_way: usize, recency: u64) {
    let line = &mut set_lines[hit_way];
    assert!(line.valid, "lru_on_hit on invalid way {hit_way}");
    line.recency = recency;
}

/// Victim is the valid line with the smallest recency rank.
pub fn lru_select_victim(set_lines: &[LineMeta]) -> usize {
    set_lines
        .iter()
        .enumerate()
        .filter(|(_, l)| l.valid)
        .min_by_key(|(_, l)| l.recency)
        .expect("lru_select_victim on a set with no valid line")
        .0
}

/// Extra state bits required by a policy beyond the baseline tag/valid/dirty
/// and LRU ordering: (bits per line, bits per set).
pub fn metadata_budget(_geom: &CacheGeometry, kind: PolicyKind) -> (u64, u64) {
    match kind {
        PolicyKind::Lru => (0, 0),
        // rd (4) + hit counter (2) + prefetched (1); RD (4) + RDsum (7) + RDcounter (3)
        PolicyKind::Cbp => (4 + 2 + 1, 4 + 7 + 3),
    }
}

//! Stride prefetcher feeding the L1 DCache.
//!
//! Keyed by address region (block address / 16) rather than PC, since the
//! traces carry no PC. Degree 1, distance 1: when a region shows the same
//! block delta twice in a row, the next block along the stride is fetched.

/// Blocks per region key.
const REGION_BLOCKS: u64 = 16;

#[derive(Debug, Clone, Copy)]
struct StrideEntry {
    region_key: u64,
    last_block: u64,
    stride: i64,
    confidence: u8,
}

pub struct StridePrefetcher {
    table: Vec<Option<StrideEntry>>,
    confidence_threshold: u8,
}

impl StridePrefetcher {
    pub fn new(table_entries: usize, confidence_threshold: u8) -> Self {
        let entries = if table_entries == 0 { 64 } else { table_entries };
        Self {
            table: vec![None; entries],
            confidence_threshold,
        }
    }

    /// Observe one demand DCache access (by block address) and maybe return
    /// a block to prefetch.
    pub fn observe(&mut self, block: u64) -> Option<u64> {
        let region = block / REGION_BLOCKS;
        let idx = (region as usize) % self.table.len();
        match &mut self.table[idx] {
            Some(entry) if entry.region_key == region => {
                let delta = block as i64 - entry.last_block as i64;
                if delta == entry.stride {
                    if entry.confidence < 3 {
                        entry.confidence += 1;
                    }
                } else {
                    entry.stride = delta;
                    entry.confidence = 1;
                }
                entry.last_block = block;
                if entry.confidence >= self.confidence_threshold && entry.stride != 0 {
                    block.checked_add_signed(entry.stride)
                } else {
                    None
                }
            }
            slot => {
                *slot = Some(StrideEntry {
                    region_key: region,
                    last_block: block,
                    stride: 0,
                    confidence: 0,
                });
                None
            }
        }
    }
}

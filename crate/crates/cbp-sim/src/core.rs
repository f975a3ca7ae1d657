//! Address arithmetic, saturating counters, and the per-line metadata shared
//! by every cache level.

use thiserror::Error;

/// A 64-bit byte address. Any value is legal; alignment is handled by the
/// geometry when decomposing into (tag, set).
pub type Address = u64;

pub const DEFAULT_BLOCK_BYTES: u64 = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GeometryError {
    #[error("{name} must be a power of two, got {value}")]
    NotPowerOfTwo { name: &'static str, value: u64 },
    #[error("capacity {capacity} must hold at least one set of {way_bytes} bytes")]
    TooSmall { capacity: u64, way_bytes: u64 },
}

/// Geometry of one set-associative cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheGeometry {
    pub capacity_bytes: u64,
    pub associativity: u64,
    pub block_bytes: u64,
}

impl CacheGeometry {
    pub fn new(
        capacity_bytes: u64,
        associativity: u64,
        block_bytes: u64,
    ) -> Result<Self, GeometryError> {
        for (name, value) in [
            ("capacity_bytes", capacity_bytes),
            ("associativity", associativity),
            ("block_bytes", block_bytes),
        ] {
            if value == 0 || !value.is_power_of_two() {
                return Err(GeometryError::NotPowerOfTwo { name, value });
            }
        }
        let way_bytes = associativity * block_bytes;
        if capacity_bytes < way_bytes {
            return Err(GeometryError::TooSmall {
                capacity: capacity_bytes,
                way_bytes,
            });
        }
        Ok(Self {
            capacity_bytes,
            associativity,
            block_bytes,
        })
    }

    pub fn num_sets(&self) -> u64 {
        self.capacity_bytes / (self.associativity * self.block_bytes)
    }

    pub fn block_addr(&self, addr: Address) -> u64 {
        addr / self.block_bytes
    }

    /// Split a byte address into (tag, set index).
    pub fn decompose(&self, addr: Address) -> (u64, u64) {
        let block = self.block_addr(addr);
        let sets = self.num_sets();
        (block / sets, block % sets)
    }

    /// Inverse of `decompose` at block granularity.
    pub fn recompose(&self, tag: u64, set_index: u64) -> u64 {
        tag * self.num_sets() + set_index
    }
}

/// A saturating counter clamped to `0..=max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SaturatingCounter {
    value: u8,
    max: u8,
}

impl SaturatingCounter {
    pub fn new(max: u8) -> Self {
        Self { value: 0, max }
    }

    pub fn get(&self) -> u8 {
        self.value
    }

    pub fn max(&self) -> u8 {
        self.max
    }

    pub fn inc(&mut self) {
        if self.value < self.max {
            self.value += 1;
        }
    }

    pub fn reset(&mut self) {
        self.value = 0;
    }
}

/// Width of the per-line reuse-distance counter.
pub const RD_BITS: u8 = 4;
pub const RD_MAX: u8 = (1 << RD_BITS) - 1;
/// Width of the per-line hit counter.
pub const HIT_COUNT_BITS: u8 = 2;
pub const HIT_COUNT_MAX: u8 = (1 << HIT_COUNT_BITS) - 1;

/// Per-line state. Invalid lines are excluded from all policy computations
/// and are never dirty.
#[derive(Debug, Clone, Copy)]
pub struct LineMeta {
    pub tag: u64,
    pub valid: bool,
    pub dirty: bool,
    pub prefetched: bool,
    pub rd: SaturatingCounter,
    pub hit_count: SaturatingCounter,
    /// Monotone rank stamped on each touch; larger means more recent.
    pub recency: u64,
}

impl LineMeta {
    pub fn invalid() -> Self {
        Self {
            tag: 0,
            valid: false,
            dirty: false,
            prefetched: false,
            rd: SaturatingCounter::new(RD_MAX),
            hit_count: SaturatingCounter::new(HIT_COUNT_MAX),
            recency: 0,
        }
    }

    /// Fresh fill: all predictor metadata cleared.
    pub fn filled(tag: u64, dirty: bool, prefetched: bool, recency: u64) -> Self {
        Self {
            tag,
            valid: true,
            dirty,
            prefetched,
            rd: SaturatingCounter::new(RD_MAX),
            hit_count: SaturatingCounter::new(HIT_COUNT_MAX),
            recency,
        }
    }
}

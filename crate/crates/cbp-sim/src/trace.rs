//! Trace ingestion and generation.
//!
//! Native format, one record per line:
//!
//! ```text
//! <icount_delta:decimal> <kind:I|R|W> <addr:0x-hex>
//! ```
//!
//! with single spaces, `#` comment lines, and blank lines skipped. A
//! converter from Valgrind Lackey style `I/L/S/M` lines is provided so real
//! traces can be replayed.

use std::io::BufRead;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::core::{Address, DEFAULT_BLOCK_BYTES};
use crate::hierarchy::AccessKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccessRecord {
    pub icount_delta: u64,
    pub kind: AccessKind,
    pub addr: Address,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceError {
    #[error("line {line}, column {col}: {msg}")]
    Malformed {
        line: usize,
        col: usize,
        msg: String,
    },
    #[error("I/O error reading trace: {0}")]
    Io(String),
}

fn malformed(line: usize, col: usize, msg: impl Into<String>) -> TraceError {
    TraceError::Malformed {
        line,
        col,
        msg: msg.into(),
    }
}

/// Parse one native-format line. `line_no` is 1-based.
pub fn parse_line(text: &str, line_no: usize) -> Result<AccessRecord, TraceError> {
    let mut parts = text.split(' ');
    let delta_str = parts.next().unwrap_or("");
    let icount_delta = delta_str
        .parse::<u64>()
        .map_err(|_| malformed(line_no, 1, format!("bad instruction count {delta_str:?}")))?;
    let kind_col = delta_str.len() + 2;
    let kind_str = parts
        .next()
        .ok_or_else(|| malformed(line_no, kind_col, "missing access kind"))?;
    let kind = match kind_str {
        "I" => AccessKind::InstrFetch,
        "R" => AccessKind::Load,
        "W" => AccessKind::Store,
        other => {
            return Err(malformed(
                line_no,
                kind_col,
                format!("unknown kind {other:?} (expected I, R, or W)"),
            ))
        }
    };
    let addr_col = kind_col + kind_str.len() + 1;
    let addr_str = parts
        .next()
        .ok_or_else(|| malformed(line_no, addr_col, "missing address"))?;
    let hex = addr_str
        .strip_prefix("0x")
        .ok_or_else(|| malformed(line_no, addr_col, format!("address {addr_str:?} must start with 0x")))?;
    let addr = u64::from_str_radix(hex, 16)
        .map_err(|_| malformed(line_no, addr_col, format!("non-hex address {addr_str:?}")))?;
    if parts.next().is_some() {
        return Err(malformed(line_no, addr_col + addr_str.len() + 1, "trailing fields"));
    }
    Ok(AccessRecord {
        icount_delta,
        kind,
        addr,
    })
}

/// Streaming parser over a reader; constant memory in trace length.
pub fn parse<R: BufRead>(reader: R) -> impl Iterator<Item = Result<AccessRecord, TraceError>> {
    reader
        .lines()
        .enumerate()
        .filter_map(|(i, line)| match line {
            Err(e) => Some(Err(TraceError::Io(e.to_string()))),
            Ok(text) => {
                let trimmed = text.trim_end_matches(['\r', '\n']);
                if trimmed.is_empty() || trimmed.starts_with('#') {
                    None
                } else {
                    Some(parse_line(trimmed, i + 1))
                }
            }
        })
}

/// Canonical renderer; `parse(render(records)) == records`.
pub fn render(record: &AccessRecord) -> String {
    let kind = match record.kind {
        AccessKind::InstrFetch => "I",
        AccessKind::Load => "R",
        AccessKind::Store => "W",
    };
    format!("{} {} {:#x}", record.icount_delta, kind, record.addr)
}

/// Convert one Lackey-style line (`I addr,size`, `L addr,size`, `S addr,size`,
/// `M addr,size`) to native records. `M` (modify) expands to a load then a
/// store. Returns an empty vec for ignorable lines (e.g. `==` banners).
pub fn convert_lackey_line(text: &str, line_no: usize) -> Result<Vec<AccessRecord>, TraceError> {
    let trimmed = text.trim_start();
    if trimmed.is_empty() || trimmed.starts_with("==") {
        return Ok(Vec::new());
    }
    let mut parts = trimmed.split_whitespace();
    let op = parts.next().unwrap();
    let rest = parts
        .next()
        .ok_or_else(|| malformed(line_no, 1, "missing address field"))?;
    let addr_str = rest.split(',').next().unwrap_or("");
    let addr = u64::from_str_radix(addr_str.trim_start_matches("0x"), 16)
        .map_err(|_| malformed(line_no, 1, format!("non-hex address {addr_str:?}")))?;
    let rec = |icount, kind| AccessRecord {
        icount_delta: icount,
        kind,
        addr,
    };
    match op {
        // Instruction fetches advance the instruction count; data accesses
        // belong to the preceding instruction.
        "I" => Ok(vec![rec(1, AccessKind::InstrFetch)]),
        "L" => Ok(vec![rec(0, AccessKind::Load)]),
        "S" => Ok(vec![rec(0, AccessKind::Store)]),
        "M" => Ok(vec![rec(0, AccessKind::Load), rec(0, AccessKind::Store)]),
        other => Err(malformed(
            line_no,
            1,
            format!("unknown Lackey op {other:?}"),
        )),
    }
}

/// Synthetic trace model with controllable reuse structure: a dead slice of
/// the block population touched exactly once, a hot slice soaking up most of
/// the remaining accesses, and configurable instruction/write mixes.
#[derive(Debug, Clone, Copy)]
pub struct GeneratorModel {
    pub num_blocks: u64,
    pub hot_fraction: f64,
    pub hot_weight: f64,
    pub dead_fraction: f64,
    pub write_ratio: f64,
    pub instr_ratio: f64,
    pub block_bytes: u64,
    pub seed: u64,
}

impl Default for GeneratorModel {
    fn default() -> Self {
        Self {
            num_blocks: 10_000,
            hot_fraction: 0.1,
            hot_weight: 0.5,
            dead_fraction: 0.0,
            write_ratio: 0.3,
            instr_ratio: 0.0,
            block_bytes: DEFAULT_BLOCK_BYTES,
            seed: 0,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GeneratorError {
    #[error("{name} must be within [0, 1], got {value}")]
    FractionOutOfRange { name: &'static str, value: String },
    #[error("num_blocks must be positive")]
    NoBlocks,
}

impl GeneratorModel {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        if self.num_blocks == 0 {
            return Err(GeneratorError::NoBlocks);
        }
        for (name, value) in [
            ("hot_fraction", self.hot_fraction),
            ("hot_weight", self.hot_weight),
            ("dead_fraction", self.dead_fraction),
            ("write_ratio", self.write_ratio),
            ("instr_ratio", self.instr_ratio),
        ] {
            if !(0.0..=1.0).contains(&value) || value.is_nan() {
                return Err(GeneratorError::FractionOutOfRange {
                    name,
                    value: format!("{value}"),
                });
            }
        }
        Ok(())
    }
}

/// Deterministic per seed. Dead blocks (the tail `dead_fraction` of the
/// block id space) each appear exactly once, at positions spread uniformly
/// over the stream; hot blocks receive `hot_weight` of the remaining
/// accesses.
pub fn generate(model: &GeneratorModel, length: u64) -> Result<Vec<AccessRecord>, GeneratorError> {
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    let length = length as usize;

    let num_dead = (((model.dead_fraction * model.num_blocks as f64).round() as u64)
        .min(model.num_blocks))
    .min(length as u64);
    let num_live = model.num_blocks - num_dead;
    let num_hot = (model.hot_fraction * num_live as f64).round() as u64;

    // Pick distinct positions for the single-touch dead blocks.
    let mut dead_positions = std::collections::HashSet::with_capacity(num_dead as usize);
    while (dead_positions.len() as u64) < num_dead {
        dead_positions.insert(rng.gen_range(0..length));
    }
    let mut dead_at = vec![u64::MAX; length];
    {
        let mut positions: Vec<usize> = dead_positions.into_iter().collect();
        positions.sort_unstable();
        for (i, pos) in positions.into_iter().enumerate() {
            dead_at[pos] = num_live + i as u64;
        }
    }

    let mut out = Vec::with_capacity(length);
    for pos in 0..length {
        let block = if dead_at[pos] != u64::MAX {
            dead_at[pos]
        } else if num_live == 0 {
            // Degenerate all-dead population: reuse the dead id space.
            rng.gen_range(0..model.num_blocks)
        } else if num_hot > 0 && num_hot < num_live {
            if rng.gen_bool(model.hot_weight) {
                rng.gen_range(0..num_hot)
            } else {
                rng.gen_range(num_hot..num_live)
            }
        } else {
            rng.gen_range(0..num_live)
        };
        let kind = if rng.gen_bool(model.instr_ratio) {
            AccessKind::InstrFetch
        } else if rng.gen_bool(model.write_ratio) {
            AccessKind::Store
        } else {
            AccessKind::Load
        };
        out.push(AccessRecord {
            icount_delta: 1,
            kind,
            addr: block * model.block_bytes,
        });
    }
    Ok(out)
}

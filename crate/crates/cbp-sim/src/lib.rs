//! Trace-driven simulator of a two-level exclusive/non-inclusive cache
//! hierarchy with a reuse-distance-based copy-back predictor (CBP) for
//! clean L1 victims, an STT-MRAM-style L2 write-port timing model, and
//! offline reuse-distance analyses.

pub mod config;
pub mod core;
pub mod engine;
pub mod hierarchy;
pub mod oracle;
pub mod policy;
pub mod prefetch;
pub mod trace;

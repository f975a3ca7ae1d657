//! Timing model and statistics: drives the hierarchy from a trace, charges
//! demand stalls, models the single L2 write port with STT-MRAM's asymmetric
//! read/write latencies, and produces the run report.
//!
//! The core is in-order and blocking with a base CPI of 1: cycles are the
//! instruction count plus per-access demand stalls. Copy-backs and
//! write-backs do not stall the core directly but occupy the L2 port, so
//! later demand L2 reads wait out the residual occupancy.

use thiserror::Error;

use crate::core::CacheGeometry;
use crate::hierarchy::{
    AccessKind, CopybackPolicy, Hierarchy, InclusionMode, PortOp, RdMissScope, ServiceLevel,
    Transaction,
};
use crate::policy::PolicyKind;
use crate::prefetch::StridePrefetcher;
use crate::trace::{AccessRecord, TraceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatencyConfig {
    pub l1_hit_cycles: u64,
    pub l2_read_cycles: u64,
    pub l2_write_cycles: u64,
    pub mem_cycles: u64,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        Self {
            l1_hit_cycles: 1,
            l2_read_cycles: 10,
            l2_write_cycles: 40,
            mem_cycles: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrefetcherKind {
    None,
    Stride,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrefetchFillLevel {
    L1D,
    L2,
}

/// Fully resolved simulation configuration.
#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    pub l1i: CacheGeometry,
    pub l1d: CacheGeometry,
    pub l2: CacheGeometry,
    pub l1i_policy: PolicyKind,
    pub l1d_policy: PolicyKind,
    pub inclusion: InclusionMode,
    pub copyback: CopybackPolicy,
    pub rd_miss_scope: RdMissScope,
    pub exclusive_fill_l2: bool,
    pub latency: LatencyConfig,
    pub prefetcher: PrefetcherKind,
    pub prefetch_table_entries: usize,
    pub prefetch_confidence_threshold: u8,
    pub prefetch_fill_level: PrefetchFillLevel,
    pub seed: u64,
}

impl Default for SimConfig {
    /// Table-equivalent defaults: 32KB/8-way split L1 (DCache under CBP),
    /// 1MB/16-way LRU L2 at 10/40 read/write cycles, exclusive, selective
    /// copy-back, stride prefetcher.
    fn default() -> Self {
        Self {
            l1i: CacheGeometry::new(32 * 1024, 8, 64).unwrap(),
            l1d: CacheGeometry::new(32 * 1024, 8, 64).unwrap(),
            l2: CacheGeometry::new(1024 * 1024, 16, 64).unwrap(),
            l1i_policy: PolicyKind::Lru,
            l1d_policy: PolicyKind::Cbp,
            inclusion: InclusionMode::Exclusive,
            copyback: CopybackPolicy::Selective,
            rd_miss_scope: RdMissScope::PerSet,
            exclusive_fill_l2: false,
            latency: LatencyConfig::default(),
            prefetcher: PrefetcherKind::Stride,
            prefetch_table_entries: 64,
            prefetch_confidence_threshold: 2,
            prefetch_fill_level: PrefetchFillLevel::L1D,
            seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("trace error: {0}")]
    Trace(#[from] TraceError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bb = self.l1i.block_bytes;
        if self.l1d.block_bytes != bb || self.l2.block_bytes != bb {
            return Err(EngineError::Config(
                "all cache levels must share one block size".into(),
            ));
        }
        if self.latency.l1_hit_cycles < 1
            || self.latency.l2_read_cycles < 1
            || self.latency.l2_write_cycles < 1
            || self.latency.mem_cycles < 1
        {
            return Err(EngineError::Config("latencies must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub accesses_l1i: u64,
    pub hits_l1i: u64,
    pub misses_l1i: u64,
    pub miss_rate_l1i: f64,
    pub accesses_l1d: u64,
    pub hits_l1d: u64,
    pub misses_l1d: u64,
    pub miss_rate_l1d: f64,
    pub accesses_l2: u64,
    pub hits_l2: u64,
    pub misses_l2: u64,
    pub miss_rate_l2: f64,
    pub copyback_count_l1i: u64,
    pub copyback_count_l1d: u64,
    pub l2_writebacks_to_memory: u64,
    pub prefetches_issued: u64,
    pub prefetches_useful: u64,
    pub total_instructions: u64,
    pub total_cycles: u64,
    pub ipc_proxy: f64,
    pub l2_port_stall_cycles: u64,
    pub empty_trace: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricValue {
    Int(u64),
    Float(f64),
}

impl MetricValue {
    fn render(&self) -> String {
        match self {
            MetricValue::Int(v) => v.to_string(),
            MetricValue::Float(v) => format_sig(*v),
        }
    }
}

/// Floating-point values go out with 6 significant digits.
pub fn format_sig(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v:.6}");
    }
    let exp = v.abs().log10().floor() as i32;
    let prec = (5 - exp).clamp(0, 17) as usize;
    format!("{v:.prec$}")
}

impl SimReport {
    pub fn metrics(&self) -> Vec<(&'static str, MetricValue)> {
        use MetricValue::{Float, Int};
        vec![
            ("accesses_l1i", Int(self.accesses_l1i)),
            ("hits_l1i", Int(self.hits_l1i)),
            ("misses_l1i", Int(self.misses_l1i)),
            ("miss_rate_l1i", Float(self.miss_rate_l1i)),
            ("accesses_l1d", Int(self.accesses_l1d)),
            ("hits_l1d", Int(self.hits_l1d)),
            ("misses_l1d", Int(self.misses_l1d)),
            ("miss_rate_l1d", Float(self.miss_rate_l1d)),
            ("accesses_l2", Int(self.accesses_l2)),
            ("hits_l2", Int(self.hits_l2)),
            ("misses_l2", Int(self.misses_l2)),
            ("miss_rate_l2", Float(self.miss_rate_l2)),
            ("copyback_count_l1i", Int(self.copyback_count_l1i)),
            ("copyback_count_l1d", Int(self.copyback_count_l1d)),
            ("l2_writebacks_to_memory", Int(self.l2_writebacks_to_memory)),
            ("prefetches_issued", Int(self.prefetches_issued)),
            ("prefetches_useful", Int(self.prefetches_useful)),
            ("total_instructions", Int(self.total_instructions)),
            ("total_cycles", Int(self.total_cycles)),
            ("ipc_proxy", Float(self.ipc_proxy)),
            ("l2_port_stall_cycles", Int(self.l2_port_stall_cycles)),
            ("empty_trace", Int(self.empty_trace as u64)),
        ]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        for (name, value) in self.metrics() {
            out.push_str(name);
            out.push(',');
            out.push_str(&value.render());
            out.push('\n');
        }
        out
    }
}

/// A stepwise simulation; `run` drives it over a whole trace.
pub struct Simulation {
    hierarchy: Hierarchy,
    prefetcher: Option<StridePrefetcher>,
    prefetch_fill_level: PrefetchFillLevel,
    latency: LatencyConfig,
    block_bytes: u64,
    now: u64,
    /// The single L2 port is free again at this cycle.
    busy_until: u64,
    instructions: u64,
    port_stall: u64,
    prefetches_issued: u64,
    prefetches_useful: u64,
}

impl Simulation {
    pub fn new(config: &SimConfig) -> Result<Self, EngineError> {
        config.validate()?;
        let hierarchy = Hierarchy::new(
            config.l1i,
            config.l1d,
            config.l2,
            config.l1i_policy,
            config.l1d_policy,
            config.inclusion,
            config.copyback,
            config.rd_miss_scope,
            config.exclusive_fill_l2,
        );
        let prefetcher = match config.prefetcher {
            PrefetcherKind::None => None,
            PrefetcherKind::Stride => Some(StridePrefetcher::new(
                config.prefetch_table_entries,
                config.prefetch_confidence_threshold,
            )),
        };
        Ok(Self {
            hierarchy,
            prefetcher,
            prefetch_fill_level: config.prefetch_fill_level,
            latency: config.latency,
            block_bytes: config.l1d.block_bytes,
            now: 0,
            busy_until: 0,
            instructions: 0,
            port_stall: 0,
            prefetches_issued: 0,
            prefetches_useful: 0,
        })
    }

    pub fn hierarchy_mut(&mut self) -> &mut Hierarchy {
        &mut self.hierarchy
    }

    pub fn hierarchy(&self) -> &Hierarchy {
        &self.hierarchy
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn step(&mut self, record: &AccessRecord) {
        self.now += record.icount_delta;
        self.instructions += record.icount_delta;

        let txn = self.hierarchy.access(record.kind, record.addr);
        if txn.hit_on_prefetched {
            self.prefetches_useful += 1;
        }
        let stall = self.charge_demand(&txn);
        self.now += stall;

        if matches!(record.kind, AccessKind::Load | AccessKind::Store) {
            if let Some(pf) = self.prefetcher.as_mut() {
                if let Some(target_block) = pf.observe(record.addr / self.block_bytes) {
                    let target_addr = target_block * self.block_bytes;
                    let fill = match self.prefetch_fill_level {
                        PrefetchFillLevel::L1D => self.hierarchy.prefetch_fill(target_addr),
                        PrefetchFillLevel::L2 => self.hierarchy.prefetch_fill_to_l2(target_addr),
                    };
                    if let Some(ptxn) = fill {
                        self.prefetches_issued += 1;
                        self.charge_background(&ptxn);
                    }
                }
            }
        }
    }

    /// Demand stall for one transaction, advancing the port clock. Reads
    /// wait for the port and stall the core; writes only occupy it.
    fn charge_demand(&mut self, txn: &Transaction) -> u64 {
        let mut t = self.now + self.latency.l1_hit_cycles;
        for _ in txn.port_ops.iter().filter(|op| **op == PortOp::Read) {
            let start = t.max(self.busy_until);
            self.port_stall += start - t;
            t = start + self.latency.l2_read_cycles;
            self.busy_until = start + self.latency.l2_read_cycles;
        }
        if txn.serviced_by == Some(ServiceLevel::Memory) {
            t += self.latency.mem_cycles;
        }
        let done = t;
        for _ in txn.port_ops.iter().filter(|op| **op == PortOp::Write) {
            self.busy_until = self.busy_until.max(done) + self.latency.l2_write_cycles;
        }
        done - self.now
    }

    /// Off-critical-path traffic (prefetch fills): port occupancy only.
    fn charge_background(&mut self, txn: &Transaction) {
        for _ in txn.port_ops.iter().filter(|op| **op == PortOp::Write) {
            self.busy_until = self.busy_until.max(self.now) + self.latency.l2_write_cycles;
        }
    }

    pub fn finish(self) -> SimReport {
        let s = &self.hierarchy.stats;
        let accesses = s.l1i.accesses() + s.l1d.accesses();
        let ipc = if self.now == 0 {
            0.0
        } else {
            self.instructions as f64 / self.now as f64
        };
        SimReport {
            accesses_l1i: s.l1i.accesses(),
            hits_l1i: s.l1i.hits,
            misses_l1i: s.l1i.misses,
            miss_rate_l1i: s.l1i.miss_rate(),
            accesses_l1d: s.l1d.accesses(),
            hits_l1d: s.l1d.hits,
            misses_l1d: s.l1d.misses,
            miss_rate_l1d: s.l1d.miss_rate(),
            accesses_l2: s.l2.accesses(),
            hits_l2: s.l2.hits,
            misses_l2: s.l2.misses,
            miss_rate_l2: s.l2.miss_rate(),
            copyback_count_l1i: s.copybacks_l1i,
            copyback_count_l1d: s.copybacks_l1d,
            l2_writebacks_to_memory: s.l2_writebacks_to_memory,
            prefetches_issued: self.prefetches_issued,
            prefetches_useful: self.prefetches_useful,
            total_instructions: self.instructions,
            total_cycles: self.now,
            ipc_proxy: ipc,
            l2_port_stall_cycles: self.port_stall,
            empty_trace: accesses == 0,
        }
    }
}

/// Run one simulation over a trace. Deterministic given (trace, config).
pub fn run<I>(trace: I, config: &SimConfig) -> Result<SimReport, EngineError>
where
    I: IntoIterator<Item = Result<AccessRecord, TraceError>>,
{
    let mut sim = Simulation::new(config)?;
    for record in trace {
        sim.step(&record?);
    }
    Ok(sim.finish())
}

#[derive(Debug, Clone)]
pub struct CompareTable {
    pub labels: Vec<String>,
    pub reports: Vec<SimReport>,
}

impl CompareTable {
    /// Column order follows config order; the first column is the baseline.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric");
        for label in &self.labels {
            out.push(',');
            out.push_str(label);
        }
        out.push('\n');

        let metric_names: Vec<&str> = self.reports[0]
            .metrics()
            .into_iter()
            .map(|(n, _)| n)
            .collect();
        for (row, name) in metric_names.iter().enumerate() {
            out.push_str(name);
            for report in &self.reports {
                out.push(',');
                out.push_str(&report.metrics()[row].1.render());
            }
            out.push('\n');
        }

        let base = &self.reports[0];
        let pct = |b: f64, v: f64| if b == 0.0 { 0.0 } else { (b - v) / b * 100.0 };
        out.push_str("ipc_normalized");
        for r in &self.reports {
            out.push(',');
            let norm = if base.ipc_proxy == 0.0 {
                0.0
            } else {
                r.ipc_proxy / base.ipc_proxy
            };
            out.push_str(&format_sig(norm));
        }
        out.push('\n');
        out.push_str("miss_rate_reduction_l1d_pp");
        for r in &self.reports {
            out.push(',');
            out.push_str(&format_sig((base.miss_rate_l1d - r.miss_rate_l1d) * 100.0));
        }
        out.push('\n');
        out.push_str("copyback_reduction_l1d_pct");
        for r in &self.reports {
            out.push(',');
            out.push_str(&format_sig(pct(
                base.copyback_count_l1d as f64,
                r.copyback_count_l1d as f64,
            )));
        }
        out.push('\n');
        out
    }
}

/// Run every config on the same trace and tabulate IPC, miss-rate, and
/// copy-back deltas against the first config.
pub fn compare(
    records: &[AccessRecord],
    configs: &[(String, SimConfig)],
) -> Result<CompareTable, EngineError> {
    if configs.len() < 2 {
        return Err(EngineError::Config(
            "compare needs at least two configurations".into(),
        ));
    }
    let bb = configs[0].1.l1d.block_bytes;
    if configs.iter().any(|(_, c)| c.l1d.block_bytes != bb) {
        return Err(EngineError::Config(
            "compared configurations must share one block size".into(),
        ));
    }
    let mut reports = Vec::with_capacity(configs.len());
    for (_, config) in configs {
        reports.push(run(records.iter().copied().map(Ok), config)?);
    }
    Ok(CompareTable {
        labels: configs.iter().map(|(l, _)| l.clone()).collect(),
        reports,
    })
}

//! Discrete-event simulator of a serving engine with a tiered KV cache.
//!
//! Each instance runs FCFS continuous batching with chunked prefill under a
//! per-step token budget. Cached prefixes found in HBM or DRAM at arrival are
//! reused; disk-resident prefixes are prefetched while the request waits in
//! the queue and only the blocks whose reads finished before scheduling are
//! reused. Completed requests write their input blocks back to DRAM.

mod engine;
mod profile;

pub use profile::{kernel_time, KernelProfile, KernelTime, KnotGrid, Phase, SyntheticProfile};

use crate::cost_model::{self, Money, PricingModel};
use crate::tiered_store::{StoreError, Tier, TierConfig, TierSpec, TierUsage, UsageReport};
use crate::trace::{BlockHash, Trace};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid kernel profile: {0}")]
    Profile(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("request {request_id} needs {needed} bytes of HBM but the working capacity is {capacity}")]
    RequestTooLarge {
        request_id: String,
        needed: u64,
        capacity: u64,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComputeConfig {
    pub instance_count: usize,
    /// Prefill tokens one engine step may compute.
    pub tokens_per_iteration_budget: u64,
    pub max_running_requests: usize,
    pub kernel_profile: KernelProfile,
    pub bytes_per_token: u64,
    pub hbm_working_capacity_bytes: u64,
}

impl ComputeConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let checks = [
            (self.instance_count > 0, "instance_count"),
            (self.tokens_per_iteration_budget > 0, "tokens_per_iteration_budget"),
            (self.max_running_requests > 0, "max_running_requests"),
            (self.bytes_per_token > 0, "bytes_per_token"),
            (self.hbm_working_capacity_bytes > 0, "hbm_working_capacity_bytes"),
        ];
        for (ok, name) in checks {
            if !ok {
                return Err(SimError::Config(format!("{name} must be positive")));
            }
        }
        self.kernel_profile.validate()
    }

    pub fn block_bytes(&self) -> u64 {
        self.bytes_per_token * crate::trace::TOKENS_PER_BLOCK
    }
}

/// TTL of one subtree group. `root` is the leading block hash of the group's
/// chains; `None` marks the residual group that takes every other chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTtl {
    pub root: Option<BlockHash>,
    pub ttl_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TtlPolicy {
    /// One TTL for every block; absent means never expire.
    Fixed {
        #[serde(default)]
        ttl_s: Option<f64>,
    },
    Group { groups: Vec<GroupTtl> },
}

impl Default for TtlPolicy {
    fn default() -> Self {
        TtlPolicy::Fixed { ttl_s: None }
    }
}

fn default_overlap_threshold() -> f64 {
    10_000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageConfig {
    pub dram: TierConfig,
    pub disk: TierConfig,
    #[serde(default)]
    pub ttl: TtlPolicy,
    /// DRAM loads overlap with compute (no stall) when the DRAM link is at
    /// least this fast, in MB/s.
    #[serde(default = "default_overlap_threshold")]
    pub dram_overlap_min_bandwidth_mbps: f64,
    /// Optional lower bound on disk capacity, in GB.
    #[serde(default)]
    pub min_disk_gb: Option<f64>,
}

impl StorageConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        for (name, t) in [("dram", &self.dram), ("disk", &self.disk)] {
            let vals = [t.capacity_gb, t.base_bandwidth_mbps, t.bw_slope_mbps_per_gb];
            if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(SimError::Config(format!(
                    "{name} capacity and bandwidth must be finite and non-negative"
                )));
            }
        }
        if let Some(min) = self.min_disk_gb {
            if self.disk.capacity_gb < min {
                return Err(SimError::Config(format!(
                    "disk capacity {} GB is below the configured floor {min} GB",
                    self.disk.capacity_gb
                )));
            }
        }
        match &self.ttl {
            TtlPolicy::Fixed { ttl_s: Some(t) } if t.is_nan() || *t < 0.0 => {
                Err(SimError::Config("ttl_s must be non-negative".into()))
            }
            TtlPolicy::Group { groups } => {
                if groups.iter().filter(|g| g.root.is_none()).count() != 1 {
                    return Err(SimError::Config(
                        "group TTL policy needs exactly one residual group".into(),
                    ));
                }
                if groups.iter().any(|g| g.ttl_s.is_nan() || g.ttl_s < 0.0) {
                    return Err(SimError::Config("group TTLs must be non-negative".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn dram_spec(&self) -> TierSpec {
        TierSpec::from_config(Tier::Dram, &self.dram)
    }

    pub fn disk_spec(&self) -> TierSpec {
        TierSpec::from_config(Tier::Disk, &self.disk)
    }
}

/// Outcome of one request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub request_id: String,
    pub instance: usize,
    pub arrival_us: u64,
    pub scheduled_us: u64,
    pub first_token_us: u64,
    pub completion_us: u64,
    pub ttft_ms: f64,
    pub queue_ms: f64,
    pub input_tokens: u64,
    pub hbm_reused_tokens: u64,
    pub dram_reused_tokens: u64,
    pub disk_reused_tokens: u64,
    pub computed_input_tokens: u64,
    pub output_tokens: u64,
    /// Disk blocks whose prefetch was issued at arrival.
    pub prefetch_issued_blocks: u64,
}

impl CompletionRecord {
    pub fn reused_tokens(&self) -> u64 {
        self.hbm_reused_tokens + self.dram_reused_tokens + self.disk_reused_tokens
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub request_count: usize,
    pub mean_ttft_ms: f64,
    pub p90_ttft_ms: f64,
    pub p99_ttft_ms: f64,
    pub mean_queue_ms: f64,
    /// Served tokens (all input plus output) per second of makespan.
    pub throughput_tps: f64,
    pub makespan_s: f64,
    pub makespan_us: u64,
    pub input_tokens: u64,
    pub computed_input_tokens: u64,
    pub output_tokens: u64,
    pub hbm_reuse_ratio: f64,
    pub dram_reuse_ratio: f64,
    pub disk_reuse_ratio: f64,
    pub reuse_ratio: f64,
    pub gpu_busy_seconds: f64,
    pub stall_seconds: f64,
    /// Kernel queries that fell outside the profile and were clamped.
    pub kernel_clamped_queries: u64,
    pub usage_per_instance: Vec<UsageReport>,
    pub usage: UsageReport,
    pub completions: Vec<CompletionRecord>,
    pub storage: StorageConfig,
    pub compute: ComputeEcho,
}

impl SimReport {
    /// Total tokens served: every input token, reused or computed, plus
    /// output tokens.
    pub fn processed_tokens(&self) -> u64 {
        self.input_tokens + self.output_tokens
    }
}

/// Compute settings carried in the report, without the kernel grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComputeEcho {
    pub instance_count: usize,
    pub tokens_per_iteration_budget: u64,
    pub max_running_requests: usize,
    pub bytes_per_token: u64,
    pub hbm_working_capacity_bytes: u64,
}

impl From<&ComputeConfig> for ComputeEcho {
    fn from(c: &ComputeConfig) -> Self {
        Self {
            instance_count: c.instance_count,
            tokens_per_iteration_budget: c.tokens_per_iteration_budget,
            max_running_requests: c.max_running_requests,
            bytes_per_token: c.bytes_per_token,
            hbm_working_capacity_bytes: c.hbm_working_capacity_bytes,
        }
    }
}

/// Replays `trace` against the given storage and compute configuration.
pub fn simulate(
    trace: &Trace,
    storage: &StorageConfig,
    compute: &ComputeConfig,
) -> Result<SimReport, SimError> {
    storage.validate()?;
    compute.validate()?;
    let footprint = |r: &crate::trace::TraceRequest| {
        (r.input_tokens() + r.output_tokens as u64) * compute.bytes_per_token
    };
    if let Some(r) = trace
        .requests
        .iter()
        .find(|r| footprint(r) > compute.hbm_working_capacity_bytes)
    {
        return Err(SimError::RequestTooLarge {
            request_id: r.request_id.clone(),
            needed: footprint(r),
            capacity: compute.hbm_working_capacity_bytes,
        });
    }
    let interned = engine::Interned::new(trace, &storage.ttl);
    let n = compute.instance_count;
    let mut runs = Vec::with_capacity(n);
    for inst in 0..n {
        let members: Vec<usize> = (inst..trace.requests.len()).step_by(n).collect();
        runs.push(engine::run_instance(inst, &members, trace, &interned, storage, compute)?);
    }
    let makespan_us = runs.iter().map(|r| r.end_us).max().unwrap_or(0);
    let mut usage_per_instance = Vec::with_capacity(n);
    let mut completions = Vec::with_capacity(trace.len());
    let mut busy = 0.0;
    let mut stall = 0.0;
    let mut clamped = 0;
    for mut r in runs {
        r.store.close(makespan_us)?;
        usage_per_instance.push(r.store.usage_integrals()?);
        completions.append(&mut r.completions);
        busy += r.busy_s;
        stall += r.stall_s;
        clamped += r.clamped;
    }
    completions.sort_by(|a, b| {
        (a.arrival_us, &a.request_id).cmp(&(b.arrival_us, &b.request_id))
    });
    if clamped > 0 {
        log::warn!("{clamped} kernel-time queries fell outside the profile and were clamped");
    }
    Ok(assemble(
        completions,
        usage_per_instance,
        makespan_us,
        busy,
        stall,
        clamped,
        storage,
        compute,
    ))
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    completions: Vec<CompletionRecord>,
    usage_per_instance: Vec<UsageReport>,
    makespan_us: u64,
    gpu_busy_seconds: f64,
    stall_seconds: f64,
    kernel_clamped_queries: u64,
    storage: &StorageConfig,
    compute: &ComputeConfig,
) -> SimReport {
    let sum = |f: fn(&CompletionRecord) -> u64| completions.iter().map(f).sum::<u64>();
    let input_tokens = sum(|c| c.input_tokens);
    let computed_input_tokens = sum(|c| c.computed_input_tokens);
    let output_tokens = sum(|c| c.output_tokens);
    let ratio = |x: u64| {
        if input_tokens == 0 {
            0.0
        } else {
            x as f64 / input_tokens as f64
        }
    };
    let hbm = sum(|c| c.hbm_reused_tokens);
    let dram = sum(|c| c.dram_reused_tokens);
    let disk = sum(|c| c.disk_reused_tokens);
    let mut ttft: Vec<f64> = completions.iter().map(|c| c.ttft_ms).collect();
    ttft.sort_by(f64::total_cmp);
    let count = completions.len();
    let mean = |v: f64| if count == 0 { 0.0 } else { v / count as f64 };
    let makespan_s = makespan_us as f64 / 1e6;
    let processed = input_tokens + output_tokens;
    let usage = aggregate_usage(&usage_per_instance, makespan_us);
    SimReport {
        request_count: count,
        mean_ttft_ms: mean(ttft.iter().sum()),
        p90_ttft_ms: crate::trace::nearest_rank(&ttft, 0.9).unwrap_or(0.0),
        p99_ttft_ms: crate::trace::nearest_rank(&ttft, 0.99).unwrap_or(0.0),
        mean_queue_ms: mean(completions.iter().map(|c| c.queue_ms).sum()),
        throughput_tps: if makespan_us == 0 {
            0.0
        } else {
            processed as f64 / makespan_s
        },
        makespan_s,
        makespan_us,
        input_tokens,
        computed_input_tokens,
        output_tokens,
        hbm_reuse_ratio: ratio(hbm),
        dram_reuse_ratio: ratio(dram),
        disk_reuse_ratio: ratio(disk),
        reuse_ratio: ratio(hbm + dram + disk),
        gpu_busy_seconds,
        stall_seconds,
        kernel_clamped_queries,
        usage_per_instance,
        usage,
        completions,
        storage: storage.clone(),
        compute: compute.into(),
    }
}

fn aggregate_usage(parts: &[UsageReport], horizon_us: u64) -> UsageReport {
    let add = |acc: &mut TierUsage, u: &TierUsage| {
        acc.capacity_bytes += u.capacity_bytes;
        acc.byte_seconds += u.byte_seconds;
        acc.peak_bytes += u.peak_bytes;
        acc.resident_bytes += u.resident_bytes;
        acc.admitted_bytes += u.admitted_bytes;
        acc.evicted_bytes += u.evicted_bytes;
        acc.expired_bytes += u.expired_bytes;
        acc.moved_out_bytes += u.moved_out_bytes;
        acc.bytes_read += u.bytes_read;
        acc.bytes_written += u.bytes_written;
    };
    let mut out = UsageReport {
        horizon_us,
        dram: TierUsage::default(),
        disk: TierUsage::default(),
    };
    for p in parts {
        add(&mut out.dram, &p.dram);
        add(&mut out.disk, &p.disk);
    }
    out
}

/// The minimized objective triple: mean TTFT, negated throughput, cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector {
    pub mean_ttft_ms: f64,
    pub neg_throughput_tps: f64,
    pub cost: f64,
}

impl ObjectiveVector {
    pub fn as_array(&self) -> [f64; 3] {
        [self.mean_ttft_ms, self.neg_throughput_tps, self.cost]
    }
}

pub fn replay_objectives(report: &SimReport, pricing: &PricingModel) -> ObjectiveVector {
    let cost: Money = cost_model::total_cost(report, pricing).total;
    ObjectiveVector {
        mean_ttft_ms: report.mean_ttft_ms,
        neg_throughput_tps: -report.throughput_tps,
        cost: cost.as_f64(),
    }
}

//! Compute plus tiered resource pricing.
//!
//! A run costs `c_hw × instances × makespan hours`, plus storage (either the
//! byte-time integral or the provisioned capacity, per tier), plus any number
//! of piecewise-linear resource schedules such as provisioned IOPS with
//! pricing cliffs.

use crate::engine_sim::SimReport;
use crate::tiered_store::{TierConfig, TierSpec, TierUsage, BYTES_PER_GB, BYTES_PER_MB};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::iter::Sum;
use std::ops::Add;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CostError {
    #[error("usage must be non-negative, got {0}")]
    NegativeUsage(f64),
    #[error("invalid pricing: {0}")]
    Invalid(String),
    #[error("cannot read pricing file {path}: {message}")]
    Read { path: String, message: String },
}

/// Currency with six fractional digits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Money(i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub fn from_f64(v: f64) -> Self {
        Money((v * 1e6).round() as i64)
    }

    pub fn micros(self) -> i64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, o: Money) -> Money {
        Money(self.0 + o.0)
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, Add::add)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let a = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:06}", a / 1_000_000, a % 1_000_000)
    }
}

/// From `breakpoint` on, usage is charged at `rate` per unit; `jump` is a
/// fixed charge added once usage reaches the breakpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub breakpoint: f64,
    pub rate: f64,
    #[serde(default)]
    pub jump: f64,
}

/// Piecewise-linear, right-continuous price of a usage quantity. Usage below
/// the first breakpoint is free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schedule(pub Vec<Segment>);

impl Schedule {
    pub fn validate(&self) -> Result<(), CostError> {
        let s = &self.0;
        if s.windows(2).any(|w| !(w[0].breakpoint < w[1].breakpoint)) {
            return Err(CostError::Invalid("breakpoints must be strictly increasing".into()));
        }
        for seg in s {
            if !(seg.breakpoint >= 0.0) || !seg.breakpoint.is_finite() {
                return Err(CostError::Invalid("breakpoints must be finite and non-negative".into()));
            }
            if !(seg.rate >= 0.0 && seg.jump >= 0.0) || !seg.rate.is_finite() || !seg.jump.is_finite() {
                return Err(CostError::Invalid("rates and jumps must be finite and non-negative".into()));
            }
            if seg.breakpoint == 0.0 && seg.jump != 0.0 {
                return Err(CostError::Invalid("a schedule must cost nothing at zero usage".into()));
            }
        }
        Ok(())
    }
}

/// Evaluates a schedule at `usage`.
pub fn phi(schedule: &Schedule, usage: f64) -> Result<f64, CostError> {
    if usage < 0.0 || usage.is_nan() {
        return Err(CostError::NegativeUsage(usage));
    }
    let segs = &schedule.0;
    let mut total = 0.0;
    for (i, seg) in segs.iter().enumerate() {
        if usage < seg.breakpoint {
            break;
        }
        let end = segs.get(i + 1).map_or(usage, |n| n.breakpoint.min(usage));
        total += seg.jump + seg.rate * (end - seg.breakpoint);
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BillingMode {
    /// Rate × integral of occupied bytes.
    ByteTime,
    /// Rate × configured capacity × wall-clock.
    Provisioned,
}

/// Per-instance quantity a schedule prices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Metric {
    /// Effective bandwidth divided by the I/O size.
    ProvisionedIops { io_size_bytes: u64 },
    ThroughputMbps,
    CapacityGb,
}

fn default_period_hours() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceSchedule {
    pub name: String,
    pub metric: Metric,
    /// `phi` is a charge per this many hours of provisioning.
    #[serde(default = "default_period_hours")]
    pub period_hours: f64,
    pub segments: Schedule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierPricing {
    pub billing_mode: BillingMode,
    pub rate_per_gb_hour: f64,
    #[serde(default)]
    pub schedules: Vec<ResourceSchedule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PricingModel {
    #[serde(default)]
    pub label: Option<String>,
    pub c_hw_per_gpu_hour: f64,
    pub dram: TierPricing,
    pub disk: TierPricing,
}

impl PricingModel {
    pub fn validate(&self) -> Result<(), CostError> {
        if !(self.c_hw_per_gpu_hour >= 0.0) {
            return Err(CostError::Invalid("c_hw_per_gpu_hour must be non-negative".into()));
        }
        for t in [&self.dram, &self.disk] {
            if !(t.rate_per_gb_hour >= 0.0) {
                return Err(CostError::Invalid("rate_per_gb_hour must be non-negative".into()));
            }
            for s in &t.schedules {
                if !(s.period_hours > 0.0) {
                    return Err(CostError::Invalid(format!("{}: period_hours must be positive", s.name)));
                }
                if let Metric::ProvisionedIops { io_size_bytes: 0 } = s.metric {
                    return Err(CostError::Invalid(format!("{}: io_size_bytes must be positive", s.name)));
                }
                s.segments.validate()?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CostError> {
        let read_err = |message: String| CostError::Read {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| read_err(e.to_string()))?;
        let model: Self = serde_json::from_str(&text).map_err(|e| read_err(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }
}

/// One line of an itemized bill.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostItem {
    pub name: String,
    pub amount: Money,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub items: Vec<CostItem>,
    pub total: Money,
}

impl CostBreakdown {
    fn from_items(items: Vec<CostItem>) -> Self {
        let total = items.iter().map(|i| i.amount).sum();
        Self { items, total }
    }

    pub fn item(&self, name: &str) -> Option<Money> {
        self.items.iter().find(|i| i.name == name).map(|i| i.amount)
    }
}

/// Storage charge of one tier.
pub fn storage_cost(
    usage: &TierUsage,
    capacity_bytes_total: u64,
    wall_hours: f64,
    pricing: &TierPricing,
) -> f64 {
    match pricing.billing_mode {
        BillingMode::ByteTime => pricing.rate_per_gb_hour * usage.byte_seconds / BYTES_PER_GB / 3600.0,
        BillingMode::Provisioned => {
            pricing.rate_per_gb_hour * capacity_bytes_total as f64 / BYTES_PER_GB * wall_hours
        }
    }
}

fn metric_value(metric: Metric, spec: &TierSpec) -> f64 {
    match metric {
        Metric::ProvisionedIops { io_size_bytes } => {
            spec.effective_bandwidth() as f64 / io_size_bytes as f64
        }
        Metric::ThroughputMbps => spec.effective_bandwidth() as f64 / BYTES_PER_MB,
        Metric::CapacityGb => spec.capacity_bytes as f64 / BYTES_PER_GB,
    }
}

/// Itemized cost of a simulated run.
pub fn total_cost(report: &SimReport, pricing: &PricingModel) -> CostBreakdown {
    let instances = report.compute.instance_count as f64;
    let hours = report.makespan_s / 3600.0;
    let mut items = vec![CostItem {
        name: "compute".into(),
        amount: Money::from_f64(pricing.c_hw_per_gpu_hour * instances * hours),
    }];
    let tiers = [
        ("dram", &pricing.dram, &report.usage.dram, report.storage.dram_spec()),
        ("disk", &pricing.disk, &report.usage.disk, report.storage.disk_spec()),
    ];
    for (name, tp, usage, spec) in tiers {
        let capacity_total = spec.capacity_bytes * report.compute.instance_count as u64;
        items.push(CostItem {
            name: format!("{name}_storage"),
            amount: Money::from_f64(storage_cost(usage, capacity_total, hours, tp)),
        });
        for s in &tp.schedules {
            // an unprovisioned tier carries no resource charges
            let per_instance = if spec.capacity_bytes == 0 {
                0.0
            } else {
                phi(&s.segments, metric_value(s.metric, &spec)).expect("metrics are non-negative")
            };
            items.push(CostItem {
                name: format!("{name}_{}", s.name),
                amount: Money::from_f64(per_instance * instances * hours / s.period_hours),
            });
        }
    }
    CostBreakdown::from_items(items)
}

/// A purchasable disk medium: bandwidth coupling plus price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiskMedium {
    pub id: String,
    pub base_bandwidth_mbps: f64,
    pub bw_slope_mbps_per_gb: f64,
    #[serde(default)]
    pub duplex: bool,
    pub max_capacity_gb: f64,
    pub pricing: TierPricing,
}

impl DiskMedium {
    pub fn tier_config(&self, capacity_gb: f64) -> TierConfig {
        TierConfig {
            capacity_gb,
            base_bandwidth_mbps: self.base_bandwidth_mbps,
            bw_slope_mbps_per_gb: self.bw_slope_mbps_per_gb,
            duplex: self.duplex,
        }
    }
}

/// IOPS schedule with a free baseline up to 3000, 0.005 per IOPS-month
/// beyond it, and 0.065 per IOPS-month from 32000 on.
pub fn cliff_iops_schedule() -> ResourceSchedule {
    ResourceSchedule {
        name: "iops".into(),
        metric: Metric::ProvisionedIops { io_size_bytes: 16 * 1024 },
        period_hours: 730.0,
        segments: Schedule(vec![
            Segment { breakpoint: 3000.0, rate: 0.005, jump: 0.0 },
            Segment { breakpoint: 32000.0, rate: 0.065, jump: 0.0 },
        ]),
    }
}

/// Illustrative, non-normative price list. Magnitudes resemble public cloud
/// list prices but are not quotes.
pub fn default_pricing() -> PricingModel {
    PricingModel {
        label: Some("illustrative defaults, not a price quote".into()),
        c_hw_per_gpu_hour: 4.0,
        dram: TierPricing {
            billing_mode: BillingMode::Provisioned,
            rate_per_gb_hour: 0.004,
            schedules: Vec::new(),
        },
        disk: default_media()[0].pricing.clone(),
    }
}

/// Three-row SSD menu with rising bandwidth and price.
pub fn default_media() -> Vec<DiskMedium> {
    let row = |id: &str, base: f64, slope: f64, max_gb: f64, rate: f64| DiskMedium {
        id: id.into(),
        base_bandwidth_mbps: base,
        bw_slope_mbps_per_gb: slope,
        duplex: true,
        max_capacity_gb: max_gb,
        pricing: TierPricing {
            billing_mode: BillingMode::ByteTime,
            rate_per_gb_hour: rate,
            schedules: vec![cliff_iops_schedule()],
        },
    };
    vec![
        row("ssd-tier1", 120.0, 0.5, 16384.0, 0.0002),
        row("ssd-tier2", 250.0, 1.0, 32768.0, 0.0004),
        row("ssd-tier3", 500.0, 2.0, 65536.0, 0.0008),
    ]
}

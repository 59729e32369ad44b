//! Synthetic objective landscapes for the adaptive search, shared by the
//! search tests and the acceptance suite.

use kvtier::pareto_search::{Config, GridSpec, Outcome, SearchConfig};

pub fn search_config(grid: GridSpec, budget: usize) -> SearchConfig {
    SearchConfig {
        grid,
        tau_expand: 0.05,
        tau_perf: 0.05,
        tau_cost: 0.02,
        budget,
    }
}

pub fn grid(dram: (u64, u64, u64), ttl: (u64, u64, u64)) -> GridSpec {
    GridSpec {
        dram_min_gb: dram.0,
        dram_max_gb: dram.1,
        dram_step_gb: dram.2,
        ttl_min_s: ttl.0,
        ttl_max_s: ttl.1,
        ttl_step_s: ttl.2,
        media: vec!["default".into()],
    }
}

/// Every configuration performs and costs the same.
pub fn flat(_: &Config) -> Result<Outcome, String> {
    Ok([100.0, -1000.0, 5.0].into())
}

/// Latency drops from 500 ms to 100 ms once the TTL reaches 5 s; cost grows
/// with both axes.
pub fn ttl_cliff(c: &Config) -> Result<Outcome, String> {
    let ttft = if c.ttl_s < 5 { 500.0 } else { 100.0 };
    let cost = 1.0 + 0.01 * c.dram_gb as f64 + 0.05 * c.ttl_s as f64;
    Ok([ttft, -1000.0, cost].into())
}

/// Latency and throughput saturate exponentially in DRAM (scale 128 GB) and
/// mildly in TTL; cost is a fixed compute charge plus a linear storage term.
pub fn diminishing_return(c: &Config) -> Result<Outcome, String> {
    let d = (-(c.dram_gb as f64) / 128.0).exp();
    let t = 1.0 - (-(c.ttl_s as f64) / 200.0).exp();
    let ttft = 100.0 + 400.0 * d * (1.0 - 0.08 * t);
    let throughput = 1000.0 + 200.0 * (1.0 - d) + 20.0 * t;
    let cost = 4.0 + 0.002 * c.dram_gb as f64 + 0.0005 * c.ttl_s as f64;
    Ok([ttft, -throughput, cost].into())
}

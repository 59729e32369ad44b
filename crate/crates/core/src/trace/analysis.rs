//! Workload characterization: reuse skew, reuse intervals, density and the
//! oracle-TTL footprint.

use super::{BlockHash, Trace, TraceError};
use serde::Serialize;
use std::collections::HashMap;
use std::io::Write;

/// Access times (ms) of every block, in first-seen order of blocks.
pub(crate) fn block_accesses(trace: &Trace) -> Vec<(&BlockHash, Vec<u64>)> {
    let mut index: HashMap<&BlockHash, usize> = HashMap::new();
    let mut out: Vec<(&BlockHash, Vec<u64>)> = Vec::new();
    for r in &trace.requests {
        for b in &r.input_blocks {
            let slot = *index.entry(b).or_insert_with(|| {
                out.push((b, Vec::new()));
                out.len() - 1
            });
            out[slot].1.push(r.arrival_ms);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LorenzCurve {
    /// `(block_fraction, hit_fraction)` with blocks sorted by ascending reuse.
    pub points: Vec<(f64, f64)>,
    /// Smallest fraction of blocks that accounts for 90% of all hits.
    pub fraction_for_90pct: f64,
    /// True when the trace has no reuse at all.
    pub degenerate: bool,
}

/// Lorenz curve of per-block hit counts (accesses beyond the first).
pub fn reuse_skew(trace: &Trace) -> Result<LorenzCurve, TraceError> {
    if trace.is_empty() {
        return Err(TraceError::Invalid("reuse_skew needs a nonempty trace".into()));
    }
    let mut hits: Vec<u64> = block_accesses(trace)
        .iter()
        .map(|(_, times)| times.len() as u64 - 1)
        .collect();
    let total: u64 = hits.iter().sum();
    let n = hits.len();
    if total == 0 {
        return Ok(LorenzCurve {
            points: vec![(0.0, 0.0), (1.0, 1.0)],
            fraction_for_90pct: 1.0,
            degenerate: true,
        });
    }
    hits.sort_unstable();

    let mut points = Vec::with_capacity(n + 1);
    points.push((0.0, 0.0));
    let mut cum = 0u64;
    for (i, h) in hits.iter().enumerate() {
        cum += h;
        points.push(((i + 1) as f64 / n as f64, cum as f64 / total as f64));
    }
    if let Some(last) = points.last_mut() {
        *last = (1.0, 1.0);
    }

    // Heaviest blocks first; integer comparison `10 * covered >= 9 * total`.
    let mut covered = 0u64;
    let mut needed = n;
    for (k, h) in hits.iter().rev().enumerate() {
        covered += h;
        if 10 * covered >= 9 * total {
            needed = k + 1;
            break;
        }
    }
    Ok(LorenzCurve {
        points,
        fraction_for_90pct: needed as f64 / n as f64,
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    /// Inclusive lower edge (ms).
    pub lo_ms: u64,
    /// Exclusive upper edge (ms).
    pub hi_ms: u64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalStats {
    /// All reuse intervals, ascending.
    pub intervals_ms: Vec<u64>,
    /// Power-of-two bins: `[0,1), [1,2), [2,4), ...`; empty bins omitted.
    pub histogram: Vec<HistogramBin>,
    pub p50_ms: Option<u64>,
    pub p90_ms: Option<u64>,
    pub p99_ms: Option<u64>,
    pub mean_ms: Option<f64>,
}

/// Nearest-rank quantile of an ascending slice.
pub(crate) fn nearest_rank<T: Copy>(sorted: &[T], q: f64) -> Option<T> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Some(sorted[rank - 1])
}

fn log2_bin(v: u64) -> (u64, u64) {
    if v == 0 {
        (0, 1)
    } else {
        let lo = 1u64 << (63 - v.leading_zeros());
        (lo, lo.saturating_mul(2))
    }
}

pub fn histogram_of(sorted: &[u64]) -> Vec<HistogramBin> {
    let mut bins: Vec<HistogramBin> = Vec::new();
    for &v in sorted {
        let (lo, hi) = log2_bin(v);
        match bins.last_mut() {
            Some(b) if b.lo_ms == lo => b.count += 1,
            _ => bins.push(HistogramBin {
                lo_ms: lo,
                hi_ms: hi,
                count: 1,
            }),
        }
    }
    bins
}

/// Gaps between consecutive accesses of the same block.
pub fn interarrival_stats(trace: &Trace) -> Result<IntervalStats, TraceError> {
    if trace.is_empty() {
        return Err(TraceError::Invalid(
            "interarrival_stats needs a nonempty trace".into(),
        ));
    }
    let mut intervals: Vec<u64> = block_accesses(trace)
        .iter()
        .flat_map(|(_, times)| times.windows(2).map(|w| w[1] - w[0]))
        .collect();
    intervals.sort_unstable();
    let mean = (!intervals.is_empty())
        .then(|| intervals.iter().map(|&v| v as f64).sum::<f64>() / intervals.len() as f64);
    Ok(IntervalStats {
        histogram: histogram_of(&intervals),
        p50_ms: nearest_rank(&intervals, 0.5),
        p90_ms: nearest_rank(&intervals, 0.9),
        p99_ms: nearest_rank(&intervals, 0.99),
        mean_ms: mean,
        intervals_ms: intervals,
    })
}

/// Arrival rate over the trace window divided by the baseline serving
/// capacity (requests per second).
pub fn workload_density(trace: &Trace, baseline_rps: f64) -> Result<f64, TraceError> {
    if !(baseline_rps > 0.0) {
        return Err(TraceError::Invalid("baseline capacity must be positive".into()));
    }
    if trace.duration_ms == 0 {
        return Err(TraceError::Invalid("trace has zero duration".into()));
    }
    let rate = trace.len() as f64 / (trace.duration_ms as f64 / 1000.0);
    Ok(rate / baseline_rps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FootprintSample {
    pub t_ms: u64,
    /// Distinct blocks seen up to and including `t_ms`.
    pub cumulative: u64,
    /// Blocks seen by `t_ms` that are accessed again later.
    pub active: u64,
}

/// Cumulative vs. oracle-TTL live block counts, one sample per distinct
/// access time. Under the oracle policy a block stays resident from its
/// first access until its last one.
pub fn oracle_footprint(trace: &Trace) -> Result<Vec<FootprintSample>, TraceError> {
    if trace.is_empty() {
        return Err(TraceError::Invalid(
            "oracle_footprint needs a nonempty trace".into(),
        ));
    }
    // Per block: first and last access. Lifetime [first, last) is active.
    let mut starts: Vec<u64> = Vec::new();
    let mut ends: Vec<u64> = Vec::new();
    let mut firsts: Vec<u64> = Vec::new();
    for (_, times) in block_accesses(trace) {
        let first = times[0];
        let last = *times.last().expect("nonempty");
        firsts.push(first);
        if last > first {
            starts.push(first);
            ends.push(last);
        }
    }
    starts.sort_unstable();
    ends.sort_unstable();
    firsts.sort_unstable();

    let mut event_times: Vec<u64> = trace.requests.iter().map(|r| r.arrival_ms).collect();
    event_times.dedup();

    let (mut si, mut ei, mut fi) = (0, 0, 0);
    let mut out = Vec::with_capacity(event_times.len());
    for t in event_times {
        while fi < firsts.len() && firsts[fi] <= t {
            fi += 1;
        }
        while si < starts.len() && starts[si] <= t {
            si += 1;
        }
        while ei < ends.len() && ends[ei] <= t {
            ei += 1;
        }
        out.push(FootprintSample {
            t_ms: t,
            cumulative: fi as u64,
            active: (si - ei) as u64,
        });
    }
    Ok(out)
}

pub fn write_lorenz_csv<W: Write>(curve: &LorenzCurve, w: W) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["block_fraction", "hit_fraction"])?;
    for (x, y) in &curve.points {
        wr.write_record([x.to_string(), y.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_footprint_csv<W: Write>(samples: &[FootprintSample], w: W) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["t_ms", "cumulative", "active"])?;
    for s in samples {
        wr.write_record([s.t_ms.to_string(), s.cumulative.to_string(), s.active.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::TraceRequest;
    use std::collections::BTreeMap;

    fn req(id: &str, t: u64, blocks: &[&str]) -> TraceRequest {
        TraceRequest {
            request_id: id.into(),
            arrival_ms: t,
            input_blocks: blocks.iter().map(|&b| b.into()).collect(),
            output_tokens: 1,
        }
    }

    fn trace(reqs: Vec<TraceRequest>, duration: u64) -> Trace {
        Trace::new(reqs, duration, BTreeMap::new()).unwrap()
    }

    #[test]
    fn uniform_reuse_is_the_diagonal() {
        // 10 blocks, each accessed twice.
        let mut reqs = Vec::new();
        for i in 0..10 {
            let b = format!("b{i}");
            reqs.push(req(&format!("a{i}"), i, &[&b]));
            reqs.push(req(&format!("c{i}"), 100 + i, &[&b]));
        }
        let c = reuse_skew(&trace(reqs, 200)).unwrap();
        assert!(!c.degenerate);
        assert_eq!(c.fraction_for_90pct, 0.9);
        for (x, y) in &c.points {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn single_hot_block_is_maximal_skew() {
        let mut reqs = Vec::new();
        for i in 0..100 {
            reqs.push(req(&format!("u{i}"), i, &[&format!("b{i}")]));
        }
        for i in 0..50 {
            reqs.push(req(&format!("h{i}"), 200 + i, &["b0"]));
        }
        let c = reuse_skew(&trace(reqs, 300)).unwrap();
        assert_eq!(c.fraction_for_90pct, 0.01);
        assert_eq!(c.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(c.points.last(), Some(&(1.0, 1.0)));
    }

    #[test]
    fn no_reuse_is_degenerate() {
        let c = reuse_skew(&trace(vec![req("a", 0, &["x", "y"])], 1)).unwrap();
        assert!(c.degenerate);
        assert_eq!(c.fraction_for_90pct, 1.0);
    }

    #[test]
    fn intervals_follow_definition() {
        let t = trace(
            vec![req("a", 0, &["x"]), req("b", 5, &["x"]), req("c", 5, &["x", "y"])],
            10,
        );
        let s = interarrival_stats(&t).unwrap();
        assert_eq!(s.intervals_ms, vec![0, 5]);
        let none = interarrival_stats(&trace(vec![req("a", 0, &["x", "y"])], 1)).unwrap();
        assert!(none.intervals_ms.is_empty() && none.histogram.is_empty());
        assert_eq!(none.p50_ms, None);
    }

    #[test]
    fn density_is_rate_over_capacity() {
        let reqs: Vec<_> = (0..7200)
            .map(|i| req(&format!("r{i}"), i as u64 * 500, &["x"]))
            .collect();
        let t = trace(reqs, 3_600_000);
        assert!((workload_density(&t, 2.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((workload_density(&t, 1.0).unwrap() - 2.0).abs() < 1e-12);
        assert!(workload_density(&t, 0.0).is_err());
        let zero = trace(vec![req("a", 0, &["x"])], 0);
        assert!(workload_density(&zero, 1.0).is_err());
    }

    #[test]
    fn footprint_without_reuse_is_never_active() {
        let t = trace(vec![req("a", 0, &["x"]), req("b", 3, &["y", "z"])], 5);
        let f = oracle_footprint(&t).unwrap();
        assert!(f.iter().all(|s| s.active == 0));
        assert_eq!(f.last().unwrap().cumulative, 3);
    }

    #[test]
    fn footprint_single_block_lifetime() {
        let t = trace(
            vec![req("a", 0, &["x"]), req("m", 4, &["y"]), req("b", 10, &["x"])],
            12,
        );
        let f = oracle_footprint(&t).unwrap();
        let at = |ms| f.iter().find(|s| s.t_ms == ms).unwrap().active;
        assert_eq!(at(0), 1);
        assert_eq!(at(4), 1);
        assert_eq!(at(10), 0);
    }

    #[test]
    fn nearest_rank_quantiles() {
        let v: Vec<u64> = (1..=100).collect();
        assert_eq!(nearest_rank(&v, 0.5), Some(50));
        assert_eq!(nearest_rank(&v, 0.9), Some(90));
        assert_eq!(nearest_rank(&v, 0.99), Some(99));
        assert_eq!(nearest_rank(&v, 1.0), Some(100));
    }

    #[test]
    fn histogram_bins_are_powers_of_two() {
        let bins = histogram_of(&[0, 1, 2, 3, 4, 9]);
        let edges: Vec<_> = bins.iter().map(|b| (b.lo_ms, b.hi_ms, b.count)).collect();
        assert_eq!(edges, vec![(0, 1, 1), (1, 2, 1), (2, 4, 2), (4, 8, 1), (8, 16, 1)]);
    }
}

//! Pareto dominance, hypervolume, and grid / adaptive configuration search
//! over (DRAM capacity, disk TTL, disk medium).
//!
//! All objectives are minimized: mean TTFT, negated throughput, cost.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use thiserror::Error;

pub const OBJECTIVES: usize = 3;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search configuration: {0}")]
    InvalidConfig(String),
    #[error("point {index} {point:?} is not strictly better than the reference {reference:?}")]
    ReferenceNotDominated {
        index: usize,
        point: Vec<f64>,
        reference: Vec<f64>,
    },
    #[error("point set is empty")]
    Empty,
    #[error("simulation failed at {config}: {message}")]
    Simulate { config: Config, message: String },
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

/// A candidate configuration. DRAM is in whole GB and TTL in whole seconds.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Config {
    pub medium: String,
    pub dram_gb: u64,
    pub ttl_s: u64,
}

impl std::fmt::Display for Config {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(dram {} GB, ttl {} s, medium {})", self.dram_gb, self.ttl_s, self.medium)
    }
}

/// What one evaluation returns. Tail latencies ride along for constraint
/// filtering; only `objectives` take part in dominance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub objectives: [f64; OBJECTIVES],
    pub p90_ttft_ms: f64,
    pub p99_ttft_ms: f64,
}

impl From<[f64; OBJECTIVES]> for Outcome {
    fn from(objectives: [f64; OBJECTIVES]) -> Self {
        Self {
            objectives,
            p90_ttft_ms: objectives[0],
            p99_ttft_ms: objectives[0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub config: Config,
    pub outcome: Outcome,
    /// 1-based round of the search that evaluated this point.
    pub evaluated_round: usize,
}

impl ParetoPoint {
    pub fn objectives(&self) -> &[f64; OBJECTIVES] {
        &self.outcome.objectives
    }
}

/// `a` is no worse than `b` everywhere and strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        strict |= x < y;
    }
    strict
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Indices of the nondominated vectors. Among vectors with identical
/// objectives only the one that sorts first under `tie` is kept.
pub fn nondominated_by<F>(objs: &[&[f64]], tie: F) -> Vec<usize>
where
    F: Fn(usize, usize) -> Ordering,
{
    let mut order: Vec<usize> = (0..objs.len()).collect();
    // Any dominator sorts lexicographically before the point it dominates.
    order.sort_by(|&i, &j| lex_cmp(objs[i], objs[j]).then_with(|| tie(i, j)));
    let mut kept: Vec<usize> = Vec::new();
    for &i in &order {
        let beaten = kept
            .iter()
            .any(|&k| dominates(objs[k], objs[i]) || lex_cmp(objs[k], objs[i]).is_eq());
        if !beaten {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    kept
}

/// Nondominated subset; duplicates in objective space keep the smallest config.
pub fn pareto_filter(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    let objs: Vec<&[f64]> = points.iter().map(|p| &p.outcome.objectives[..]).collect();
    let mut out: Vec<ParetoPoint> = nondominated_by(&objs, |i, j| points[i].config.cmp(&points[j].config))
        .into_iter()
        .map(|i| points[i].clone())
        .collect();
    out.sort_by(|a, b| a.config.cmp(&b.config));
    out
}

/// Volume dominated by `points` and bounded by `reference` (minimization).
/// Exact in any dimension by slicing along the last axis.
pub fn hypervolume(points: &[Vec<f64>], reference: &[f64]) -> Result<f64, SearchError> {
    for (index, p) in points.iter().enumerate() {
        if p.len() != reference.len() || p.iter().zip(reference).any(|(x, r)| !(x < r)) {
            return Err(SearchError::ReferenceNotDominated {
                index,
                point: p.clone(),
                reference: reference.to_vec(),
            });
        }
    }
    let refs: Vec<&[f64]> = points.iter().map(Vec::as_slice).collect();
    Ok(hv_rec(&refs, reference))
}

fn hv_rec(points: &[&[f64]], reference: &[f64]) -> f64 {
    let d = reference.len();
    if points.is_empty() || d == 0 {
        return 0.0;
    }
    if d == 1 {
        let best = points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        return reference[0] - best;
    }
    if d == 2 {
        return hv2(points, reference);
    }
    let mut sorted: Vec<&[f64]> = points.to_vec();
    sorted.sort_by(|a, b| a[d - 1].total_cmp(&b[d - 1]));
    let mut total = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let z = sorted[i][d - 1];
        while i < sorted.len() && sorted[i][d - 1] == z {
            i += 1;
        }
        let top = if i < sorted.len() { sorted[i][d - 1] } else { reference[d - 1] };
        let slab: Vec<&[f64]> = sorted[..i].iter().map(|p| &p[..d - 1]).collect();
        total += hv_rec(&slab, &reference[..d - 1]) * (top - z);
    }
    total
}

fn hv2(points: &[&[f64]], reference: &[f64]) -> f64 {
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p[0], p[1])).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    staircase_area(&pts, reference)
}

/// Area of the union of boxes `[x, rx] × [y, ry]` for points sorted by x.
fn staircase_area(sorted_by_x: &[(f64, f64)], reference: &[f64]) -> f64 {
    let mut area = 0.0;
    let mut best_y = reference[1];
    let mut steps: Vec<(f64, f64)> = Vec::new();
    for &(x, y) in sorted_by_x {
        if y < best_y {
            steps.push((x, y));
            best_y = y;
        }
    }
    for (k, &(x, y)) in steps.iter().enumerate() {
        let next_x = steps.get(k + 1).map_or(reference[0], |s| s.0);
        area += (next_x - x) * (reference[1] - y);
    }
    area
}

/// Reference point `worst + 0.1·|worst|` per objective (plus a small floor so
/// a zero objective still yields a strictly worse reference).
pub fn auto_reference(points: &[Vec<f64>]) -> Result<Vec<f64>, SearchError> {
    let first = points.first().ok_or(SearchError::Empty)?;
    let mut worst = first.clone();
    for p in points {
        for (w, x) in worst.iter_mut().zip(p) {
            *w = w.max(*x);
        }
    }
    Ok(worst
        .into_iter()
        .map(|w| w + (0.1 * w.abs()).max(1e-9))
        .collect())
}

/// One axis of a uniform grid: `min, min+step, …` up to `max` inclusive.
fn axis(min: u64, max: u64, step: u64) -> Vec<u64> {
    (min..=max).step_by(step as usize).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dram_min_gb: u64,
    pub dram_max_gb: u64,
    pub dram_step_gb: u64,
    pub ttl_min_s: u64,
    pub ttl_max_s: u64,
    pub ttl_step_s: u64,
    #[serde(default = "default_media")]
    pub media: Vec<String>,
}

fn default_media() -> Vec<String> {
    vec!["default".into()]
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::InvalidConfig(m.into()));
        if self.dram_step_gb == 0 || self.ttl_step_s == 0 {
            return bad("grid steps must be positive");
        }
        if self.dram_max_gb < self.dram_min_gb || self.ttl_max_s < self.ttl_min_s {
            return bad("grid maxima must not be below minima");
        }
        if self.media.is_empty() {
            return bad("at least one disk medium is required");
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<Config> {
        let mut out = Vec::new();
        for m in &self.media {
            for d in axis(self.dram_min_gb, self.dram_max_gb, self.dram_step_gb) {
                for t in axis(self.ttl_min_s, self.ttl_max_s, self.ttl_step_s) {
                    out.push(Config {
                        medium: m.clone(),
                        dram_gb: d,
                        ttl_s: t,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    /// Coarse seed grid.
    pub grid: GridSpec,
    /// Relative latency gain that keeps the DRAM axis expanding.
    #[serde(default = "default_tau_perf")]
    pub tau_expand: f64,
    #[serde(default = "default_tau_perf")]
    pub tau_perf: f64,
    #[serde(default = "default_tau_cost")]
    pub tau_cost: f64,
    /// Maximum number of evaluations across all media.
    pub budget: usize,
}

fn default_tau_perf() -> f64 {
    0.05
}

fn default_tau_cost() -> f64 {
    0.02
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        self.grid.validate()?;
        for (v, name) in [
            (self.tau_expand, "tau_expand"),
            (self.tau_perf, "tau_perf"),
            (self.tau_cost, "tau_cost"),
        ] {
            if !(v > 0.0) {
                return Err(SearchError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.budget == 0 {
            return Err(SearchError::InvalidConfig("budget must be positive".into()));
        }
        Ok(())
    }
}

/// Relative difference `|a−b| / max(|a|, |b|, ε)`.
pub fn relative_delta(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-9)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    /// Every evaluation in the order performed.
    pub evaluations: Vec<ParetoPoint>,
    pub frontier: Vec<ParetoPoint>,
    pub rounds: usize,
    /// The budget cap stopped the search before it converged.
    pub truncated: bool,
}

impl SearchResult {
    pub fn evaluation_count(&self) -> usize {
        self.evaluations.len()
    }
}

/// Evaluates a batch, in parallel when `jobs > 1`, preserving batch order.
fn evaluate_batch<F>(batch: &[Config], f: &F, jobs: usize) -> Result<Vec<Outcome>, SearchError>
where
    F: Fn(&Config) -> Result<Outcome, String> + Sync,
{
    let run = |c: &Config| {
        f(c).map_err(|message| SearchError::Simulate {
            config: c.clone(),
            message,
        })
    };
    if jobs <= 1 {
        return batch.iter().map(run).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| SearchError::Pool(e.to_string()))?;
    pool.install(|| batch.par_iter().map(run).collect())
}

/// Evaluates every grid cell once.
pub fn grid_search<F>(grid: &GridSpec, simulate_fn: F, jobs: usize) -> Result<SearchResult, SearchError>
where
    F: Fn(&Config) -> Result<Outcome, String> + Sync,
{
    grid.validate()?;
    let cells = grid.cells();
    let outcomes = evaluate_batch(&cells, &simulate_fn, jobs)?;
    let evaluations: Vec<ParetoPoint> = cells
        .into_iter()
        .zip(outcomes)
        .map(|(config, outcome)| ParetoPoint {
            config,
            outcome,
            evaluated_round: 1,
        })
        .collect();
    Ok(SearchResult {
        frontier: pareto_filter(&evaluations),
        evaluations,
        rounds: 1,
        truncated: false,
    })
}

/// Coarse-to-fine exploration: seed with the coarse grid, keep extending the
/// DRAM axis (one full TTL column at a time) while the latency gain at the
/// lowest TTL exceeds `tau_expand`, and bisect neighboring pairs whose
/// performance changes by more than `tau_perf` while cost changes by more
/// than `tau_cost`. Each disk medium is searched independently.
pub fn adaptive_search<F>(
    cfg: &SearchConfig,
    simulate_fn: F,
    jobs: usize,
) -> Result<SearchResult, SearchError>
where
    F: Fn(&Config) -> Result<Outcome, String> + Sync,
{
    cfg.validate()?;
    let mut evaluations = Vec::new();
    let mut rounds = 0;
    let mut truncated = false;
    for medium in &cfg.grid.media {
        let remaining = cfg.budget.saturating_sub(evaluations.len());
        if remaining == 0 {
            truncated = true;
            break;
        }
        let run = explore_medium(cfg, medium, &simulate_fn, jobs, remaining)?;
        rounds = rounds.max(run.rounds);
        truncated |= run.truncated;
        evaluations.extend(run.evaluations);
    }
    Ok(SearchResult {
        frontier: pareto_filter(&evaluations),
        evaluations,
        rounds,
        truncated,
    })
}

struct MediumRun {
    evaluations: Vec<ParetoPoint>,
    rounds: usize,
    truncated: bool,
}

fn explore_medium<F>(
    cfg: &SearchConfig,
    medium: &str,
    simulate_fn: &F,
    jobs: usize,
    budget: usize,
) -> Result<MediumRun, SearchError>
where
    F: Fn(&Config) -> Result<Outcome, String> + Sync,
{
    let g = &cfg.grid;
    let ttl_column = axis(g.ttl_min_s, g.ttl_max_s, g.ttl_step_s);
    let mut visited: BTreeMap<(u64, u64), Outcome> = BTreeMap::new();
    let mut evaluations = Vec::new();
    let mut candidates: BTreeSet<(u64, u64)> = axis(g.dram_min_gb, g.dram_max_gb, g.dram_step_gb)
        .into_iter()
        .flat_map(|d| ttl_column.iter().map(move |&t| (d, t)))
        .collect();
    let mut round = 0;
    let mut truncated = false;
    loop {
        candidates.retain(|c| !visited.contains_key(c));
        if candidates.is_empty() {
            break;
        }
        round += 1;
        let mut batch: Vec<(u64, u64)> = candidates.iter().copied().collect();
        let room = budget - evaluations.len();
        if batch.len() > room {
            batch.truncate(room);
            truncated = true;
        }
        let configs: Vec<Config> = batch
            .iter()
            .map(|&(d, t)| Config {
                medium: medium.to_string(),
                dram_gb: d,
                ttl_s: t,
            })
            .collect();
        let outcomes = evaluate_batch(&configs, simulate_fn, jobs)?;
        for (config, outcome) in configs.into_iter().zip(outcomes) {
            visited.insert((config.dram_gb, config.ttl_s), outcome);
            evaluations.push(ParetoPoint {
                config,
                outcome,
                evaluated_round: round,
            });
        }
        if truncated {
            break;
        }
        candidates = next_candidates(cfg, &visited, &ttl_column);
    }
    Ok(MediumRun {
        evaluations,
        rounds: round,
        truncated,
    })
}

/// Candidates for the next round: the DRAM expansion column plus refinement
/// midpoints of adjacent visited pairs.
fn next_candidates(
    cfg: &SearchConfig,
    visited: &BTreeMap<(u64, u64), Outcome>,
    ttl_column: &[u64],
) -> BTreeSet<(u64, u64)> {
    let g = &cfg.grid;
    let mut next = BTreeSet::new();
    let base_ttl = g.ttl_min_s;
    if let Some(d_max) = visited
        .keys()
        .filter(|&&(_, t)| t == base_ttl)
        .map(|&(d, _)| d)
        .max()
    {
        if let (Some(prev), Some(top)) = (
            d_max
                .checked_sub(g.dram_step_gb)
                .and_then(|d| visited.get(&(d, base_ttl))),
            visited.get(&(d_max, base_ttl)),
        ) {
            if relative_delta(prev.objectives[0], top.objectives[0]) > cfg.tau_expand {
                for &t in ttl_column {
                    next.insert((d_max + g.dram_step_gb, t));
                }
            }
        }
    }
    for ((a, oa), (b, ob)) in adjacent_pairs(visited) {
        let perf = relative_delta(oa.objectives[0], ob.objectives[0]) > cfg.tau_perf
            || relative_delta(oa.objectives[1], ob.objectives[1]) > cfg.tau_perf;
        let cost = relative_delta(oa.objectives[2], ob.objectives[2]) > cfg.tau_cost;
        if perf && cost {
            let mid = ((a.0 + b.0) / 2, (a.1 + b.1) / 2);
            if mid != a && mid != b && !visited.contains_key(&mid) {
                next.insert(mid);
            }
        }
    }
    next
}

type Pair<'a> = (((u64, u64), &'a Outcome), ((u64, u64), &'a Outcome));

/// Visited points that are neighbors along one axis with no visited point
/// strictly between them. Each pair appears once, lower point first.
pub(crate) fn adjacent_pairs(visited: &BTreeMap<(u64, u64), Outcome>) -> Vec<Pair<'_>> {
    let mut pairs = Vec::new();
    let mut by_ttl: BTreeMap<u64, Vec<(u64, &Outcome)>> = BTreeMap::new();
    let mut by_dram: BTreeMap<u64, Vec<(u64, &Outcome)>> = BTreeMap::new();
    for (&(d, t), o) in visited {
        by_ttl.entry(t).or_default().push((d, o));
        by_dram.entry(d).or_default().push((t, o));
    }
    for (d, col) in &by_dram {
        for w in col.windows(2) {
            pairs.push((((*d, w[0].0), w[0].1), ((*d, w[1].0), w[1].1)));
        }
    }
    for (t, row) in &by_ttl {
        let mut row = row.clone();
        row.sort_by_key(|x| x.0);
        for w in row.windows(2) {
            pairs.push((((w[0].0, *t), w[0].1), ((w[1].0, *t), w[1].1)));
        }
    }
    pairs
}

/// Frontier members that minimize TTFT, maximize throughput, and minimize cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremePoints {
    pub min_ttft: ParetoPoint,
    pub max_throughput: ParetoPoint,
    pub min_cost: ParetoPoint,
}

pub fn extreme_points(frontier: &[ParetoPoint]) -> Option<ExtremePoints> {
    let pick = |k: usize| {
        frontier
            .iter()
            .min_by(|a, b| {
                a.outcome.objectives[k]
                    .total_cmp(&b.outcome.objectives[k])
                    .then_with(|| lex_cmp(a.objectives(), b.objectives()))
                    .then_with(|| a.config.cmp(&b.config))
            })
            .cloned()
    };
    Some(ExtremePoints {
        min_ttft: pick(0)?,
        max_throughput: pick(1)?,
        min_cost: pick(2)?,
    })
}

/// Writes `dram_gb,ttl_s,medium,mean_ttft_ms,throughput_tps,cost,evaluated_round`.
pub fn write_frontier_csv<W: Write>(points: &[ParetoPoint], w: W) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "dram_gb",
        "ttl_s",
        "medium",
        "mean_ttft_ms",
        "throughput_tps",
        "cost",
        "evaluated_round",
    ])?;
    for p in points {
        let o = &p.outcome.objectives;
        wr.write_record([
            p.config.dram_gb.to_string(),
            p.config.ttl_s.to_string(),
            p.config.medium.clone(),
            o[0].to_string(),
            (-o[1]).to_string(),
            o[2].to_string(),
            p.evaluated_round.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

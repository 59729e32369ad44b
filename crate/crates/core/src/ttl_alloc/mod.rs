//! Per-group disk TTLs that maximize cache hits under a storage budget.
//!
//! For a group with reuse intervals Δ and |B| unique blocks, a TTL `t` yields
//! `H(t) = #{δ ≤ t}` hits at a storage cost of `C(t) = |B|·t + Σ min(t, δ)`
//! block-seconds. Each group's ROI-optimal TTL (max H/C) is scaled to the
//! budget to seed a multi-start SQP over a smoothed hit surrogate; the start
//! with the most true hits wins.

mod qp;
mod sqp;

pub use sqp::{constrained_maximize, Eval, SqpOptions, SqpResult};

use crate::prefix_index::SubtreeGrouping;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TtlError {
    #[error("group {group}: reuse interval {value} is negative or not a number")]
    BadInterval { group: usize, value: f64 },
    #[error("group {group} has reuse intervals but no blocks")]
    NoBlocks { group: usize },
    #[error("budget must be positive and finite, got {0}")]
    BadBudget(f64),
    #[error("no groups to allocate")]
    NoGroups,
}

/// Hit and cost curves of one group. Times are seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCurves {
    pub group_id: usize,
    deltas: Vec<f64>,
    prefix: Vec<f64>,
    unique_blocks: u64,
    t_max: f64,
}

pub fn build_curves(group_id: usize, deltas: &[f64], unique_blocks: u64) -> Result<GroupCurves, TtlError> {
    if let Some(&value) = deltas.iter().find(|d| !(**d >= 0.0) || !d.is_finite()) {
        return Err(TtlError::BadInterval { group: group_id, value });
    }
    if !deltas.is_empty() && unique_blocks == 0 {
        return Err(TtlError::NoBlocks { group: group_id });
    }
    let mut sorted = deltas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut prefix = Vec::with_capacity(sorted.len() + 1);
    prefix.push(0.0);
    for d in &sorted {
        prefix.push(prefix.last().unwrap() + d);
    }
    Ok(GroupCurves {
        group_id,
        t_max: sorted.last().copied().unwrap_or(0.0),
        deltas: sorted,
        prefix,
        unique_blocks,
    })
}

/// Curves for every group of a subtree grouping, in group order. Intervals
/// are converted from milliseconds to seconds.
pub fn curves_from_grouping(grouping: &SubtreeGrouping) -> Result<Vec<GroupCurves>, TtlError> {
    grouping
        .groups
        .iter()
        .map(|g| {
            let deltas: Vec<f64> = g.interarrivals_ms.iter().map(|&ms| ms as f64 / 1000.0).collect();
            build_curves(g.group_id, &deltas, g.unique_blocks() as u64)
        })
        .collect()
}

impl GroupCurves {
    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn unique_blocks(&self) -> u64 {
        self.unique_blocks
    }

    /// Largest interval; TTLs beyond it buy no hits.
    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    /// Caps the curve horizon.
    pub fn with_horizon(mut self, cap: f64) -> Self {
        self.t_max = self.t_max.min(cap);
        self
    }

    fn count_le(&self, t: f64) -> usize {
        self.deltas.partition_point(|&d| d <= t)
    }

    /// H(t): intervals no longer than `t`.
    pub fn hits(&self, t: f64) -> u64 {
        self.count_le(t) as u64
    }

    /// C(t) in block-seconds.
    pub fn cost(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let k = self.count_le(t);
        let longer = (self.deltas.len() - k) as f64;
        self.unique_blocks as f64 * t + self.prefix[k] + longer * t
    }

    /// Right derivative of C at `t`.
    pub fn cost_slope(&self, t: f64) -> f64 {
        (self.unique_blocks + (self.deltas.len() - self.count_le(t)) as u64) as f64
    }

    /// Distinct interval values, ascending: the only places H changes.
    pub fn jump_points(&self) -> Vec<f64> {
        let mut v = self.deltas.clone();
        v.dedup();
        v
    }

    /// Width of the logistic ramp replacing each hit step.
    pub fn ramp_width(&self) -> f64 {
        (0.01 * self.t_max).max(1.0)
    }

    /// Smoothed H and its derivative. Each step at δ becomes a logistic ramp
    /// of width `w` that is ~2% complete at δ − w and ~98% complete at δ.
    pub fn smooth_hits(&self, t: f64, w: f64) -> (f64, f64) {
        let k = 8.0 / w;
        let centre = t + 0.5 * w;
        let reach = 30.0 / k;
        let lo = self.deltas.partition_point(|&d| d < centre - reach);
        let hi = self.deltas.partition_point(|&d| d <= centre + reach);
        let mut value = lo as f64;
        let mut slope = 0.0;
        for &d in &self.deltas[lo..hi] {
            let s = 1.0 / (1.0 + (-k * (centre - d)).exp());
            value += s;
            slope += k * s * (1.0 - s);
        }
        (value, slope)
    }
}

/// TTL maximizing H(t)/C(t). Only jump points are candidates: between jumps H
/// is flat while C grows. Ties go to the smaller TTL; a group without
/// intervals gets 0, as does a group whose zero-length intervals are free hits.
pub fn roi_optimal_ttl(c: &GroupCurves) -> f64 {
    let mut best_t = 0.0;
    let mut best: Option<(f64, f64)> = None;
    for t in c.jump_points() {
        let (h, cost) = (c.hits(t) as f64, c.cost(t));
        if cost == 0.0 {
            if h > 0.0 {
                return t;
            }
            continue;
        }
        let better = match best {
            None => true,
            Some((bh, bc)) => h * bc > bh * cost,
        };
        if better {
            best = Some((h, cost));
            best_t = t;
        }
    }
    best_t
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocOptions {
    pub seed: u64,
    /// Cap on the budget scaling factor applied to ROI-optimal TTLs.
    pub alpha_max: f64,
    /// σ of the multiplicative log-normal start perturbation.
    pub perturbation_sigma: f64,
    /// Snap solutions to hit steps, spend leftover budget greedily and run a
    /// reassignment local search on the best start.
    pub polish: bool,
    pub sqp: SqpOptions,
}

impl Default for AllocOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            alpha_max: 10.0,
            perturbation_sigma: 0.5,
            polish: true,
            sqp: SqpOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartReport {
    pub start: Vec<f64>,
    pub solution: Vec<f64>,
    pub hits: u64,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub t_roi: Vec<f64>,
    pub alpha: f64,
    pub t_init: Vec<f64>,
    pub starts: Vec<StartReport>,
    pub best_start: Option<usize>,
    /// No start produced a feasible solution.
    pub infeasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtlSolution {
    /// One TTL per input group, seconds.
    pub ttls: Vec<f64>,
    pub hits: u64,
    pub cost: f64,
    pub budget: f64,
    pub diagnostics: Diagnostics,
}

const FEASIBILITY: f64 = 1e-6;

fn total_cost(groups: &[GroupCurves], t: &[f64]) -> f64 {
    groups.iter().zip(t).map(|(g, &x)| g.cost(x)).sum()
}

fn total_hits(groups: &[GroupCurves], t: &[f64]) -> u64 {
    groups.iter().zip(t).map(|(g, &x)| g.hits(x)).sum()
}

/// Largest common shrink factor that brings `t` within budget.
fn shrink_to_budget(groups: &[GroupCurves], t: &[f64], budget: f64) -> Vec<f64> {
    if total_cost(groups, t) <= budget {
        return t.to_vec();
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let scaled: Vec<f64> = t.iter().map(|x| x * mid).collect();
        if total_cost(groups, &scaled) <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    t.iter().map(|x| x * lo).collect()
}

/// Most candidate step points considered per group during polishing.
const POLISH_CANDIDATES: usize = 256;
/// Sweeps of the reassignment search before giving up on improvement.
const POLISH_SWEEPS: usize = 20;

/// Candidate TTLs per group: zero plus hit steps, thinned to quantiles on
/// long curves.
fn candidates(groups: &[GroupCurves]) -> Vec<Vec<f64>> {
    groups
        .iter()
        .map(|g| {
            let jumps = g.jump_points();
            let mut out = vec![0.0];
            if jumps.len() <= POLISH_CANDIDATES {
                out.extend(jumps.iter().copied().filter(|&j| j > 0.0));
            } else {
                for i in 1..=POLISH_CANDIDATES {
                    let j = jumps[(i * jumps.len()) / POLISH_CANDIDATES - 1];
                    if j > 0.0 && *out.last().unwrap() < j {
                        out.push(j);
                    }
                }
            }
            out
        })
        .collect()
}

/// Repeatedly raises the group whose best higher candidate buys the most
/// hits per unit cost within the remaining budget.
fn fill(groups: &[GroupCurves], cands: &[Vec<f64>], t: &mut [f64], limit: f64) {
    let mut spent = total_cost(groups, t);
    loop {
        let mut pick: Option<(usize, f64, f64, f64)> = None;
        for (g, curve) in groups.iter().enumerate() {
            let (h0, c0) = (curve.hits(t[g]), curve.cost(t[g]));
            let from = cands[g].partition_point(|&j| j <= t[g]);
            for &next in &cands[g][from..] {
                let dc = curve.cost(next) - c0;
                if spent + dc > limit {
                    break;
                }
                let dh = (curve.hits(next) - h0) as f64;
                if dh == 0.0 {
                    continue;
                }
                let ratio = if dc > 0.0 { dh / dc } else { f64::INFINITY };
                if pick.is_none_or(|(_, _, r, _)| ratio > r) {
                    pick = Some((g, next, ratio, dc));
                }
            }
        }
        match pick {
            Some((g, next, _, dc)) => {
                t[g] = next;
                spent += dc;
            }
            None => break,
        }
    }
}

/// Moves every TTL down to the candidate at or below it (never fewer hits
/// on the unthinned curve's steps), then spends leftover budget greedily.
fn snap_and_fill(groups: &[GroupCurves], cands: &[Vec<f64>], t: &mut [f64], budget: f64) {
    let jumps: Vec<Vec<f64>> = groups.iter().map(GroupCurves::jump_points).collect();
    for (g, x) in t.iter_mut().enumerate() {
        let k = jumps[g].partition_point(|&j| j <= *x);
        *x = if k == 0 { 0.0 } else { jumps[g][k - 1] };
    }
    fill(groups, cands, t, budget * (1.0 + FEASIBILITY));
}

/// Pairwise neighborhoods larger than this fall back to lowering a second
/// group just enough to pay for the move.
const PAIR_MOVE_LIMIT: usize = 200_000;

/// Local search over reassignments: set one group (or a pair of groups) to
/// other candidates, refill, and keep the move when total hits grow.
fn improve(groups: &[GroupCurves], cands: &[Vec<f64>], t: &mut Vec<f64>, budget: f64) {
    let limit = budget * (1.0 + FEASIBILITY);
    let n = groups.len();
    let pair_size: usize = (0..n)
        .flat_map(|g| (g + 1..n).map(move |h| (g, h)))
        .map(|(g, h)| cands[g].len() * cands[h].len())
        .sum();
    let exhaustive_pairs = pair_size <= PAIR_MOVE_LIMIT;
    let mut hits = total_hits(groups, t);
    let consider = |option: &mut Vec<f64>, t: &mut Vec<f64>, hits: &mut u64| -> bool {
        if total_cost(groups, option) > limit {
            return false;
        }
        fill(groups, cands, option, limit);
        let h = total_hits(groups, option);
        if h > *hits {
            *hits = h;
            *t = option.clone();
            return true;
        }
        false
    };
    for _ in 0..POLISH_SWEEPS {
        let mut improved = false;
        for g in 0..n {
            for &v in &cands[g] {
                if v == t[g] {
                    continue;
                }
                let mut trial = t.clone();
                trial[g] = v;
                let over = total_cost(groups, &trial) - limit;
                if over <= 0.0 {
                    improved |= consider(&mut trial, t, &mut hits);
                    continue;
                }
                if exhaustive_pairs {
                    for h in g + 1..n {
                        for &w in &cands[h] {
                            let mut pair = trial.clone();
                            pair[h] = w;
                            improved |= consider(&mut pair, t, &mut hits);
                        }
                    }
                    continue;
                }
                for h in (0..n).filter(|&h| h != g) {
                    let keep = groups[h].cost(trial[h]) - over;
                    if keep < 0.0 {
                        continue;
                    }
                    let k = cands[h].partition_point(|&j| groups[h].cost(j) <= keep);
                    if k == 0 {
                        continue;
                    }
                    let mut lowered = trial.clone();
                    lowered[h] = cands[h][k - 1];
                    improved |= consider(&mut lowered, t, &mut hits);
                }
            }
        }
        if !improved {
            break;
        }
    }
}

/// Work bound (groups × hit levels × candidates) for the exact polish.
const EXACT_POLISH_LIMIT: usize = 20_000_000;

/// Best assignment restricted to candidate TTLs, by dynamic programming on
/// the cheapest way to collect each total hit count. `None` when the table
/// would exceed the work bound.
fn best_on_candidates(groups: &[GroupCurves], cands: &[Vec<f64>], budget: f64) -> Option<Vec<f64>> {
    let total: usize = groups.iter().map(|g| g.deltas.len()).sum();
    let width: usize = cands.iter().map(Vec::len).sum();
    if total.saturating_mul(width) > EXACT_POLISH_LIMIT {
        return None;
    }
    let limit = budget * (1.0 + FEASIBILITY);
    let mut cheapest = vec![f64::INFINITY; total + 1];
    cheapest[0] = 0.0;
    let mut reach = 0;
    let mut choice: Vec<Vec<u32>> = Vec::with_capacity(groups.len());
    for (g, curve) in groups.iter().enumerate() {
        let options: Vec<(usize, f64)> = cands[g]
            .iter()
            .map(|&t| (curve.hits(t) as usize, curve.cost(t)))
            .collect();
        let mut next = vec![f64::INFINITY; total + 1];
        let mut pick = vec![u32::MAX; total + 1];
        for h in 0..=reach {
            if cheapest[h] > limit {
                continue;
            }
            for (k, &(dh, dc)) in options.iter().enumerate() {
                let c = cheapest[h] + dc;
                if c < next[h + dh] && c <= limit {
                    next[h + dh] = c;
                    pick[h + dh] = k as u32;
                }
            }
        }
        reach += curve.deltas.len();
        cheapest = next;
        choice.push(pick);
    }
    let mut h = (0..=total).rev().find(|&h| cheapest[h].is_finite())?;
    let mut t = vec![0.0; groups.len()];
    for g in (0..groups.len()).rev() {
        let k = choice[g][h] as usize;
        t[g] = cands[g][k];
        h -= groups[g].hits(t[g]) as usize;
    }
    Some(t)
}

/// Allocates one TTL per group so that total cost stays within `budget`
/// (block-seconds) and total hits are maximized.
pub fn allocate_ttls(groups: &[GroupCurves], budget: f64, opts: &AllocOptions) -> Result<TtlSolution, TtlError> {
    if groups.is_empty() {
        return Err(TtlError::NoGroups);
    }
    if !(budget > 0.0) || !budget.is_finite() {
        return Err(TtlError::BadBudget(budget));
    }
    let n = groups.len();
    let t_roi: Vec<f64> = groups.iter().map(roi_optimal_ttl).collect();
    let unscaled = total_cost(groups, &t_roi);
    let alpha = if unscaled > 0.0 {
        (budget / unscaled).min(opts.alpha_max)
    } else {
        opts.alpha_max
    };
    let t_init: Vec<f64> = t_roi.iter().map(|t| alpha * t).collect();

    let k = n - 1;
    let perturbed = (k as f64).sqrt().floor() as usize + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = vec![t_init.clone()];
    for _ in 0..perturbed {
        starts.push(
            t_init
                .iter()
                .map(|&t| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (t * (opts.perturbation_sigma * z).exp()).max(0.0)
                })
                .collect(),
        );
    }

    // Solve in scaled units: TTLs over the longest horizon, hits over the
    // total, cost over the budget.
    let scale = groups.iter().map(|g| g.t_max).fold(1.0, f64::max);
    let hit_norm = groups.iter().map(|g| g.deltas.len()).sum::<usize>().max(1) as f64;
    let widths: Vec<f64> = groups.iter().map(GroupCurves::ramp_width).collect();
    let lower = vec![0.0; n];
    let upper: Vec<f64> = groups.iter().map(|g| g.t_max / scale).collect();
    let objective = |x: &[f64]| -> Eval {
        let mut v = 0.0;
        let mut grad = vec![0.0; n];
        for (g, curve) in groups.iter().enumerate() {
            let (h, dh) = curve.smooth_hits(x[g] * scale, widths[g]);
            v += h / hit_norm;
            grad[g] = dh * scale / hit_norm;
        }
        (v, grad)
    };
    let constraint = |x: &[f64]| -> Eval {
        let mut spent = 0.0;
        let mut grad = vec![0.0; n];
        for (g, curve) in groups.iter().enumerate() {
            let t = x[g] * scale;
            spent += curve.cost(t);
            grad[g] = -curve.cost_slope(t) * scale / budget;
        }
        ((budget - spent) / budget, grad)
    };

    let cands = candidates(groups);
    let mut reports = Vec::with_capacity(starts.len());
    let mut best: Option<(usize, Vec<f64>, u64)> = None;
    for (i, start) in starts.iter().enumerate() {
        let x0: Vec<f64> = start.iter().map(|t| t / scale).collect();
        let r = constrained_maximize(objective, constraint, &x0, &lower, &upper, &opts.sqp);
        let raw: Vec<f64> = r.x.iter().map(|x| (x * scale).max(0.0)).collect();
        let mut t = shrink_to_budget(groups, &raw, budget);
        if opts.polish {
            snap_and_fill(groups, &cands, &mut t, budget);
        }
        let cost = total_cost(groups, &t);
        let feasible = cost <= budget * (1.0 + FEASIBILITY);
        let hits = total_hits(groups, &t);
        reports.push(StartReport {
            start: start.clone(),
            solution: t.clone(),
            hits,
            cost,
            iterations: r.iterations,
            converged: r.converged,
            feasible,
        });
        if feasible && best.as_ref().is_none_or(|b| hits > b.2) {
            best = Some((i, t, hits));
        }
    }
    let infeasible = best.is_none();
    if opts.polish {
        if let Some((_, t, h)) = best.as_mut() {
            match best_on_candidates(groups, &cands, budget) {
                Some(exact) if total_hits(groups, &exact) > *h => *t = exact,
                Some(_) => {}
                None => improve(groups, &cands, t, budget),
            }
            *h = total_hits(groups, t);
        }
    }
    let (best_start, ttls) = match best {
        Some((i, t, h)) if h > 0 => (Some(i), t),
        Some((i, _, _)) => (Some(i), vec![0.0; n]),
        None => (None, vec![0.0; n]),
    };
    Ok(TtlSolution {
        hits: total_hits(groups, &ttls),
        cost: total_cost(groups, &ttls),
        ttls,
        budget,
        diagnostics: Diagnostics {
            t_roi,
            alpha,
            t_init,
            starts: reports,
            best_start,
            infeasible,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curves(deltas: &[f64], blocks: u64) -> GroupCurves {
        build_curves(0, deltas, blocks).unwrap()
    }

    #[test]
    fn hit_curve_counts() {
        let c = curves(&[1.0, 3.0, 3.0, 7.0], 2);
        assert_eq!(c.hits(0.0), 0);
        assert_eq!(c.hits(3.0), 3);
        assert_eq!(c.hits(f64::INFINITY), 4);
    }

    #[test]
    fn cost_curve_term_by_term() {
        let c = curves(&[1.0, 3.0, 3.0, 7.0], 2);
        assert_eq!(c.cost(3.0), 16.0);
        assert_eq!(c.cost(0.0), 0.0);
    }

    #[test]
    fn empty_group() {
        let c = curves(&[], 3);
        assert_eq!(c.hits(100.0), 0);
        assert_eq!(c.cost(5.0), 15.0);
        assert_eq!(roi_optimal_ttl(&c), 0.0);
    }

    #[test]
    fn negative_interval_rejected() {
        assert!(matches!(build_curves(4, &[1.0, -2.0], 1), Err(TtlError::BadInterval { group: 4, .. })));
    }

    #[test]
    fn roi_on_jump_points() {
        // H/C at 1, 3, 7: 1/6, 3/16, 4/28
        let c = curves(&[1.0, 3.0, 3.0, 7.0], 2);
        assert_eq!(roi_optimal_ttl(&c), 3.0);
        assert_eq!(roi_optimal_ttl(&curves(&[5.0], 1)), 5.0);
    }

    #[test]
    fn generous_budget_buys_every_hit() {
        let g = vec![curves(&[1.0, 3.0, 3.0, 7.0], 1)];
        let s = allocate_ttls(&g, 21.0, &AllocOptions::default()).unwrap();
        assert!(s.ttls[0] >= 7.0, "{:?}", s.ttls);
        assert_eq!(s.hits, 4);
        assert!(s.cost <= 21.0 * (1.0 + 1e-6));
    }

    #[test]
    fn budget_goes_to_the_cheap_group() {
        let g = vec![
            build_curves(0, &[1.0, 1.0, 1.0], 1).unwrap(),
            build_curves(1, &[10.0], 5).unwrap(),
        ];
        let s = allocate_ttls(&g, 6.0, &AllocOptions::default()).unwrap();
        assert_eq!(s.hits, 3);
        assert!(s.ttls[0] >= 1.0 && s.ttls[1] < 10.0, "{:?}", s.ttls);
        assert!(s.cost <= 6.0 * (1.0 + 1e-6));
    }

    #[test]
    fn vanishing_budget() {
        let g = vec![curves(&[0.0, 2.0, 5.0], 2), curves(&[3.0], 1)];
        let eps = 1e-9;
        let s = allocate_ttls(&g, eps, &AllocOptions::default()).unwrap();
        assert!(s.cost <= eps * (1.0 + 1e-6));
        assert!(s.hits <= 1);
    }

    #[test]
    fn starts_follow_group_count() {
        let g: Vec<_> = (0..10).map(|i| curves(&[i as f64 + 1.0], 1)).collect();
        let s = allocate_ttls(&g, 30.0, &AllocOptions::default()).unwrap();
        // t_init plus ⌊√9⌋ + 1 perturbed starts
        assert_eq!(s.diagnostics.starts.len(), 5);
    }

    #[test]
    fn smooth_hits_track_steps() {
        let c = curves(&[10.0, 20.0], 1);
        let w = c.ramp_width();
        let (at_step, _) = c.smooth_hits(10.0, w);
        let (before, _) = c.smooth_hits(10.0 - 2.0 * w, w);
        assert!(at_step > 0.95 && at_step < 1.05);
        assert!(before < 0.01);
    }

    #[test]
    fn local_search_never_loses_hits() {
        let groups = vec![
            curves(&[71.0, 46.0, 40.0, 99.0, 65.0, 41.0, 54.0, 61.0], 2),
            curves(&[25.0, 43.0, 78.0, 54.0, 63.0, 14.0, 75.0, 62.0], 3),
            curves(&[71.0, 62.0, 24.0, 63.0, 18.0, 92.0, 17.0], 2),
        ];
        let cands = candidates(&groups);
        let mut t = vec![71.0, 14.0, 0.0];
        let before = total_hits(&groups, &t);
        improve(&groups, &cands, &mut t, 798.0);
        assert!(total_hits(&groups, &t) >= before);
        assert!(total_cost(&groups, &t) <= 798.0);
        let exact = best_on_candidates(&groups, &cands, 798.0).unwrap();
        assert_eq!(total_hits(&groups, &exact), 10);
        assert!(total_hits(&groups, &exact) >= total_hits(&groups, &t));
    }
}

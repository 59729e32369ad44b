//! Synthetic workload generator.
//!
//! Every request draws from its own ChaCha stream (`seed`, request index), so
//! per-request draws do not depend on how many values earlier requests
//! consumed.

use super::{BlockHash, Trace, TraceError, TraceRequest};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, LogNormal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArrivalProcess {
    Poisson {
        rate_per_s: f64,
    },
    /// Poisson arrivals whose rate alternates between an "on" and an "off"
    /// phase of fixed lengths.
    Bursty {
        on_rate_per_s: f64,
        off_rate_per_s: f64,
        on_ms: f64,
        off_ms: f64,
    },
}

impl ArrivalProcess {
    pub fn mean_rate_per_s(&self) -> f64 {
        match *self {
            ArrivalProcess::Poisson { rate_per_s } => rate_per_s,
            ArrivalProcess::Bursty {
                on_rate_per_s,
                off_rate_per_s,
                on_ms,
                off_ms,
            } => (on_rate_per_s * on_ms + off_rate_per_s * off_ms) / (on_ms + off_ms),
        }
    }

    fn rate_at(&self, t_ms: f64) -> (f64, f64) {
        // (rate per ms, end of the current constant-rate phase)
        match *self {
            ArrivalProcess::Poisson { rate_per_s } => (rate_per_s / 1000.0, f64::INFINITY),
            ArrivalProcess::Bursty {
                on_rate_per_s,
                off_rate_per_s,
                on_ms,
                off_ms,
            } => {
                let period = on_ms + off_ms;
                let cycle_start = (t_ms / period).floor() * period;
                let phase = t_ms - cycle_start;
                if phase < on_ms {
                    (on_rate_per_s / 1000.0, cycle_start + on_ms)
                } else {
                    (off_rate_per_s / 1000.0, cycle_start + period)
                }
            }
        }
    }

    /// Next arrival after `t_ms` for a piecewise-constant-rate Poisson process.
    fn next_arrival<R: Rng>(&self, t_ms: f64, rng: &mut R) -> f64 {
        let mut t = t_ms;
        loop {
            let (rate, phase_end) = self.rate_at(t);
            if rate <= 0.0 {
                t = phase_end;
                continue;
            }
            let gap = Exp::new(rate).expect("positive rate").sample(rng);
            if t + gap < phase_end {
                return t + gap;
            }
            t = phase_end;
        }
    }
}

/// Shared system-prompt subtrees. Fresh requests pick one with Zipf weights
/// `1 / rank^zipf_exponent` (with probability `shared_fraction`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefixPool {
    pub subtrees: usize,
    pub zipf_exponent: f64,
    pub prefix_blocks: LengthRange,
    #[serde(default = "one")]
    pub shared_fraction: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GapDistribution {
    Exponential { mean_ms: f64 },
    LogNormal { median_ms: f64, sigma: f64 },
}

impl GapDistribution {
    fn sample<R: Rng>(&self, rng: &mut R) -> Result<f64, TraceError> {
        Ok(match *self {
            GapDistribution::Exponential { mean_ms } => {
                if mean_ms <= 0.0 {
                    return Ok(0.0);
                }
                Exp::new(1.0 / mean_ms)
                    .map_err(|e| TraceError::InvalidSpec(e.to_string()))?
                    .sample(rng)
            }
            GapDistribution::LogNormal { median_ms, sigma } => {
                LogNormal::new(median_ms.max(f64::MIN_POSITIVE).ln(), sigma)
                    .map_err(|e| TraceError::InvalidSpec(e.to_string()))?
                    .sample(rng)
            }
        })
    }
}

/// Multi-turn sessions: with probability `multi_turn_prob` a request continues
/// the latest request that arrived at least one sampled gap earlier, reusing
/// its whole block chain as prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionModel {
    pub multi_turn_prob: f64,
    pub gap: GapDistribution,
    /// Sessions restart once the chain would exceed this many blocks.
    pub max_context_blocks: usize,
}

/// Inclusive uniform integer range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthRange {
    pub min: u32,
    pub max: u32,
}

impl LengthRange {
    fn sample<R: Rng>(&self, rng: &mut R) -> u32 {
        rng.random_range(self.min..=self.max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTraceSpec {
    pub request_count: usize,
    pub arrival_process: ArrivalProcess,
    pub prefix_pool: PrefixPool,
    pub session_model: SessionModel,
    /// Unique (non-shared) blocks appended per request.
    pub input_length: LengthRange,
    pub output_length: LengthRange,
    pub seed: u64,
}

impl SyntheticTraceSpec {
    pub fn validate(&self) -> Result<(), TraceError> {
        let bad = |m: &str| Err(TraceError::InvalidSpec(m.to_string()));
        let rates_ok = match self.arrival_process {
            ArrivalProcess::Poisson { rate_per_s } => rate_per_s >= 0.0 && rate_per_s.is_finite(),
            ArrivalProcess::Bursty {
                on_rate_per_s,
                off_rate_per_s,
                on_ms,
                off_ms,
            } => {
                on_rate_per_s >= 0.0
                    && off_rate_per_s >= 0.0
                    && on_ms >= 0.0
                    && off_ms >= 0.0
                    && on_ms + off_ms > 0.0
            }
        };
        if !rates_ok {
            return bad("arrival rates and phase lengths must be nonnegative");
        }
        if self.request_count > 0 && self.arrival_process.mean_rate_per_s() <= 0.0 {
            return bad("arrival rate is zero but request_count is nonzero");
        }
        let p = &self.prefix_pool;
        if p.zipf_exponent < 0.0 || !(0.0..=1.0).contains(&p.shared_fraction) {
            return bad("zipf_exponent must be >= 0 and shared_fraction in [0, 1]");
        }
        if p.shared_fraction > 0.0 && p.subtrees == 0 {
            return bad("shared_fraction > 0 requires at least one subtree");
        }
        let s = &self.session_model;
        if !(0.0..=1.0).contains(&s.multi_turn_prob) {
            return bad("multi_turn_prob must lie in [0, 1]");
        }
        for (name, r) in [
            ("prefix_blocks", p.prefix_blocks),
            ("input_length", self.input_length),
            ("output_length", self.output_length),
        ] {
            if r.min > r.max {
                return Err(TraceError::InvalidSpec(format!("{name}: min exceeds max")));
            }
        }
        if self.input_length.min == 0 && p.prefix_blocks.min == 0 {
            return bad("requests could end up with zero input blocks");
        }
        if self.output_length.min == 0 {
            return bad("output_length.min must be at least 1");
        }
        Ok(())
    }

    fn stream(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }
}

fn mix(mut x: u64) -> u64 {
    // splitmix64 finalizer
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Salted chain hash: the hash of a block folds in its parent's hash.
fn chain_hash(parent: u64, kind: u64, a: u64, b: u64) -> u64 {
    mix(parent ^ mix(kind ^ mix(a ^ mix(b))))
}

fn to_hash(h: u64) -> BlockHash {
    BlockHash::new(format!("{h:016x}"))
}

struct Built {
    arrival_ms: u64,
    blocks: Vec<BlockHash>,
    tail: u64,
    output_tokens: u32,
}

/// Generates a trace from `spec`. Pure function of the spec.
pub fn generate_trace(spec: &SyntheticTraceSpec) -> Result<Trace, TraceError> {
    spec.validate()?;
    let n = spec.request_count;
    let mut metadata = BTreeMap::new();
    metadata.insert("generator".to_string(), "synthetic".to_string());
    metadata.insert("seed".to_string(), spec.seed.to_string());
    if n == 0 {
        return Ok(Trace {
            requests: Vec::new(),
            duration_ms: 0,
            metadata,
        });
    }

    // Arrival draws come first in every request stream.
    let mut rngs: Vec<ChaCha8Rng> = (0..=n as u64).map(|i| spec.stream(i)).collect();
    let mut arrivals_f = Vec::with_capacity(n + 1);
    let mut t = 0.0;
    for rng in rngs.iter_mut() {
        t = spec.arrival_process.next_arrival(t, rng);
        arrivals_f.push(t);
    }
    let window_end = arrivals_f[n];
    // The first arrival anchors the trace at t = 0.
    let origin = arrivals_f[0];
    let arrivals: Vec<u64> = arrivals_f[..n]
        .iter()
        .map(|a| (a - origin).floor() as u64)
        .collect();
    let duration_ms = (window_end - origin).floor() as u64;

    let pool = &spec.prefix_pool;
    let subtree_pick = if pool.subtrees > 0 {
        let weights: Vec<f64> = (1..=pool.subtrees)
            .map(|rank| (rank as f64).powf(-pool.zipf_exponent))
            .collect();
        Some(WeightedIndex::new(&weights).map_err(|e| TraceError::InvalidSpec(e.to_string()))?)
    } else {
        None
    };
    // Subtree prompt lengths come from dedicated streams past the request streams.
    let subtree_len: Vec<u32> = (0..pool.subtrees as u64)
        .map(|s| pool.prefix_blocks.sample(&mut spec.stream(u64::MAX - s)))
        .collect();

    let mut built: Vec<Built> = Vec::with_capacity(n);
    for (i, rng) in rngs.iter_mut().take(n).enumerate() {
        let arrival = arrivals[i];
        let follow_up = rng.random_bool(spec.session_model.multi_turn_prob);
        let gap = spec.session_model.gap.sample(rng)?;
        let suffix = spec.input_length.sample(rng);
        let output = spec.output_length.sample(rng);
        let shared = rng.random_bool(pool.shared_fraction);
        let subtree = subtree_pick.as_ref().map(|w| w.sample(rng));

        let predecessor = if follow_up {
            let target = arrival as f64 - gap;
            // Latest earlier request that arrived at or before `target`.
            let idx = built.partition_point(|b| (b.arrival_ms as f64) <= target);
            idx.checked_sub(1).filter(|&j| {
                built[j].blocks.len() + suffix as usize <= spec.session_model.max_context_blocks
            })
        } else {
            None
        };

        let (mut blocks, mut tail) = match predecessor {
            Some(j) => (built[j].blocks.clone(), built[j].tail),
            None => {
                let mut blocks = Vec::new();
                let mut tail = 0u64;
                if let (true, Some(s)) = (shared, subtree) {
                    for b in 0..subtree_len[s] as u64 {
                        tail = chain_hash(tail, 1, s as u64, b);
                        blocks.push(to_hash(tail));
                    }
                }
                (blocks, tail)
            }
        };
        let mut extra = suffix as u64;
        if blocks.is_empty() && extra == 0 {
            extra = 1;
        }
        for b in 0..extra {
            tail = chain_hash(tail, 2, i as u64, b);
            blocks.push(to_hash(tail));
        }
        built.push(Built {
            arrival_ms: arrival,
            blocks,
            tail,
            output_tokens: output,
        });
    }

    let requests = built
        .into_iter()
        .enumerate()
        .map(|(i, b)| TraceRequest {
            request_id: format!("req-{i:07}"),
            arrival_ms: b.arrival_ms,
            input_blocks: b.blocks,
            output_tokens: b.output_tokens,
        })
        .collect();
    Trace::new(requests, duration_ms, metadata)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(count: usize, seed: u64) -> SyntheticTraceSpec {
        SyntheticTraceSpec {
            request_count: count,
            arrival_process: ArrivalProcess::Poisson { rate_per_s: 10.0 },
            prefix_pool: PrefixPool {
                subtrees: 8,
                zipf_exponent: 1.1,
                prefix_blocks: LengthRange { min: 4, max: 12 },
                shared_fraction: 0.9,
            },
            session_model: SessionModel {
                multi_turn_prob: 0.3,
                gap: GapDistribution::Exponential { mean_ms: 2000.0 },
                max_context_blocks: 64,
            },
            input_length: LengthRange { min: 1, max: 6 },
            output_length: LengthRange { min: 1, max: 32 },
            seed,
        }
    }

    #[test]
    fn zero_count_gives_empty_trace() {
        let t = generate_trace(&small_spec(0, 1)).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn same_seed_same_bytes() {
        let spec = small_spec(500, 7);
        let mut a = Vec::new();
        let mut b = Vec::new();
        generate_trace(&spec).unwrap().write_jsonl(&mut a).unwrap();
        generate_trace(&spec).unwrap().write_jsonl(&mut b).unwrap();
        assert_eq!(a, b);
        let mut c = Vec::new();
        generate_trace(&small_spec(500, 8))
            .unwrap()
            .write_jsonl(&mut c)
            .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_rate_with_requests_is_an_error() {
        let mut spec = small_spec(10, 1);
        spec.arrival_process = ArrivalProcess::Poisson { rate_per_s: 0.0 };
        assert!(matches!(generate_trace(&spec), Err(TraceError::InvalidSpec(_))));
    }

    #[test]
    fn poisson_mean_interarrival_matches_rate() {
        let t = generate_trace(&small_spec(100_000, 3)).unwrap();
        let first = t.requests.first().unwrap().arrival_ms as f64;
        let last = t.requests.last().unwrap().arrival_ms as f64;
        let mean_gap = (last - first) / (t.len() - 1) as f64;
        assert!((mean_gap - 100.0).abs() <= 5.0, "mean gap {mean_gap}");
        let rate = t.len() as f64 / (t.duration_ms as f64 / 1000.0);
        assert!((rate - 10.0).abs() <= 1.0, "rate {rate}");
    }

    #[test]
    fn bursty_rate_averages_phases() {
        let mut spec = small_spec(20_000, 5);
        spec.arrival_process = ArrivalProcess::Bursty {
            on_rate_per_s: 30.0,
            off_rate_per_s: 2.0,
            on_ms: 10_000.0,
            off_ms: 30_000.0,
        };
        let t = generate_trace(&spec).unwrap();
        let rate = t.len() as f64 / (t.duration_ms as f64 / 1000.0);
        assert!((rate - 9.0).abs() <= 0.9, "rate {rate}");
    }

    #[test]
    fn follow_up_turns_extend_a_predecessor() {
        let mut spec = small_spec(2000, 11);
        spec.session_model.multi_turn_prob = 1.0;
        let t = generate_trace(&spec).unwrap();
        let mut extended = 0;
        for (i, r) in t.requests.iter().enumerate() {
            let earlier = &t.requests[..i];
            if earlier.iter().any(|p| {
                p.input_blocks.len() < r.input_blocks.len()
                    && r.input_blocks.starts_with(&p.input_blocks)
            }) {
                extended += 1;
            }
        }
        assert!(extended > 1500, "only {extended} follow-ups found");
    }
}

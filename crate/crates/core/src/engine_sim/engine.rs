//! Event loop of one engine instance.

use super::{kernel_time, CompletionRecord, ComputeConfig, Phase, SimError, StorageConfig, TtlPolicy};
use crate::tiered_store::{
    ttl_seconds_to_us, BlockId, Direction, Tier, TieredStore, TtlTable, BYTES_PER_MB,
};
use crate::trace::{BlockHash, Trace, TOKENS_PER_BLOCK};
use std::collections::{HashMap, VecDeque};

const BLOCK_TOKENS: u64 = TOKENS_PER_BLOCK;

/// Trace blocks mapped to dense ids (in hash order) plus the TTL table.
pub(super) struct Interned {
    pub ids: Vec<Vec<BlockId>>,
    pub ttl: TtlTable,
}

impl Interned {
    pub fn new(trace: &Trace, policy: &TtlPolicy) -> Self {
        let mut hashes: Vec<&BlockHash> = trace
            .requests
            .iter()
            .flat_map(|r| r.input_blocks.iter())
            .collect();
        hashes.sort_unstable();
        hashes.dedup();
        let index: HashMap<&BlockHash, u32> = hashes
            .iter()
            .enumerate()
            .map(|(i, &h)| (h, i as u32))
            .collect();
        let ids: Vec<Vec<BlockId>> = trace
            .requests
            .iter()
            .map(|r| r.input_blocks.iter().map(|h| BlockId(index[h])).collect())
            .collect();
        let ttl = match policy {
            TtlPolicy::Fixed { ttl_s } => {
                TtlTable::Uniform(ttl_s.and_then(ttl_seconds_to_us))
            }
            TtlPolicy::Group { groups } => {
                let mut residual = None;
                let mut by_root: HashMap<&BlockHash, Option<u64>> = HashMap::new();
                for g in groups {
                    let t = ttl_seconds_to_us(g.ttl_s);
                    match &g.root {
                        Some(root) => {
                            by_root.insert(root, t);
                        }
                        None => residual = t,
                    }
                }
                let mut ttl_us: Vec<Option<Option<u64>>> = vec![None; hashes.len()];
                for (r, blocks) in trace.requests.iter().zip(&ids) {
                    let t = by_root
                        .get(&r.input_blocks[0])
                        .copied()
                        .unwrap_or(residual);
                    for b in blocks {
                        ttl_us[b.0 as usize].get_or_insert(t);
                    }
                }
                TtlTable::PerBlock {
                    ttl_us: ttl_us.into_iter().map(|t| t.unwrap_or(residual)).collect(),
                    default: residual,
                }
            }
        };
        Self { ids, ttl }
    }
}

pub(super) struct InstanceRun {
    pub store: TieredStore,
    pub completions: Vec<CompletionRecord>,
    pub end_us: u64,
    pub busy_s: f64,
    pub stall_s: f64,
    pub clamped: u64,
}

struct Waiting {
    idx: usize,
    arrival_us: u64,
    /// Prefix length found in HBM at arrival.
    hbm: usize,
    /// Prefix length found in HBM or DRAM at arrival.
    fast: usize,
    /// Prefix length found in any tier at arrival; `[..all]` is pinned.
    all: usize,
    /// Prefetch reads as (block offset from `fast`, start, end).
    reads: Vec<(usize, u64, u64)>,
}

struct Running {
    idx: usize,
    arrival_us: u64,
    scheduled_us: u64,
    ready_us: u64,
    reused: usize,
    hbm_tokens: u64,
    dram_tokens: u64,
    disk_tokens: u64,
    prefetch_issued: u64,
    remaining_prefill: u64,
    context: u64,
    first_token_us: Option<u64>,
    decode_left: u64,
    footprint: u64,
}

struct Step {
    end: u64,
    prefill: Vec<(usize, u64)>,
    decode: Vec<usize>,
}

struct Instance<'a> {
    id: usize,
    trace: &'a Trace,
    interned: &'a Interned,
    compute: &'a ComputeConfig,
    store: TieredStore,
    block_bytes: u64,
    stall_on_dram_load: bool,
    queue: VecDeque<Waiting>,
    running: Vec<Running>,
    hbm_used: u64,
    completions: Vec<CompletionRecord>,
    end_us: u64,
    busy_s: f64,
    stall_s: f64,
    clamped: u64,
}

pub(super) fn run_instance(
    id: usize,
    members: &[usize],
    trace: &Trace,
    interned: &Interned,
    storage: &StorageConfig,
    compute: &ComputeConfig,
) -> Result<InstanceRun, SimError> {
    let block_bytes = compute.block_bytes();
    let dram = storage.dram_spec();
    let stall_on_dram_load =
        (dram.effective_bandwidth() as f64) < storage.dram_overlap_min_bandwidth_mbps * BYTES_PER_MB;
    let store = TieredStore::new(block_bytes, dram, storage.disk_spec(), interned.ttl.clone());
    let mut inst = Instance {
        id,
        trace,
        interned,
        compute,
        store,
        block_bytes,
        stall_on_dram_load,
        queue: VecDeque::new(),
        running: Vec::new(),
        hbm_used: 0,
        completions: Vec::with_capacity(members.len()),
        end_us: 0,
        busy_s: 0.0,
        stall_s: 0.0,
        clamped: 0,
    };
    let arrival = |i: usize| trace.requests[i].arrival_ms * 1000;
    let mut next = 0;
    let mut step: Option<Step> = None;
    loop {
        let t_arr = members.get(next).map(|&i| arrival(i));
        let t_step = step.as_ref().map(|s| s.end);
        match (t_arr, t_step) {
            (None, None) => break,
            (Some(a), s) if s.is_none_or(|e| a <= e) => {
                inst.store.expire(a)?;
                while next < members.len() && arrival(members[next]) == a {
                    inst.arrive(members[next], a)?;
                    next += 1;
                }
                if step.is_none() {
                    step = inst.start_step(a)?;
                }
            }
            (_, Some(e)) => {
                inst.store.expire(e)?;
                let done = step.take().expect("step in flight");
                inst.finish_step(done, e)?;
                step = inst.start_step(e)?;
            }
            (Some(_), None) => unreachable!("guard accepts every arrival when idle"),
        }
    }
    Ok(InstanceRun {
        store: inst.store,
        completions: inst.completions,
        end_us: inst.end_us,
        busy_s: inst.busy_s,
        stall_s: inst.stall_s,
        clamped: inst.clamped,
    })
}

impl Instance<'_> {
    fn blocks(&self, idx: usize) -> &[BlockId] {
        &self.interned.ids[idx]
    }

    fn footprint(&self, idx: usize) -> u64 {
        let r = &self.trace.requests[idx];
        (r.input_tokens() + r.output_tokens as u64) * self.compute.bytes_per_token
    }

    fn arrive(&mut self, idx: usize, now: u64) -> Result<(), SimError> {
        let blocks = self.interned.ids[idx].as_slice();
        let hits = self.store.lookup(blocks, now);
        let hbm = hits.hbm;
        let fast = hbm + hits.dram;
        let all = fast + hits.disk;
        self.store.pin(&blocks[..all]);
        let mut reads = Vec::new();
        for (k, &b) in blocks[fast..all].iter().enumerate() {
            if self.store.on_disk(b, now) {
                let start = self.store.peek_transfer(0, Tier::Disk, Direction::Read, now)?;
                let end = self
                    .store
                    .transfer_time(self.block_bytes, Tier::Disk, Direction::Read, now)?;
                reads.push((k, start, end));
            }
        }
        self.queue.push_back(Waiting {
            idx,
            arrival_us: now,
            hbm,
            fast,
            all,
            reads,
        });
        Ok(())
    }

    /// Moves the queue head into the running set, fixing its reuse.
    fn schedule(&mut self, w: Waiting, now: u64) -> Result<(), SimError> {
        let blocks = self.interned.ids[w.idx].as_slice();
        let mut reused = w.fast;
        let mut from_disk = 0u64;
        let mut late_fast = 0u64;
        let read_at: HashMap<usize, u64> = w.reads.iter().map(|&(k, _, e)| (k, e)).collect();
        while reused < blocks.len() {
            let k = reused - w.fast;
            let usable = if reused < w.all {
                match read_at.get(&k) {
                    Some(&end) if end > now => false,
                    Some(_) => {
                        from_disk += 1;
                        true
                    }
                    // fast at arrival and pinned since
                    None => {
                        late_fast += 1;
                        true
                    }
                }
            } else {
                let h = self.store.lookup(&blocks[reused..reused + 1], now);
                let fast = h.hbm + h.dram == 1;
                late_fast += fast as u64;
                fast
            };
            if !usable {
                break;
            }
            reused += 1;
        }
        // withdraw reads that have not finished
        if let Some(pos) = w.reads.iter().position(|&(_, _, e)| e > now) {
            let pending = (w.reads.len() - pos) as u64 * self.block_bytes;
            let (_, start, _) = w.reads[pos];
            let tail = w.reads.last().expect("nonempty").2;
            self.store
                .cancel_tail(Tier::Disk, Direction::Read, tail, start, pending, now);
        }
        self.store.unpin(&blocks[..w.all]);
        self.store.touch(&blocks[..reused], now)?;
        self.store.hbm_acquire(&blocks[..reused]);

        let dram_blocks = (w.fast - w.hbm) as u64 + late_fast;
        let mut ready_us = now;
        if dram_blocks > 0 {
            let done = self.store.transfer_time(
                dram_blocks * self.block_bytes,
                Tier::Dram,
                Direction::Read,
                now,
            )?;
            if self.stall_on_dram_load {
                ready_us = done;
            }
        }
        let input = blocks.len() as u64 * BLOCK_TOKENS;
        let reused_tokens = reused as u64 * BLOCK_TOKENS;
        let footprint = self.footprint(w.idx);
        self.hbm_used += footprint;
        self.running.push(Running {
            idx: w.idx,
            arrival_us: w.arrival_us,
            scheduled_us: now,
            ready_us,
            reused,
            hbm_tokens: w.hbm as u64 * BLOCK_TOKENS,
            dram_tokens: dram_blocks * BLOCK_TOKENS,
            disk_tokens: from_disk * BLOCK_TOKENS,
            prefetch_issued: w.reads.len() as u64,
            remaining_prefill: input - reused_tokens,
            context: reused_tokens,
            first_token_us: None,
            decode_left: 0,
            footprint,
        });
        Ok(())
    }

    fn kernel(&mut self, phase: Phase, a: f64, b: f64) -> Result<f64, SimError> {
        let t = kernel_time(&self.compute.kernel_profile, phase, a, b)?;
        if t.clamped {
            self.clamped += 1;
        }
        Ok(t.seconds)
    }

    fn start_step(&mut self, now: u64) -> Result<Option<Step>, SimError> {
        let mut budget = self.compute.tokens_per_iteration_budget;
        let mut prefill = Vec::new();
        for (i, r) in self.running.iter().enumerate() {
            if r.remaining_prefill > 0 && budget > 0 {
                let chunk = r.remaining_prefill.min(budget);
                budget -= chunk;
                prefill.push((i, chunk));
            }
        }
        while budget > 0 && self.running.len() < self.compute.max_running_requests {
            let Some(head) = self.queue.front() else { break };
            if self.hbm_used + self.footprint(head.idx) > self.compute.hbm_working_capacity_bytes {
                break;
            }
            let w = self.queue.pop_front().expect("head exists");
            self.schedule(w, now)?;
            let i = self.running.len() - 1;
            let rem = self.running[i].remaining_prefill;
            if rem > 0 {
                let chunk = rem.min(budget);
                budget -= chunk;
                prefill.push((i, chunk));
            }
        }
        let decode: Vec<usize> = self
            .running
            .iter()
            .enumerate()
            .filter(|(_, r)| {
                r.remaining_prefill == 0 && (r.first_token_us.is_none() || r.decode_left > 0)
            })
            .map(|(i, _)| i)
            .collect();
        if prefill.is_empty() && decode.is_empty() {
            return Ok(None);
        }
        let mut seconds = 0.0;
        let mut ready = now;
        for &(i, chunk) in &prefill {
            let ctx = self.running[i].context + chunk;
            ready = ready.max(self.running[i].ready_us);
            seconds += self.kernel(Phase::Prefill, chunk as f64, ctx as f64)?;
        }
        if !decode.is_empty() {
            let ctx: u64 = decode.iter().map(|&i| self.running[i].context).sum();
            for &i in &decode {
                ready = ready.max(self.running[i].ready_us);
            }
            let n = decode.len() as f64;
            seconds += self.kernel(Phase::Decode, n, ctx as f64 / n)?;
        }
        let dur = ((seconds * 1e6).round() as u64).max(1);
        self.busy_s += dur as f64 / 1e6;
        self.stall_s += (ready - now) as f64 / 1e6;
        Ok(Some(Step {
            end: ready + dur,
            prefill,
            decode,
        }))
    }

    fn finish_step(&mut self, step: Step, now: u64) -> Result<(), SimError> {
        for &(i, chunk) in &step.prefill {
            let r = &mut self.running[i];
            r.remaining_prefill -= chunk;
            r.context += chunk;
            if r.remaining_prefill == 0 {
                r.first_token_us = Some(now);
                r.decode_left = self.trace.requests[r.idx].output_tokens as u64 - 1;
                let computed = &self.interned.ids[r.idx][r.reused..];
                self.store.hbm_acquire(computed);
            }
        }
        for &i in &step.decode {
            let r = &mut self.running[i];
            if r.first_token_us.is_none() {
                r.first_token_us = Some(now);
                r.decode_left = self.trace.requests[r.idx].output_tokens as u64 - 1;
            } else {
                r.decode_left -= 1;
            }
            r.context += 1;
        }
        let mut k = 0;
        while k < self.running.len() {
            let r = &self.running[k];
            if r.first_token_us.is_some() && r.decode_left == 0 {
                let r = self.running.remove(k);
                self.complete(r, now)?;
            } else {
                k += 1;
            }
        }
        Ok(())
    }

    fn complete(&mut self, r: Running, now: u64) -> Result<(), SimError> {
        let blocks = self.blocks(r.idx).to_vec();
        self.store.hbm_release(&blocks);
        self.hbm_used -= r.footprint;
        let target = [Tier::Dram, Tier::Disk].into_iter().find(|&t| {
            self.store
                .spec(t)
                .is_some_and(|s| s.capacity_bytes >= self.block_bytes)
        });
        if let Some(tier) = target {
            let cap = self.store.spec(tier).expect("cache tier").capacity_bytes;
            let fit = ((cap / self.block_bytes) as usize).min(blocks.len());
            self.store.admit(&blocks[..fit], tier, now)?;
        }
        let req = &self.trace.requests[r.idx];
        let first = r.first_token_us.expect("completed requests have a first token");
        let input = blocks.len() as u64 * BLOCK_TOKENS;
        let reused = r.hbm_tokens + r.dram_tokens + r.disk_tokens;
        self.completions.push(CompletionRecord {
            request_id: req.request_id.clone(),
            instance: self.id,
            arrival_us: r.arrival_us,
            scheduled_us: r.scheduled_us,
            first_token_us: first,
            completion_us: now,
            ttft_ms: (first - r.arrival_us) as f64 / 1e3,
            queue_ms: (r.scheduled_us - r.arrival_us) as f64 / 1e3,
            input_tokens: input,
            hbm_reused_tokens: r.hbm_tokens,
            dram_reused_tokens: r.dram_tokens,
            disk_reused_tokens: r.disk_tokens,
            computed_input_tokens: input - reused,
            output_tokens: req.output_tokens as u64,
            prefetch_issued_blocks: r.prefetch_issued,
        });
        self.end_us = self.end_us.max(now);
        Ok(())
    }
}

//! DRAM/disk KV-block residency with LRU eviction, sliding TTL expiry on the
//! disk tier, FIFO I/O channels and byte-time usage accounting.
//!
//! A block lives in at most one of DRAM or disk. HBM residency is transient:
//! blocks held by running requests are reference counted but are not a cache
//! tier of their own. All times are integer microseconds.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};

pub const BYTES_PER_GB: f64 = 1e9;
pub const BYTES_PER_MB: f64 = 1e6;

/// Dense block identifier. Ids are assigned in lexicographic order of the
/// block hash, so comparing ids compares hashes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BlockId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Hbm,
    Dram,
    Disk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Read,
    Write,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum StoreError {
    #[error("{tier:?} tier has zero capacity")]
    ZeroCapacity { tier: Tier },
    #[error("{bytes} bytes do not fit in the {tier:?} tier ({capacity} bytes)")]
    TooLarge { tier: Tier, bytes: u64, capacity: u64 },
    #[error("{tier:?} tier has zero bandwidth")]
    ZeroBandwidth { tier: Tier },
    #[error("{0:?} is not a cache tier")]
    NotACacheTier(Tier),
    #[error("usage integrals requested before the horizon was closed")]
    NotClosed,
    #[error("time went backwards: {now} < {last}")]
    TimeReversal { now: u64, last: u64 },
}

/// Tier block of the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierConfig {
    pub capacity_gb: f64,
    pub base_bandwidth_mbps: f64,
    #[serde(default)]
    pub bw_slope_mbps_per_gb: f64,
    #[serde(default)]
    pub duplex: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TierSpec {
    pub tier: Tier,
    pub capacity_bytes: u64,
    /// bytes/second
    pub base_bandwidth: f64,
    /// (bytes/second) per byte of provisioned capacity
    pub capacity_bandwidth_slope: f64,
    /// Reads and writes share one channel.
    pub duplex: bool,
}

impl TierSpec {
    pub fn from_config(tier: Tier, c: &TierConfig) -> Self {
        Self {
            tier,
            capacity_bytes: (c.capacity_gb * BYTES_PER_GB).round().max(0.0) as u64,
            base_bandwidth: c.base_bandwidth_mbps * BYTES_PER_MB,
            capacity_bandwidth_slope: c.bw_slope_mbps_per_gb * BYTES_PER_MB / BYTES_PER_GB,
            duplex: c.duplex,
        }
    }

    /// base + slope × capacity, rounded to whole bytes per second.
    pub fn effective_bandwidth(&self) -> u64 {
        (self.base_bandwidth + self.capacity_bandwidth_slope * self.capacity_bytes as f64)
            .round()
            .max(0.0) as u64
    }
}

/// Disk TTL assignment. `None` means blocks never expire.
#[derive(Debug, Clone, PartialEq)]
pub enum TtlTable {
    Uniform(Option<u64>),
    PerBlock {
        ttl_us: Vec<Option<u64>>,
        default: Option<u64>,
    },
}

impl TtlTable {
    pub fn ttl_of(&self, b: BlockId) -> Option<u64> {
        match self {
            TtlTable::Uniform(t) => *t,
            TtlTable::PerBlock { ttl_us, default } => {
                ttl_us.get(b.0 as usize).copied().unwrap_or(*default)
            }
        }
    }
}

/// Seconds (possibly infinite) to whole microseconds.
pub fn ttl_seconds_to_us(ttl_s: f64) -> Option<u64> {
    if ttl_s.is_finite() {
        Some((ttl_s.max(0.0) * 1e6).round() as u64)
    } else {
        None
    }
}

/// Contiguous-prefix hit lengths by tier, in blocks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PrefixHits {
    pub hbm: usize,
    pub dram: usize,
    pub disk: usize,
}

impl PrefixHits {
    pub fn total(&self) -> usize {
        self.hbm + self.dram + self.disk
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvictionOutcome {
    Demoted,
    Dropped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Eviction {
    pub block: BlockId,
    pub from: Tier,
    pub outcome: EvictionOutcome,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdmitOutcome {
    pub evictions: Vec<Eviction>,
    /// Blocks that could not be placed because every candidate victim was pinned.
    pub rejected: Vec<BlockId>,
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    tier: Tier,
    last_access: u64,
    expiry: Option<u64>,
    pins: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TierUsage {
    pub capacity_bytes: u64,
    /// ∫ occupied bytes dt, in byte-seconds.
    pub byte_seconds: f64,
    pub peak_bytes: u64,
    pub resident_bytes: u64,
    pub admitted_bytes: u64,
    pub evicted_bytes: u64,
    pub expired_bytes: u64,
    /// Bytes that left this tier by promotion to another tier.
    pub moved_out_bytes: u64,
    pub bytes_read: u64,
    pub bytes_written: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UsageReport {
    pub horizon_us: u64,
    pub dram: TierUsage,
    pub disk: TierUsage,
}

#[derive(Debug, Clone)]
struct TierState {
    spec: TierSpec,
    used: u64,
    lru: BTreeSet<(u64, BlockId)>,
    integral: u128,
    last_t: u64,
    usage: TierUsage,
}

impl TierState {
    fn new(spec: TierSpec) -> Self {
        let usage = TierUsage {
            capacity_bytes: spec.capacity_bytes,
            ..TierUsage::default()
        };
        Self {
            spec,
            used: 0,
            lru: BTreeSet::new(),
            integral: 0,
            last_t: 0,
            usage,
        }
    }

    fn advance(&mut self, now: u64) {
        if now > self.last_t {
            self.integral += self.used as u128 * (now - self.last_t) as u128;
            self.last_t = now;
        }
    }

    fn add(&mut self, bytes: u64) {
        self.used += bytes;
        self.usage.admitted_bytes += bytes;
    }

    /// Peak is sampled once an operation has settled, so the transient
    /// overshoot before victims are chosen is not recorded.
    fn note_peak(&mut self) {
        self.usage.peak_bytes = self.usage.peak_bytes.max(self.used);
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Channel {
    busy_until: u64,
}

impl Channel {
    fn completion(&self, now: u64, bytes: u64, bw: u64) -> u64 {
        let dur = (bytes as u128 * 1_000_000).div_ceil(bw as u128) as u64;
        now.max(self.busy_until) + dur
    }
}

/// Cache state of one engine instance.
#[derive(Debug, Clone)]
pub struct TieredStore {
    block_bytes: u64,
    dram: TierState,
    disk: TierState,
    ttl: TtlTable,
    entries: HashMap<BlockId, Entry>,
    expiry_index: BTreeSet<(u64, BlockId)>,
    hbm_refs: HashMap<BlockId, u32>,
    dram_channel: Channel,
    disk_read: Channel,
    disk_write: Channel,
    clock: u64,
    closed_at: Option<u64>,
}

impl TieredStore {
    pub fn new(block_bytes: u64, dram: TierSpec, disk: TierSpec, ttl: TtlTable) -> Self {
        Self {
            block_bytes,
            dram: TierState::new(dram),
            disk: TierState::new(disk),
            ttl,
            entries: HashMap::new(),
            expiry_index: BTreeSet::new(),
            hbm_refs: HashMap::new(),
            dram_channel: Channel::default(),
            disk_read: Channel::default(),
            disk_write: Channel::default(),
            clock: 0,
            closed_at: None,
        }
    }

    pub fn block_bytes(&self) -> u64 {
        self.block_bytes
    }

    pub fn spec(&self, tier: Tier) -> Option<&TierSpec> {
        match tier {
            Tier::Dram => Some(&self.dram.spec),
            Tier::Disk => Some(&self.disk.spec),
            Tier::Hbm => None,
        }
    }

    pub fn occupied_bytes(&self, tier: Tier) -> u64 {
        match tier {
            Tier::Dram => self.dram.used,
            Tier::Disk => self.disk.used,
            Tier::Hbm => self.hbm_refs.len() as u64 * self.block_bytes,
        }
    }

    pub fn tier_of(&self, b: BlockId) -> Option<Tier> {
        self.entries.get(&b).map(|e| e.tier)
    }

    pub fn resident_blocks(&self, tier: Tier) -> Vec<BlockId> {
        let mut v: Vec<_> = self
            .entries
            .iter()
            .filter(|(_, e)| e.tier == tier)
            .map(|(&b, _)| b)
            .collect();
        v.sort();
        v
    }

    pub fn expiry_of(&self, b: BlockId) -> Option<u64> {
        self.entries.get(&b).and_then(|e| e.expiry)
    }

    pub fn last_access_of(&self, b: BlockId) -> Option<u64> {
        self.entries.get(&b).map(|e| e.last_access)
    }

    fn tick(&mut self, now: u64) -> Result<(), StoreError> {
        if now < self.clock {
            return Err(StoreError::TimeReversal {
                now,
                last: self.clock,
            });
        }
        self.clock = now;
        self.dram.advance(now);
        self.disk.advance(now);
        Ok(())
    }

    fn state_mut(&mut self, tier: Tier) -> &mut TierState {
        match tier {
            Tier::Dram => &mut self.dram,
            Tier::Disk => &mut self.disk,
            Tier::Hbm => unreachable!("HBM is not a cache tier"),
        }
    }

    fn usable(&self, b: BlockId, now: u64) -> Option<Tier> {
        let e = self.entries.get(&b)?;
        match e.expiry {
            Some(x) if x <= now => None,
            _ => Some(e.tier),
        }
    }

    /// Longest prefixes resident in HBM, HBM∪DRAM and any tier, reported as
    /// per-tier increments. Expired blocks are misses. Does not touch recency.
    pub fn lookup(&self, blocks: &[BlockId], now: u64) -> PrefixHits {
        let hbm = blocks
            .iter()
            .take_while(|b| self.hbm_refs.contains_key(b))
            .count();
        let fast = hbm
            + blocks[hbm..]
                .iter()
                .take_while(|&&b| {
                    self.hbm_refs.contains_key(&b) || self.usable(b, now) == Some(Tier::Dram)
                })
                .count();
        let all = fast
            + blocks[fast..]
                .iter()
                .take_while(|&&b| self.hbm_refs.contains_key(&b) || self.usable(b, now).is_some())
                .count();
        PrefixHits {
            hbm,
            dram: fast - hbm,
            disk: all - fast,
        }
    }

    /// True when `b` is usable from disk at `now`.
    pub fn on_disk(&self, b: BlockId, now: u64) -> bool {
        self.usable(b, now) == Some(Tier::Disk)
    }

    fn detach(&mut self, b: BlockId) -> Option<Entry> {
        let e = self.entries.remove(&b)?;
        let bytes = self.block_bytes;
        let st = self.state_mut(e.tier);
        st.lru.remove(&(e.last_access, b));
        st.used -= bytes;
        if let Some(x) = e.expiry {
            self.expiry_index.remove(&(x, b));
        }
        Some(e)
    }

    fn attach(&mut self, b: BlockId, tier: Tier, last_access: u64, pins: u32) {
        let expiry = match tier {
            Tier::Disk => self.ttl.ttl_of(b).map(|t| last_access.saturating_add(t)),
            _ => None,
        };
        if let Some(x) = expiry {
            self.expiry_index.insert((x, b));
        }
        let bytes = self.block_bytes;
        let st = self.state_mut(tier);
        st.lru.insert((last_access, b));
        st.add(bytes);
        self.entries.insert(
            b,
            Entry {
                tier,
                last_access,
                expiry,
                pins,
            },
        );
    }

    fn check_tier(&self, tier: Tier, bytes: u64) -> Result<(), StoreError> {
        let cap = self
            .spec(tier)
            .ok_or(StoreError::NotACacheTier(tier))?
            .capacity_bytes;
        if cap == 0 {
            return Err(StoreError::ZeroCapacity { tier });
        }
        if self.block_bytes > cap || bytes > cap {
            return Err(StoreError::TooLarge {
                tier,
                bytes: bytes.max(self.block_bytes),
                capacity: cap,
            });
        }
        Ok(())
    }

    /// Places `blocks` in `tier` with `last_access = now`, evicting LRU
    /// victims to make room. DRAM victims are demoted to disk when the disk
    /// can hold them and the write finishes before they would expire.
    pub fn admit(
        &mut self,
        blocks: &[BlockId],
        tier: Tier,
        now: u64,
    ) -> Result<AdmitOutcome, StoreError> {
        self.check_tier(tier, blocks.len() as u64 * self.block_bytes)?;
        self.tick(now)?;
        let mut out = AdmitOutcome::default();
        let mut unique: Vec<BlockId> = Vec::with_capacity(blocks.len());
        for &b in blocks {
            if !unique.contains(&b) {
                unique.push(b);
            }
        }
        for &b in &unique {
            let prev = self.detach(b);
            let pins = prev.map_or(0, |e| e.pins);
            self.attach(b, tier, now, pins + 1);
            let bytes = self.block_bytes;
            match prev {
                Some(e) if e.tier == tier => {
                    // refresh in place, not a new admission
                    self.state_mut(tier).usage.admitted_bytes -= bytes;
                }
                moved => {
                    if let Some(e) = moved {
                        self.state_mut(e.tier).usage.moved_out_bytes += bytes;
                    }
                    if tier == Tier::Disk {
                        self.transfer_time(bytes, Tier::Disk, Direction::Write, now)?;
                    } else {
                        self.dram.usage.bytes_written += bytes;
                    }
                }
            }
        }
        self.make_room(tier, now, &mut out);
        for &b in &unique {
            if let Some(e) = self.entries.get_mut(&b) {
                e.pins -= 1;
            }
        }
        // Anything still over capacity must be dropped from the incoming batch.
        let mut over = self.occupied_bytes(tier) > self.spec(tier).expect("cache tier").capacity_bytes;
        for &b in unique.iter().rev() {
            if !over {
                break;
            }
            if self.entries.get(&b).is_some_and(|e| e.pins == 0) {
                self.detach(b);
                out.rejected.push(b);
                let bytes = self.block_bytes;
                self.state_mut(tier).usage.evicted_bytes += bytes;
            }
            over = self.occupied_bytes(tier) > self.spec(tier).expect("cache tier").capacity_bytes;
        }
        self.dram.note_peak();
        self.disk.note_peak();
        Ok(out)
    }

    fn make_room(&mut self, tier: Tier, now: u64, out: &mut AdmitOutcome) {
        let cap = self.spec(tier).expect("cache tier").capacity_bytes;
        while self.occupied_bytes(tier) > cap {
            let victim = {
                let st = match tier {
                    Tier::Dram => &self.dram,
                    _ => &self.disk,
                };
                st.lru
                    .iter()
                    .map(|&(_, b)| b)
                    .find(|b| self.entries.get(b).is_some_and(|e| e.pins == 0))
            };
            let Some(v) = victim else { break };
            let e = self.detach(v).expect("victim resident");
            let bytes = self.block_bytes;
            self.state_mut(tier).usage.evicted_bytes += bytes;
            let outcome = if tier == Tier::Dram && self.try_demote(v, e.last_access, now, out) {
                EvictionOutcome::Demoted
            } else {
                EvictionOutcome::Dropped
            };
            out.evictions.push(Eviction {
                block: v,
                from: tier,
                outcome,
            });
        }
    }

    fn try_demote(&mut self, b: BlockId, last_access: u64, now: u64, out: &mut AdmitOutcome) -> bool {
        let cap = self.disk.spec.capacity_bytes;
        if cap < self.block_bytes {
            return false;
        }
        let bw = self.disk.spec.effective_bandwidth();
        if bw == 0 {
            return false;
        }
        let expiry = self.ttl.ttl_of(b).map(|t| last_access.saturating_add(t));
        let done = self
            .channel(Tier::Disk, Direction::Write)
            .completion(now, self.block_bytes, bw);
        if expiry.is_some_and(|x| done >= x) {
            return false;
        }
        self.attach(b, Tier::Disk, last_access, 1);
        self.make_room(Tier::Disk, now, out);
        self.entries.get_mut(&b).expect("just attached").pins -= 1;
        if self.disk.used > cap {
            // every other disk block is pinned
            self.detach(b);
            self.disk.usage.evicted_bytes += self.block_bytes;
            return false;
        }
        self.transfer_time(self.block_bytes, Tier::Disk, Direction::Write, now)
            .expect("bandwidth checked");
        true
    }

    /// Renews recency (and disk expiry) of resident blocks: a reuse commit.
    pub fn touch(&mut self, blocks: &[BlockId], now: u64) -> Result<(), StoreError> {
        self.tick(now)?;
        for &b in blocks {
            let Some(e) = self.entries.get(&b).copied() else {
                continue;
            };
            if e.expiry.is_some_and(|x| x <= now) {
                // expired but not yet reclaimed: no revival
                continue;
            }
            let st = self.state_mut(e.tier);
            st.lru.remove(&(e.last_access, b));
            st.lru.insert((now, b));
            let mut expiry = e.expiry;
            if let Some(x) = e.expiry {
                self.expiry_index.remove(&(x, b));
                let nx = self.ttl.ttl_of(b).map(|t| now.saturating_add(t));
                if let Some(nx) = nx {
                    self.expiry_index.insert((nx, b));
                }
                expiry = nx;
            }
            let entry = self.entries.get_mut(&b).expect("resident");
            entry.last_access = now;
            entry.expiry = expiry;
        }
        Ok(())
    }

    pub fn pin(&mut self, blocks: &[BlockId]) {
        for b in blocks {
            if let Some(e) = self.entries.get_mut(b) {
                e.pins += 1;
            }
        }
    }

    pub fn unpin(&mut self, blocks: &[BlockId]) {
        for b in blocks {
            if let Some(e) = self.entries.get_mut(b) {
                e.pins = e.pins.saturating_sub(1);
            }
        }
    }

    pub fn hbm_acquire(&mut self, blocks: &[BlockId]) {
        for &b in blocks {
            *self.hbm_refs.entry(b).or_insert(0) += 1;
        }
    }

    pub fn hbm_release(&mut self, blocks: &[BlockId]) {
        for b in blocks {
            if let Some(c) = self.hbm_refs.get_mut(b) {
                *c -= 1;
                if *c == 0 {
                    self.hbm_refs.remove(b);
                }
            }
        }
    }

    /// Removes every unpinned block whose expiry is at or before `now`.
    /// Byte-time is accounted up to each block's expiry instant.
    pub fn expire(&mut self, now: u64) -> Result<usize, StoreError> {
        self.tick(now)?;
        let due: Vec<(u64, BlockId)> = self
            .expiry_index
            .range(..=(now, BlockId(u32::MAX)))
            .copied()
            .filter(|(_, b)| self.entries.get(b).is_some_and(|e| e.pins == 0))
            .collect();
        for &(x, b) in &due {
            let e = self.detach(b).expect("indexed block is resident");
            let bytes = self.block_bytes;
            let st = self.state_mut(e.tier);
            st.usage.expired_bytes += bytes;
            // charge only up to the expiry instant
            st.integral -= bytes as u128 * (now - x) as u128;
        }
        Ok(due.len())
    }

    /// Bandwidth available to a tier channel in bytes/second.
    fn bandwidth(&self, tier: Tier) -> u64 {
        match tier {
            Tier::Disk => self.disk.spec.effective_bandwidth(),
            // HBM↔DRAM link
            Tier::Dram | Tier::Hbm => self.dram.spec.effective_bandwidth(),
        }
    }

    /// Completion time a transfer would have if issued now, without booking it.
    pub fn peek_transfer(
        &self,
        bytes: u64,
        tier: Tier,
        dir: Direction,
        now: u64,
    ) -> Result<u64, StoreError> {
        let bw = self.bandwidth(tier);
        if bw == 0 {
            return Err(StoreError::ZeroBandwidth { tier });
        }
        Ok(self.channel(tier, dir).completion(now, bytes, bw))
    }

    fn channel(&self, tier: Tier, dir: Direction) -> Channel {
        match (tier, dir, self.disk.spec.duplex) {
            (Tier::Disk, _, true) | (Tier::Disk, Direction::Read, false) => self.disk_read,
            (Tier::Disk, Direction::Write, false) => self.disk_write,
            _ => self.dram_channel,
        }
    }

    fn channel_mut(&mut self, tier: Tier, dir: Direction) -> &mut Channel {
        match (tier, dir, self.disk.spec.duplex) {
            (Tier::Disk, _, true) | (Tier::Disk, Direction::Read, false) => &mut self.disk_read,
            (Tier::Disk, Direction::Write, false) => &mut self.disk_write,
            _ => &mut self.dram_channel,
        }
    }

    fn schedule(&mut self, tier: Tier, dir: Direction, bytes: u64, now: u64) -> Result<u64, StoreError> {
        let done = self.peek_transfer(bytes, tier, dir, now)?;
        self.channel_mut(tier, dir).busy_until = done;
        Ok(done)
    }

    /// Books `bytes` on the tier channel (FIFO) and returns the absolute
    /// completion time.
    pub fn transfer_time(
        &mut self,
        bytes: u64,
        tier: Tier,
        dir: Direction,
        now: u64,
    ) -> Result<u64, StoreError> {
        let done = self.schedule(tier, dir, bytes, now)?;
        let usage = match tier {
            Tier::Disk => &mut self.disk.usage,
            _ => &mut self.dram.usage,
        };
        match dir {
            Direction::Read => usage.bytes_read += bytes,
            Direction::Write => usage.bytes_written += bytes,
        }
        Ok(done)
    }

    /// Withdraws trailing transfers from a channel queue. If the channel is
    /// still busy exactly until `tail` (nothing was queued behind them), it is
    /// rewound to `max(rewind_to, now)` and `bytes` are removed from the
    /// transfer counters. Returns whether the rewind happened.
    pub fn cancel_tail(
        &mut self,
        tier: Tier,
        dir: Direction,
        tail: u64,
        rewind_to: u64,
        bytes: u64,
        now: u64,
    ) -> bool {
        let ch = self.channel_mut(tier, dir);
        if ch.busy_until != tail || tail <= now {
            return false;
        }
        ch.busy_until = rewind_to.max(now);
        let usage = match tier {
            Tier::Disk => &mut self.disk.usage,
            _ => &mut self.dram.usage,
        };
        let counter = match dir {
            Direction::Read => &mut usage.bytes_read,
            Direction::Write => &mut usage.bytes_written,
        };
        *counter = counter.saturating_sub(bytes);
        true
    }

    /// Ends accounting at `horizon_us`.
    pub fn close(&mut self, horizon_us: u64) -> Result<(), StoreError> {
        self.tick(horizon_us.max(self.clock))?;
        self.closed_at = Some(horizon_us.max(self.clock));
        Ok(())
    }

    pub fn usage_integrals(&self) -> Result<UsageReport, StoreError> {
        let horizon = self.closed_at.ok_or(StoreError::NotClosed)?;
        let finish = |st: &TierState| TierUsage {
            byte_seconds: st.integral as f64 / 1e6,
            resident_bytes: st.used,
            ..st.usage.clone()
        };
        Ok(UsageReport {
            horizon_us: horizon,
            dram: finish(&self.dram),
            disk: finish(&self.disk),
        })
    }
}

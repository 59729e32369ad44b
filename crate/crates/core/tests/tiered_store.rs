use kvtier::tiered_store::{
    BlockId, Direction, EvictionOutcome, Tier, TierSpec, TieredStore, TtlTable,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

const MB: u64 = 1_000_000;

fn spec(tier: Tier, blocks: u64) -> TierSpec {
    TierSpec {
        tier,
        capacity_bytes: blocks * MB,
        base_bandwidth: 1e12,
        capacity_bandwidth_slope: 0.0,
        duplex: tier == Tier::Disk,
    }
}

fn store(dram: u64, disk: u64, ttl: TtlTable) -> TieredStore {
    TieredStore::new(MB, spec(Tier::Dram, dram), spec(Tier::Disk, disk), ttl)
}

/// Textbook LRU over (last access, id) with ties going to the smaller id;
/// the block being admitted is never its own victim.
struct ReferenceLru {
    capacity: usize,
    entries: Vec<(u64, u32)>,
}

impl ReferenceLru {
    fn access(&mut self, id: u32, now: u64) -> Vec<u32> {
        self.entries.retain(|&(_, b)| b != id);
        self.entries.push((now, id));
        let mut victims = Vec::new();
        while self.entries.len() > self.capacity {
            let (i, _) = self
                .entries
                .iter()
                .enumerate()
                .filter(|(_, e)| e.1 != id)
                .min_by_key(|(_, e)| **e)
                .unwrap();
            victims.push(self.entries.remove(i).1);
        }
        victims
    }
}

#[test]
fn victims_match_reference_lru() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for capacity in [1, 2, 7, 32] {
        let mut s = store(capacity, 0, TtlTable::Uniform(None));
        let mut oracle = ReferenceLru {
            capacity: capacity as usize,
            entries: Vec::new(),
        };
        let mut now = 0;
        for _ in 0..1000 {
            // repeated timestamps exercise the tie-break
            now += rng.random_range(0..3);
            let id = rng.random_range(0..64);
            let got: Vec<u32> = s
                .admit(&[BlockId(id)], Tier::Dram, now)
                .unwrap()
                .evictions
                .iter()
                .map(|e| {
                    assert_eq!(e.outcome, EvictionOutcome::Dropped);
                    e.block.0
                })
                .collect();
            assert_eq!(got, oracle.access(id, now), "capacity {capacity} at t={now}");
        }
    }
}

#[derive(Clone, Copy)]
struct Placed {
    tier: Tier,
    expiry: Option<u64>,
}

#[test]
fn lookup_matches_residency_map() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ttl = |b: u32| Some(5 + (b as u64 % 7) * 10);
    let table = TtlTable::PerBlock {
        ttl_us: (0..40).map(ttl).collect(),
        default: None,
    };
    // roomy tiers: residency is decided by placement and expiry only
    let mut s = store(1000, 1000, table);
    let mut oracle: HashMap<u32, Placed> = HashMap::new();
    let mut now = 0;
    for _ in 0..2000 {
        now += rng.random_range(0..4);
        let b = rng.random_range(0..40);
        match rng.random_range(0..3) {
            0 => {
                s.admit(&[BlockId(b)], Tier::Dram, now).unwrap();
                oracle.insert(b, Placed { tier: Tier::Dram, expiry: None });
            }
            1 => {
                s.admit(&[BlockId(b)], Tier::Disk, now).unwrap();
                oracle.insert(b, Placed { tier: Tier::Disk, expiry: ttl(b).map(|t| now + t) });
            }
            _ => {
                s.touch(&[BlockId(b)], now).unwrap();
                if let Some(p) = oracle.get_mut(&b) {
                    if p.tier == Tier::Disk && p.expiry.is_some_and(|x| x > now) {
                        p.expiry = ttl(b).map(|t| now + t);
                    }
                }
            }
        }
        if rng.random_bool(0.3) {
            s.expire(now).unwrap();
            oracle.retain(|_, p| p.expiry.is_none_or(|x| x > now));
        }
        let chain: Vec<u32> = (0..rng.random_range(1..8)).map(|_| rng.random_range(0..40)).collect();
        let usable = |b: &u32, tier: Option<Tier>| {
            oracle
                .get(b)
                .is_some_and(|p| p.expiry.is_none_or(|x| x > now) && tier.is_none_or(|t| t == p.tier))
        };
        let dram = chain.iter().take_while(|b| usable(b, Some(Tier::Dram))).count();
        let any = chain.iter().take_while(|b| usable(b, None)).count();
        let ids: Vec<BlockId> = chain.iter().map(|&b| BlockId(b)).collect();
        let h = s.lookup(&ids, now);
        assert_eq!((h.hbm, h.dram, h.disk), (0, dram, any - dram), "chain {chain:?} at t={now}");
    }
}

#[test]
fn expiry_matches_filter_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let ttls: Vec<Option<u64>> = (0..30)
            .map(|_| if rng.random_bool(0.2) { None } else { Some(rng.random_range(0..50)) })
            .collect();
        let mut s = store(0, 100, TtlTable::PerBlock { ttl_us: ttls.clone(), default: None });
        let mut last = HashMap::new();
        let mut now = 0;
        for _ in 0..60 {
            now += rng.random_range(0..5);
            let b = rng.random_range(0..30u32);
            s.expire(now).unwrap();
            last.retain(|&b, &mut t: &mut u64| ttls[b as usize].is_none_or(|ttl| t + ttl > now));
            s.admit(&[BlockId(b)], Tier::Disk, now).unwrap();
            last.insert(b, now);
        }
        let end = now + rng.random_range(0..60);
        s.expire(end).unwrap();
        let mut expect: Vec<BlockId> = last
            .iter()
            .filter(|&(&b, &t)| ttls[b as usize].is_none_or(|ttl| t + ttl > end))
            .map(|(&b, _)| BlockId(b))
            .collect();
        expect.sort();
        assert_eq!(s.resident_blocks(Tier::Disk), expect);
    }
}

#[test]
fn byte_time_matches_interval_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let ttl = rng.random_range(1..40);
        let mut s = store(0, 100, TtlTable::Uniform(Some(ttl)));
        // per block: start of the current residency and its latest access
        let mut open: HashMap<u32, (u64, u64)> = HashMap::new();
        let mut closed: u128 = 0;
        let mut now = 0;
        for _ in 0..80 {
            now += rng.random_range(0..10);
            s.expire(now).unwrap();
            open.retain(|_, &mut (start, last)| {
                if last + ttl <= now {
                    closed += ((last + ttl - start) * MB) as u128;
                    false
                } else {
                    true
                }
            });
            let b = rng.random_range(0..20);
            s.admit(&[BlockId(b)], Tier::Disk, now).unwrap();
            open.entry(b).and_modify(|e| e.1 = now).or_insert((now, now));
        }
        let horizon = now + 5;
        s.expire(horizon).unwrap();
        for &(start, last) in open.values() {
            let end = (last + ttl).min(horizon);
            closed += ((end - start) * MB) as u128;
        }
        s.close(horizon).unwrap();
        let got = s.usage_integrals().unwrap().disk.byte_seconds;
        assert!((got - closed as f64 / 1e6).abs() < 1e-9, "{got} vs {}", closed as f64 / 1e6);
    }
}

#[test]
fn disk_completions_are_fifo() {
    let mut s = store(4, 4, TtlTable::Uniform(None));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut prev = 0;
    let mut now = 0;
    for _ in 0..500 {
        now += rng.random_range(0..1000);
        let dir = if rng.random_bool(0.5) { Direction::Read } else { Direction::Write };
        let done = s.transfer_time(rng.random_range(0..10 * MB), Tier::Disk, dir, now).unwrap();
        assert!(done >= prev && done >= now);
        prev = done;
    }
}

#[derive(Debug, Clone)]
enum Op {
    Admit { blocks: Vec<u32>, disk: bool },
    Touch(u32),
    Pin(u32),
    Unpin,
    Expire,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => (prop::collection::vec(0u32..48, 1..4), any::<bool>())
            .prop_map(|(blocks, disk)| Op::Admit { blocks, disk }),
        1 => (0u32..48).prop_map(Op::Touch),
        1 => (0u32..48).prop_map(Op::Pin),
        1 => Just(Op::Unpin),
        1 => Just(Op::Expire),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn capacity_and_conservation(
        dram in 3u64..10,
        disk in 3u64..12,
        ttl in prop::option::of(0u64..30),
        ops in prop::collection::vec((0u64..4, op()), 1..200),
    ) {
        let mut s = store(dram, disk, TtlTable::Uniform(ttl));
        let mut now = 0;
        let mut pinned: Vec<u32> = Vec::new();
        for (dt, op) in ops {
            now += dt;
            match op {
                Op::Admit { blocks, disk: to_disk } => {
                    let ids: Vec<BlockId> = blocks.iter().map(|&b| BlockId(b)).collect();
                    let tier = if to_disk { Tier::Disk } else { Tier::Dram };
                    s.admit(&ids, tier, now).unwrap();
                }
                Op::Touch(b) => s.touch(&[BlockId(b)], now).unwrap(),
                Op::Pin(b) => {
                    // keep pins sparse so admissions can always make room
                    if pinned.len() < 2 {
                        s.pin(&[BlockId(b)]);
                        pinned.push(b);
                    }
                }
                Op::Unpin => {
                    if let Some(b) = pinned.pop() {
                        s.unpin(&[BlockId(b)]);
                    }
                }
                Op::Expire => {
                    s.expire(now).unwrap();
                }
            }
            prop_assert!(s.occupied_bytes(Tier::Dram) <= dram * MB);
            prop_assert!(s.occupied_bytes(Tier::Disk) <= disk * MB);
        }
        s.close(now).unwrap();
        let u = s.usage_integrals().unwrap();
        for t in [u.dram, u.disk] {
            prop_assert_eq!(
                t.admitted_bytes,
                t.resident_bytes + t.evicted_bytes + t.expired_bytes + t.moved_out_bytes
            );
            prop_assert!(t.peak_bytes <= t.capacity_bytes);
        }
    }

    #[test]
    fn effective_bandwidth_grows_with_capacity(
        base in 1.0f64..1e10,
        slope in 0.0f64..1e4,
        a in 0u64..1 << 40,
        b in 0u64..1 << 40,
    ) {
        let at = |cap: u64| TierSpec {
            tier: Tier::Disk,
            capacity_bytes: cap,
            base_bandwidth: base,
            capacity_bandwidth_slope: slope,
            duplex: true,
        }
        .effective_bandwidth();
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(at(lo) <= at(hi));
    }
}

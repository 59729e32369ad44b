//! Radix tree over block-hash chains.
//!
//! Nodes are logical per-block nodes: the path from the root to a node spells
//! a block chain that appeared as a request prefix. Subtrees rooted at the
//! depth-1 children (first blocks, typically system prompts or session heads)
//! are the unit of group TTL assignment.

use crate::trace::{block_accesses, histogram_of, BlockHash, Trace};
use serde::Serialize;
use std::collections::HashMap;
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(u32);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    fn idx(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone)]
struct Node {
    hash: Option<BlockHash>,
    parent: Option<NodeId>,
    children: HashMap<BlockHash, NodeId>,
    access_count: u64,
    last_access_us: u64,
    depth: u32,
}

#[derive(Debug, Clone)]
pub struct PrefixTree {
    nodes: Vec<Node>,
}

impl Default for PrefixTree {
    fn default() -> Self {
        Self::new()
    }
}

impl PrefixTree {
    pub fn new() -> Self {
        Self {
            nodes: vec![Node {
                hash: None,
                parent: None,
                children: HashMap::new(),
                access_count: 0,
                last_access_us: 0,
                depth: 0,
            }],
        }
    }

    /// Number of block nodes (the root is not counted).
    pub fn node_count(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Length of the longest prefix of `blocks` that is a root path.
    pub fn match_prefix(&self, blocks: &[BlockHash]) -> usize {
        let mut cur = NodeId::ROOT;
        for (i, b) in blocks.iter().enumerate() {
            match self.nodes[cur.idx()].children.get(b) {
                Some(&next) => cur = next,
                None => return i,
            }
        }
        blocks.len()
    }

    /// Inserts `blocks` as a root path, bumping counters along the matched
    /// part. Returns the nodes that had to be created.
    pub fn insert_chain(&mut self, blocks: &[BlockHash], now_us: u64) -> Vec<NodeId> {
        let mut created = Vec::new();
        let mut cur = NodeId::ROOT;
        self.nodes[0].access_count += 1;
        self.nodes[0].last_access_us = now_us;
        for b in blocks {
            let next = match self.nodes[cur.idx()].children.get(b) {
                Some(&next) => {
                    let n = &mut self.nodes[next.idx()];
                    n.access_count += 1;
                    n.last_access_us = now_us;
                    next
                }
                None => {
                    let id = NodeId(self.nodes.len() as u32);
                    let depth = self.nodes[cur.idx()].depth + 1;
                    self.nodes.push(Node {
                        hash: Some(b.clone()),
                        parent: Some(cur),
                        children: HashMap::new(),
                        access_count: 1,
                        last_access_us: now_us,
                        depth,
                    });
                    self.nodes[cur.idx()].children.insert(b.clone(), id);
                    created.push(id);
                    id
                }
            };
            cur = next;
        }
        created
    }

    pub fn hash(&self, id: NodeId) -> Option<&BlockHash> {
        self.nodes[id.idx()].hash.as_ref()
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id.idx()].parent
    }

    pub fn access_count(&self, id: NodeId) -> u64 {
        self.nodes[id.idx()].access_count
    }

    pub fn last_access_us(&self, id: NodeId) -> u64 {
        self.nodes[id.idx()].last_access_us
    }

    pub fn depth(&self, id: NodeId) -> u32 {
        self.nodes[id.idx()].depth
    }

    pub fn children(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes[id.idx()].children.values().copied()
    }

    /// All nodes of the subtree rooted at `id`, including `id`.
    pub fn subtree(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(self.children(n));
        }
        out
    }

    pub fn from_trace(trace: &Trace) -> Self {
        let mut tree = Self::new();
        for r in &trace.requests {
            tree.insert_chain(&r.input_blocks, r.arrival_ms * 1000);
        }
        tree
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubtreeGroup {
    /// 1-based; the residual group is last.
    pub group_id: usize,
    /// First block of the subtree, `None` for the residual group.
    pub root: Option<BlockHash>,
    /// Member blocks, sorted.
    pub blocks: Vec<BlockHash>,
    /// Reuse intervals of member blocks (ms), filled by [`group_interarrivals`].
    pub interarrivals_ms: Vec<u64>,
    /// Accesses beyond the first, summed over member blocks.
    pub reuse_count: u64,
}

impl SubtreeGroup {
    pub fn is_residual(&self) -> bool {
        self.root.is_none()
    }

    pub fn unique_blocks(&self) -> usize {
        self.blocks.len()
    }
}

/// Groups plus a block → group lookup.
#[derive(Debug, Clone)]
pub struct SubtreeGrouping {
    pub groups: Vec<SubtreeGroup>,
    membership: HashMap<BlockHash, usize>,
}

impl SubtreeGrouping {
    /// Group id owning `block`; unseen blocks fall into the residual group.
    pub fn group_of(&self, block: &BlockHash) -> usize {
        self.membership
            .get(block)
            .copied()
            .unwrap_or_else(|| self.residual_id())
    }

    pub fn residual_id(&self) -> usize {
        self.groups.len()
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PrefixError {
    #[error("K must be at least 1")]
    ZeroK,
}

/// Ranks depth-1 subtrees by total reuse (ties: smaller root hash first) and
/// returns the top `k` plus a residual group holding every other block.
pub fn top_k_subtrees(trace: &Trace, k: usize) -> Result<SubtreeGrouping, PrefixError> {
    if k == 0 {
        return Err(PrefixError::ZeroK);
    }
    let tree = PrefixTree::from_trace(trace);
    let mut ranked: Vec<(u64, BlockHash, NodeId)> = tree
        .children(NodeId::ROOT)
        .map(|c| {
            let reuse = tree
                .subtree(c)
                .iter()
                .map(|&n| tree.access_count(n) - 1)
                .sum();
            (reuse, tree.hash(c).cloned().expect("block node"), c)
        })
        .collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));

    let mut membership: HashMap<BlockHash, usize> = HashMap::new();
    let mut groups = Vec::new();
    let take = k.min(ranked.len());
    for (i, (_, root, node)) in ranked.iter().take(take).enumerate() {
        let gid = i + 1;
        let mut blocks = Vec::new();
        for n in tree.subtree(*node) {
            let h = tree.hash(n).expect("block node");
            if !membership.contains_key(h) {
                membership.insert(h.clone(), gid);
                blocks.push(h.clone());
            }
        }
        blocks.sort();
        groups.push(SubtreeGroup {
            group_id: gid,
            root: Some(root.clone()),
            blocks,
            interarrivals_ms: Vec::new(),
            reuse_count: 0,
        });
    }
    let residual_id = take + 1;
    let mut residual = Vec::new();
    for (_, _, node) in ranked.iter().skip(take) {
        for n in tree.subtree(*node) {
            let h = tree.hash(n).expect("block node");
            if !membership.contains_key(h) {
                membership.insert(h.clone(), residual_id);
                residual.push(h.clone());
            }
        }
    }
    residual.sort();
    groups.push(SubtreeGroup {
        group_id: residual_id,
        root: None,
        blocks: residual,
        interarrivals_ms: Vec::new(),
        reuse_count: 0,
    });

    // Reuse counts per group from per-block access counts.
    for (hash, times) in block_accesses(trace) {
        let g = membership[hash];
        groups[g - 1].reuse_count += times.len() as u64 - 1;
    }
    Ok(SubtreeGrouping { groups, membership })
}

/// Fills each group's reuse-interval multiset from the trace.
pub fn group_interarrivals(trace: &Trace, grouping: &mut SubtreeGrouping) {
    for g in &mut grouping.groups {
        g.interarrivals_ms.clear();
    }
    for (hash, times) in block_accesses(trace) {
        let g = grouping.group_of(hash);
        let group = &mut grouping.groups[g - 1];
        group
            .interarrivals_ms
            .extend(times.windows(2).map(|w| w[1] - w[0]));
    }
    for g in &mut grouping.groups {
        g.interarrivals_ms.sort_unstable();
    }
}

pub fn write_group_csv<W: Write>(grouping: &SubtreeGrouping, w: W) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["group_id", "root_hash", "unique_blocks", "reuse_count"])?;
    for g in &grouping.groups {
        wr.write_record([
            g.group_id.to_string(),
            g.root.as_ref().map_or("RESIDUAL".to_string(), |h| h.to_string()),
            g.unique_blocks().to_string(),
            g.reuse_count.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_group_histogram_csv<W: Write>(grouping: &SubtreeGrouping, w: W) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["group_id", "lo_ms", "hi_ms", "count"])?;
    for g in &grouping.groups {
        for bin in histogram_of(&g.interarrivals_ms) {
            wr.write_record([
                g.group_id.to_string(),
                bin.lo_ms.to_string(),
                bin.hi_ms.to_string(),
                bin.count.to_string(),
            ])?;
        }
    }
    wr.flush()?;
    Ok(())
}

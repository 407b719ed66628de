use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::queue::{from_seconds, EventQueue, SimTime};
use super::topology::Topology;
use crate::chain::{Block, ContractUpdate};
use crate::digest::{DigestSet, Hash32};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MessageKind {
    Update,
    Block,
}

/// The two protocol messages. Bodies are shared, never copied per hop.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    Update(Arc<ContractUpdate>),
    Block(Arc<Block>),
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self {
            Message::Update(_) => MessageKind::Update,
            Message::Block(_) => MessageKind::Block,
        }
    }

    pub fn digest(&self) -> Hash32 {
        match self {
            Message::Update(u) => u.digest(),
            Message::Block(b) => b.hash,
        }
    }

    pub fn size_bits(&self, update_bits: u64, block_bits: u64) -> u64 {
        match self {
            Message::Update(_) => update_bits,
            Message::Block(_) => block_bits,
        }
    }
}

/// Per-link delay, uniform on `[min_s, max_s]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub min_s: f64,
    pub max_s: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self { min_s: 0.01, max_s: 0.1 }
    }
}

impl LatencyModel {
    pub fn sample_latency(&self, rng: &mut impl Rng) -> f64 {
        if self.max_s <= self.min_s {
            return self.min_s;
        }
        rng.random_range(self.min_s..=self.max_s)
    }

    pub fn sample_us(&self, rng: &mut impl Rng) -> SimTime {
        from_seconds(self.sample_latency(rng))
    }
}

/// Digests an agent has already handled. Two generations are kept so that
/// memory stays bounded when `rotate` is called once per control period.
#[derive(Clone, Debug, Default)]
pub struct Dedup {
    current: DigestSet,
    previous: DigestSet,
}

impl Dedup {
    /// True the first time a digest is offered.
    pub fn first_sight(&mut self, digest: Hash32) -> bool {
        !self.previous.contains(&digest) && self.current.insert(digest)
    }

    pub fn rotate(&mut self) {
        self.previous = std::mem::take(&mut self.current);
    }
}

/// Outcome of flooding one message from `origin`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FloodTrace {
    /// First arrival time per agent (`Some(0)` for the origin).
    pub first_receipt: Vec<Option<SimTime>>,
    /// Link transmissions, counted once per edge traversal.
    pub transmissions: usize,
    /// First-time receipts, excluding the origin.
    pub deliveries: usize,
    pub duplicates: usize,
    /// Transmissions sent by each agent.
    pub sent: Vec<usize>,
}

/// Floods a single message with per-agent digest dedup: the origin sends to
/// every peer, each first-time receiver forwards to every peer but the
/// sender, duplicates are dropped.
pub fn flood(origin: usize, topo: &Topology, latency: &LatencyModel, rng: &mut impl Rng) -> FloodTrace {
    let n = topo.len();
    let mut trace = FloodTrace { first_receipt: vec![None; n], sent: vec![0; n], ..Default::default() };
    let mut queue = EventQueue::new();
    trace.first_receipt[origin] = Some(0);
    for &p in topo.peers(origin) {
        queue.schedule(latency.sample_us(rng), (origin, p));
        trace.sent[origin] += 1;
    }
    while let Some((t, (from, to))) = queue.pop_next() {
        trace.transmissions += 1;
        if trace.first_receipt[to].is_some() {
            trace.duplicates += 1;
            continue;
        }
        trace.first_receipt[to] = Some(t);
        trace.deliveries += 1;
        for &p in topo.peers(to).iter().filter(|&&p| p != from) {
            queue.schedule(t + latency.sample_us(rng), (to, p));
            trace.sent[to] += 1;
        }
    }
    trace
}

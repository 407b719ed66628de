//! One agent's copy of the chain: block store, fork choice, mempool, and the
//! contract state replayed at every stored block.

use std::sync::Arc;

use indexmap::IndexMap;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::block::{Block, MiningRule, Pow};
use super::contract::{apply_updates, check_rules, ContractBook, ContractState, Genesis, Rejection};
use super::update::{ContractUpdate, KeyStub, UpdateKind};
use crate::control::DerId;
use crate::digest::{BuildDigestHasher, DigestMap, DigestSet, Hash32};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewStats {
    pub blocks_stored: u64,
    pub reorgs: u64,
    pub max_reorg_depth: u64,
    pub max_mempool: u64,
    pub orphans_buffered: u64,
    pub restored_updates: u64,
}

/// Result of storing a verified block.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Extension {
    pub tip_changed: bool,
    /// Blocks abandoned from the old canonical chain (0 for a plain extension).
    pub reorg_depth: u64,
    pub restored: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Receipt {
    Known,
    Orphaned,
    Invalid,
    /// The block and any orphans it unblocked were stored; the flags are
    /// merged over all of them.
    Accepted(Extension),
}

#[derive(Clone, Debug)]
pub struct ChainView {
    genesis: Hash32,
    rule: MiningRule,
    keys: KeyStub,
    blocks: DigestMap<Arc<Block>>,
    states: DigestMap<Arc<ContractBook>>,
    tip: Hash32,
    tip_height: u64,
    mempool: IndexMap<Hash32, ContractUpdate, BuildDigestHasher>,
    orphans: DigestMap<Vec<Arc<Block>>>,
    /// Updates in the canonical chain, with the height that holds them.
    included: DigestMap<u64>,
    stats: ViewStats,
}

impl ChainView {
    pub fn new(genesis: &Genesis, rule: MiningRule, keys: KeyStub) -> Self {
        let mut states = DigestMap::default();
        states.insert(genesis.hash, Arc::new(genesis.book.clone()));
        Self {
            genesis: genesis.hash,
            rule,
            keys,
            blocks: DigestMap::default(),
            states,
            tip: genesis.hash,
            tip_height: 0,
            mempool: IndexMap::default(),
            orphans: DigestMap::default(),
            included: DigestMap::default(),
            stats: ViewStats::default(),
        }
    }

    pub fn tip(&self) -> Hash32 {
        self.tip
    }

    pub fn tip_height(&self) -> u64 {
        self.tip_height
    }

    pub fn rule(&self) -> MiningRule {
        self.rule
    }

    pub fn keys(&self) -> &KeyStub {
        &self.keys
    }

    pub fn stats(&self) -> ViewStats {
        self.stats
    }

    pub fn tip_state(&self) -> &ContractBook {
        &self.states[&self.tip]
    }

    pub fn contract(&self, feeder: u16) -> Option<&ContractState> {
        self.tip_state().get(&feeder).map(Arc::as_ref)
    }

    pub fn state_at(&self, hash: &Hash32) -> Option<&ContractBook> {
        self.states.get(hash).map(Arc::as_ref)
    }

    pub fn block(&self, hash: &Hash32) -> Option<&Arc<Block>> {
        self.blocks.get(hash)
    }

    pub fn knows(&self, hash: &Hash32) -> bool {
        self.states.contains_key(hash)
    }

    pub fn height_of(&self, hash: &Hash32) -> Option<u64> {
        if *hash == self.genesis {
            Some(0)
        } else {
            self.blocks.get(hash).map(|b| b.height)
        }
    }

    pub fn mempool(&self) -> impl Iterator<Item = &ContractUpdate> {
        self.mempool.values()
    }

    pub fn mempool_len(&self) -> usize {
        self.mempool.len()
    }

    pub fn in_mempool(&self, digest: &Hash32) -> bool {
        self.mempool.contains_key(digest)
    }

    pub fn is_included(&self, digest: &Hash32) -> bool {
        self.included.contains_key(digest)
    }

    /// Admits a gossiped update to the mempool. Updates already in the
    /// canonical chain, with a bad tag, or for a round the contract has moved
    /// past are refused.
    pub fn offer_update(&mut self, upd: ContractUpdate) -> bool {
        let digest = upd.digest();
        if self.included.contains_key(&digest) || self.mempool.contains_key(&digest) {
            return false;
        }
        if !self.keys.verify(&upd) {
            return false;
        }
        match self.contract(upd.feeder) {
            Some(state) if !is_dead(state, &upd) => {}
            _ => return false,
        }
        self.mempool.insert(digest, upd);
        self.stats.max_mempool = self.stats.max_mempool.max(self.mempool.len() as u64);
        true
    }

    /// Verifies and stores a block received from the network. Blocks whose
    /// parent is unknown are buffered until the parent arrives.
    pub fn receive_block(&mut self, block: Arc<Block>) -> Receipt {
        if self.knows(&block.hash) {
            return Receipt::Known;
        }
        if !self.knows(&block.parent) {
            let waiting = self.orphans.entry(block.parent).or_default();
            if !waiting.iter().any(|b| b.hash == block.hash) {
                waiting.push(block);
                self.stats.orphans_buffered += 1;
            }
            return Receipt::Orphaned;
        }
        if !verify_block(&block, self) {
            return Receipt::Invalid;
        }
        let mut merged = self.extend_chain(Arc::clone(&block));
        let mut ready = vec![block.hash];
        while let Some(parent) = ready.pop() {
            for child in self.orphans.remove(&parent).unwrap_or_default() {
                if self.knows(&child.hash) || !verify_block(&child, self) {
                    continue;
                }
                let ext = self.extend_chain(Arc::clone(&child));
                merged.tip_changed |= ext.tip_changed;
                merged.reorg_depth = merged.reorg_depth.max(ext.reorg_depth);
                merged.restored += ext.restored;
                ready.push(child.hash);
            }
        }
        Receipt::Accepted(merged)
    }

    /// Stores a verified block whose parent is known and applies the
    /// longest-chain rule. Ties keep the first-seen head.
    pub fn extend_chain(&mut self, block: Arc<Block>) -> Extension {
        let hash = block.hash;
        let parent = &self.states[&block.parent];
        let book = if block.updates.is_empty() {
            Arc::clone(parent)
        } else {
            let mut book = (**parent).clone();
            // Tags were checked when the block was verified.
            apply_updates(&mut book, block.updates.iter());
            Arc::new(book)
        };
        self.states.insert(hash, book);
        self.blocks.insert(hash, Arc::clone(&block));
        self.stats.blocks_stored += 1;

        if block.height <= self.tip_height {
            return Extension::default();
        }
        let old_tip = self.tip;
        self.tip = hash;
        self.tip_height = block.height;

        if block.parent == old_tip {
            self.include(&block);
            self.purge_dead();
            return Extension { tip_changed: true, reorg_depth: 0, restored: 0 };
        }

        let (abandoned, adopted) = self.branches(old_tip, hash);
        for b in &abandoned {
            for u in &b.updates {
                self.included.remove(&u.digest());
            }
        }
        let mut adopted_updates = DigestSet::default();
        for b in adopted.iter().rev() {
            adopted_updates.extend(b.updates.iter().map(ContractUpdate::digest));
            self.include(b);
        }

        let mut restored = 0;
        for b in abandoned.iter().rev() {
            for u in &b.updates {
                let digest = u.digest();
                if adopted_updates.contains(&digest)
                    || self.included.contains_key(&digest)
                    || self.mempool.contains_key(&digest)
                {
                    continue;
                }
                let valid = self
                    .contract(u.feeder)
                    .is_some_and(|state| check_rules(state, u).is_ok());
                if valid {
                    self.mempool.shift_insert(restored, digest, u.clone());
                    restored += 1;
                }
            }
        }
        self.purge_dead();
        let depth = abandoned.len() as u64;
        self.stats.reorgs += 1;
        self.stats.max_reorg_depth = self.stats.max_reorg_depth.max(depth);
        self.stats.restored_updates += restored as u64;
        self.stats.max_mempool = self.stats.max_mempool.max(self.mempool.len() as u64);
        Extension { tip_changed: true, reorg_depth: depth, restored }
    }

    /// Drops mempool entries that can never apply on top of the tip.
    fn purge_dead(&mut self) {
        let book = &self.states[&self.tip];
        self.mempool
            .retain(|_, u| book.get(&u.feeder).is_some_and(|state| !is_dead(state, u)));
    }

    fn include(&mut self, block: &Block) {
        for u in &block.updates {
            let digest = u.digest();
            self.mempool.shift_remove(&digest);
            self.included.insert(digest, block.height);
        }
    }

    /// Blocks from `old` and from `new` back to (excluding) their common
    /// ancestor, newest first.
    fn branches(&self, old: Hash32, new: Hash32) -> (Vec<Arc<Block>>, Vec<Arc<Block>>) {
        let step = |h: Hash32| Arc::clone(self.blocks.get(&h).expect("fork below pruning depth"));
        let (mut a, mut b) = (old, new);
        let (mut ha, mut hb) = (self.height_of(&a).unwrap(), self.height_of(&b).unwrap());
        let (mut old_branch, mut new_branch) = (Vec::new(), Vec::new());
        while ha > hb {
            let blk = step(a);
            a = blk.parent;
            ha -= 1;
            old_branch.push(blk);
        }
        while hb > ha {
            let blk = step(b);
            b = blk.parent;
            hb -= 1;
            new_branch.push(blk);
        }
        while a != b {
            let (ba, bb) = (step(a), step(b));
            a = ba.parent;
            b = bb.parent;
            old_branch.push(ba);
            new_branch.push(bb);
        }
        (old_branch, new_branch)
    }

    /// Canonical blocks from the oldest retained one up to the tip.
    pub fn canonical_chain(&self) -> Vec<Arc<Block>> {
        let mut out = Vec::with_capacity(self.tip_height as usize);
        let mut cur = self.tip;
        while let Some(b) = self.blocks.get(&cur) {
            out.push(Arc::clone(b));
            cur = b.parent;
        }
        out.reverse();
        out
    }

    /// Drops blocks, states, and inclusion records more than `depth` below
    /// the tip. Forks deeper than `depth` can no longer be followed.
    pub fn prune(&mut self, depth: u64) {
        let Some(cutoff) = self.tip_height.checked_sub(depth) else {
            return;
        };
        let stale: Vec<Hash32> = self
            .blocks
            .iter()
            .filter(|(_, b)| b.height < cutoff)
            .map(|(h, _)| *h)
            .collect();
        for h in stale {
            self.blocks.remove(&h);
            self.states.remove(&h);
        }
        if cutoff > 0 {
            self.states.remove(&self.genesis);
        }
        self.included.retain(|_, h| *h >= cutoff);
        self.orphans.retain(|_, v| {
            v.retain(|b| b.height >= cutoff);
            !v.is_empty()
        });
    }
}

/// An update is dead once its round has passed, or when it is rejected in
/// its own round for a reason later blocks cannot change. A withdraw that
/// arrives before its round's lock is kept.
fn is_dead(state: &ContractState, upd: &ContractUpdate) -> bool {
    if upd.period != state.period {
        return upd.period < state.period;
    }
    match check_rules(state, upd) {
        Ok(()) => false,
        Err(Rejection::WrongPhase) => upd.kind() != UpdateKind::Withdraw,
        Err(_) => true,
    }
}

/// True iff the parent is known, the height follows it, the hash is intact,
/// every update tag validates, and the proof satisfies the view's rule.
pub fn verify_block(block: &Block, view: &ChainView) -> bool {
    let Some(parent_height) = view.height_of(&block.parent) else {
        return false;
    };
    if !view.knows(&block.parent) || block.height != parent_height + 1 {
        return false;
    }
    if block.compute_hash() != block.hash || !block.pow_is_valid(view.rule) {
        return false;
    }
    block.updates.iter().all(|u| view.keys.verify(u))
}

/// Builds (and seals) a block on the view's tip from the oldest mempool
/// entries that apply in sequence; the rest stay pooled. Mining carries no
/// reward.
pub fn assemble_block(
    view: &ChainView,
    miner: DerId,
    now_us: u64,
    max_updates: usize,
    rng: &mut impl Rng,
) -> Block {
    let mut scratch = if view.mempool.is_empty() { ContractBook::new() } else { view.tip_state().clone() };
    let mut updates = Vec::new();
    for u in view.mempool.values() {
        if updates.len() >= max_updates {
            break;
        }
        let Some(state) = scratch.get_mut(&u.feeder) else {
            continue;
        };
        if check_rules(state, u).is_ok() {
            Arc::make_mut(state).apply(u);
            updates.push(u.clone());
        }
    }
    // Sealing sets the hash.
    let mut block = Block {
        hash: Hash32::default(),
        parent: view.tip,
        height: view.tip_height + 1,
        miner,
        timestamp_us: now_us,
        updates,
        pow: Pow::Abstract { ticket: 0 },
    };
    block.seal(view.rule, rng);
    block
}

//! Blocks and the mining race.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::update::ContractUpdate;
use crate::control::DerId;
use crate::digest::Hash32;

/// How proof of work is produced and checked.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MiningRule {
    /// Block times come from the exponential race; the proof is a token.
    #[default]
    Abstract,
    /// Block times still come from the race, but each block also carries a
    /// nonce whose hash has `difficulty_bits` leading zero bits.
    Hash { difficulty_bits: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pow {
    Abstract { ticket: u64 },
    Hash { nonce: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub hash: Hash32,
    pub parent: Hash32,
    pub height: u64,
    pub miner: DerId,
    /// Simulation time in microseconds.
    pub timestamp_us: u64,
    pub updates: Vec<ContractUpdate>,
    pub pow: Pow,
}

impl Block {
    pub fn new(
        parent: Hash32,
        height: u64,
        miner: DerId,
        timestamp_us: u64,
        updates: Vec<ContractUpdate>,
        pow: Pow,
    ) -> Self {
        let mut b = Self { hash: Hash32::default(), parent, height, miner, timestamp_us, updates, pow };
        b.hash = b.compute_hash();
        b
    }

    pub fn compute_hash(&self) -> Hash32 {
        let mut header = Vec::with_capacity(96 + 32 * self.updates.len());
        header.extend_from_slice(&self.parent.0);
        header.extend_from_slice(&self.height.to_le_bytes());
        header.extend_from_slice(&self.miner.key().to_le_bytes());
        header.extend_from_slice(&self.timestamp_us.to_le_bytes());
        let (tag, value) = match self.pow {
            Pow::Abstract { ticket } => (0u8, ticket),
            Pow::Hash { nonce } => (1u8, nonce),
        };
        header.push(tag);
        header.extend_from_slice(&value.to_le_bytes());
        for u in &self.updates {
            header.extend_from_slice(&u.digest().0);
        }
        Hash32::of(&[b"block", &header])
    }

    pub fn pow_is_valid(&self, rule: MiningRule) -> bool {
        match (rule, self.pow) {
            (MiningRule::Abstract, Pow::Abstract { .. }) => true,
            (MiningRule::Hash { difficulty_bits }, Pow::Hash { .. }) => {
                self.hash.leading_zero_bits() >= difficulty_bits
            }
            _ => false,
        }
    }

    /// Finds a proof for this block under `rule`, updating its hash.
    pub fn seal(&mut self, rule: MiningRule, rng: &mut impl Rng) {
        match rule {
            MiningRule::Abstract => {
                self.pow = Pow::Abstract { ticket: rng.random() };
                self.hash = self.compute_hash();
            }
            MiningRule::Hash { .. } => {
                let mut nonce: u64 = rng.random();
                loop {
                    self.pow = Pow::Hash { nonce };
                    self.hash = self.compute_hash();
                    if self.pow_is_valid(rule) {
                        break;
                    }
                    nonce = nonce.wrapping_add(1);
                }
            }
        }
    }
}

/// Time until an agent mining at `agent_rate` blocks/s finds its next block.
pub fn next_block_delay(rng: &mut impl Rng, agent_rate: f64) -> f64 {
    Exp::new(agent_rate).expect("mining rate must be positive").sample(rng)
}

/// Per-agent rate such that `agents` equal miners produce one block per
/// `block_period_s` in aggregate.
pub fn agent_mining_rate(block_period_s: f64, agents: usize) -> f64 {
    1.0 / (block_period_s * agents as f64)
}

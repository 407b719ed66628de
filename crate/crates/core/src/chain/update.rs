//! Contract updates and the author-binding stub.
//!
//! Real signatures are replaced by a keyed digest: every DER holds a key derived
//! from a network secret, and the tag covers every field of the update.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::control::{Credit, DerId};
use crate::digest::Hash32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UpdateKind {
    Demand,
    Lock,
    Withdraw,
}

impl fmt::Display for UpdateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UpdateKind::Demand => "Demand",
            UpdateKind::Lock => "Lock",
            UpdateKind::Withdraw => "Withdraw",
        })
    }
}

/// What an update does. Only demands carry an amount.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Demand(Credit),
    Lock,
    Withdraw,
}

impl Action {
    pub fn kind(self) -> UpdateKind {
        match self {
            Action::Demand(_) => UpdateKind::Demand,
            Action::Lock => UpdateKind::Lock,
            Action::Withdraw => UpdateKind::Withdraw,
        }
    }

    pub fn amount(self) -> Option<Credit> {
        match self {
            Action::Demand(c) => Some(c),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContractUpdate {
    pub action: Action,
    pub author: DerId,
    pub feeder: u16,
    /// Election round the update targets.
    pub period: u64,
    pub nonce: u64,
    pub auth_tag: Hash32,
}

impl ContractUpdate {
    pub fn kind(&self) -> UpdateKind {
        self.action.kind()
    }

    fn body_bytes(&self) -> [u8; 35] {
        let mut out = [0u8; 35];
        let (tag, amount) = match self.action {
            Action::Demand(c) => (0u8, c.0),
            Action::Lock => (1, 0),
            Action::Withdraw => (2, 0),
        };
        out[0] = tag;
        out[1..9].copy_from_slice(&self.author.key().to_le_bytes());
        out[9..11].copy_from_slice(&self.feeder.to_le_bytes());
        out[11..19].copy_from_slice(&self.period.to_le_bytes());
        out[19..27].copy_from_slice(&amount.to_le_bytes());
        out[27..35].copy_from_slice(&self.nonce.to_le_bytes());
        out
    }

    /// Identity of the update, covering the tag.
    pub fn digest(&self) -> Hash32 {
        Hash32::of(&[b"update", &self.body_bytes(), &self.auth_tag.0])
    }
}

/// Derives per-DER keys from a shared network secret.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyStub {
    secret: Hash32,
}

impl KeyStub {
    pub fn new(network_seed: u64) -> Self {
        Self { secret: Hash32::of(&[b"fairgrid/keys", &network_seed.to_le_bytes()]) }
    }

    // The body names the author, so one keyed hash binds the tag to it.
    fn tag(&self, upd: &ContractUpdate) -> Hash32 {
        Hash32::of(&[b"tag", &self.secret.0, &upd.body_bytes()])
    }

    pub fn verify(&self, upd: &ContractUpdate) -> bool {
        self.tag(upd) == upd.auth_tag
    }
}

/// Issues tagged updates with per-author increasing nonces.
#[derive(Clone, Debug)]
pub struct UpdateSigner {
    keys: KeyStub,
    next_nonce: HashMap<DerId, u64>,
}

impl UpdateSigner {
    pub fn new(keys: KeyStub) -> Self {
        Self { keys, next_nonce: HashMap::new() }
    }

    pub fn keys(&self) -> &KeyStub {
        &self.keys
    }

    pub fn make_update(&mut self, action: Action, author: DerId, feeder: u16, period: u64) -> ContractUpdate {
        let nonce = self.next_nonce.entry(author).or_insert(0);
        let mut upd = ContractUpdate {
            action,
            author,
            feeder,
            period,
            nonce: *nonce,
            auth_tag: Hash32::default(),
        };
        *nonce += 1;
        upd.auth_tag = self.keys.tag(&upd);
        upd
    }
}

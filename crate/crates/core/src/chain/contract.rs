//! Per-feeder election contract, replayed from the canonical chain.
//!
//! Lifecycle of one round:
//! `Collecting` (demands are escrowed) -> `Locked` (first lock elects the VSC)
//! -> `Settled` (the elected DER withdraws the escrow), after which the next
//! round starts collecting immediately.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::block::Block;
use super::update::{Action, ContractUpdate, KeyStub};
use crate::control::{elect_vsc, Credit, CreditLedger, DemandVector, DerId};
use crate::digest::Hash32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Phase {
    Collecting,
    Locked,
    /// Transient: a withdraw settles the round and the contract moves on to
    /// collecting the next one within the same update.
    Settled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum Rejection {
    #[error("wrong phase")]
    WrongPhase,
    #[error("wrong period")]
    WrongPeriod,
    #[error("demand exceeds credit")]
    Overdraft,
    #[error("author already demanded this round")]
    DuplicateDemand,
    #[error("only the elected DER may withdraw")]
    NotElected,
    #[error("authentication tag does not match author")]
    BadAuth,
    #[error("update or author belongs to another feeder")]
    WrongFeeder,
}

/// Outcome of one round's lock.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Election {
    pub round: u64,
    pub elected: DerId,
    pub demands: DemandVector,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractState {
    pub feeder: u16,
    /// Round currently collecting (or locked).
    pub period: u64,
    pub phase: Phase,
    pub demands: DemandVector,
    pub elected: Option<DerId>,
    pub escrow: Credit,
    pub ledger: CreditLedger,
    pub last_election: Option<Election>,
}

impl ContractState {
    /// A contract collecting demands for `round`.
    pub fn collecting(feeder: u16, round: u64, ledger: CreditLedger) -> Self {
        Self {
            feeder,
            period: round,
            phase: Phase::Collecting,
            demands: DemandVector::new(round),
            elected: None,
            escrow: Credit::ZERO,
            ledger,
            last_election: None,
        }
    }

    /// Credits held by DERs plus credits escrowed by the contract.
    pub fn total_credit(&self) -> Credit {
        self.ledger.total() + self.escrow
    }

    /// Applies `upd` if it validates; otherwise leaves the state untouched.
    pub fn try_apply(&mut self, upd: &ContractUpdate, keys: &KeyStub) -> Result<(), Rejection> {
        validate_update(self, upd, keys)?;
        self.apply(upd);
        Ok(())
    }

    /// Applies an update that has already passed [`validate_update`].
    pub fn apply(&mut self, upd: &ContractUpdate) {
        match upd.action {
            Action::Demand(amount) => {
                self.ledger.admit(upd.author);
                self.ledger
                    .debit(upd.author, amount)
                    .expect("validated demand cannot overdraw");
                self.demands.insert(upd.author, amount);
                self.escrow += amount;
            }
            Action::Lock => {
                let elected = elect_vsc(&self.demands)
                    .ok()
                    .or_else(|| self.last_election.as_ref().map(|e| e.elected))
                    .or_else(|| self.ledger.iter().next().map(|(d, _)| d))
                    .expect("a feeder contract always has at least one DER");
                self.phase = Phase::Locked;
                self.elected = Some(elected);
                self.last_election = Some(Election {
                    round: self.period,
                    elected,
                    demands: self.demands.clone(),
                });
            }
            Action::Withdraw => {
                let elected = self.elected.expect("locked contract has an elected DER");
                self.ledger.admit(elected);
                self.ledger
                    .credit(elected, self.escrow)
                    .expect("elected DER was admitted");
                self.escrow = Credit::ZERO;
                self.phase = Phase::Settled;
                self.period += 1;
                self.phase = Phase::Collecting;
                self.demands = DemandVector::new(self.period);
                self.elected = None;
            }
        }
    }
}

/// Checks an update against the contract rules without applying it.
pub fn validate_update(state: &ContractState, upd: &ContractUpdate, keys: &KeyStub) -> Result<(), Rejection> {
    if !keys.verify(upd) {
        return Err(Rejection::BadAuth);
    }
    check_rules(state, upd)
}

/// [`validate_update`] minus the tag check, for updates already verified.
pub fn check_rules(state: &ContractState, upd: &ContractUpdate) -> Result<(), Rejection> {
    if upd.feeder != state.feeder || upd.author.feeder != state.feeder {
        return Err(Rejection::WrongFeeder);
    }
    if upd.period != state.period {
        return Err(Rejection::WrongPeriod);
    }
    match upd.action {
        Action::Demand(amount) => {
            if state.phase != Phase::Collecting {
                return Err(Rejection::WrongPhase);
            }
            if state.demands.demands.contains_key(&upd.author) {
                return Err(Rejection::DuplicateDemand);
            }
            if amount > state.ledger.get(upd.author).unwrap_or(Credit::ZERO) {
                return Err(Rejection::Overdraft);
            }
        }
        Action::Lock => {
            if state.phase != Phase::Collecting {
                return Err(Rejection::WrongPhase);
            }
        }
        Action::Withdraw => {
            if state.phase != Phase::Locked {
                return Err(Rejection::WrongPhase);
            }
            if state.elected != Some(upd.author) {
                return Err(Rejection::NotElected);
            }
        }
    }
    Ok(())
}

/// Value-returning form of [`ContractState::apply`].
pub fn apply_update(state: &ContractState, upd: &ContractUpdate) -> ContractState {
    let mut next = state.clone();
    next.apply(upd);
    next
}

/// All feeder contracts, keyed by feeder index.
pub type ContractBook = BTreeMap<u16, Arc<ContractState>>;

/// Applies every valid update of `block` in order; invalid ones are skipped.
/// Returns how many updates took effect.
pub fn apply_block(book: &mut ContractBook, block: &Block, keys: &KeyStub) -> usize {
    apply_updates(book, block.updates.iter().filter(|u| keys.verify(u)))
}

/// Applies already-verified updates in order, skipping rule violations.
pub(crate) fn apply_updates<'a>(book: &mut ContractBook, updates: impl Iterator<Item = &'a ContractUpdate>) -> usize {
    let mut applied = 0;
    for upd in updates {
        if let Some(state) = book.get_mut(&upd.feeder) {
            if check_rules(state, upd).is_ok() {
                Arc::make_mut(state).apply(upd);
                applied += 1;
            }
        }
    }
    applied
}

/// Chain anchor shared by every agent.
#[derive(Clone, Debug)]
pub struct Genesis {
    pub hash: Hash32,
    pub book: ContractBook,
}

impl Genesis {
    pub fn new(book: ContractBook) -> Self {
        let mut bytes = Vec::new();
        for (f, s) in &book {
            bytes.extend_from_slice(&f.to_le_bytes());
            bytes.extend_from_slice(&s.period.to_le_bytes());
            for (d, c) in s.ledger.iter() {
                bytes.extend_from_slice(&d.key().to_le_bytes());
                bytes.extend_from_slice(&c.0.to_le_bytes());
            }
            for (d, c) in &s.demands.demands {
                bytes.extend_from_slice(&d.key().to_le_bytes());
                bytes.extend_from_slice(&c.0.to_le_bytes());
            }
        }
        Self { hash: Hash32::of(&[b"fairgrid/genesis", &bytes]), book }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChainError {
    #[error("invalid chain at height {height}: {reason}")]
    InvalidChain { height: u64, reason: &'static str },
}

/// Folds all updates of a canonical chain (oldest first) over the genesis
/// contracts.
pub fn replay_chain<'a>(
    blocks: impl IntoIterator<Item = &'a Block>,
    genesis: &Genesis,
    keys: &KeyStub,
) -> Result<ContractBook, ChainError> {
    let mut book = genesis.book.clone();
    let mut parent = genesis.hash;
    let mut height = 0;
    for block in blocks {
        if block.parent != parent {
            return Err(ChainError::InvalidChain { height: block.height, reason: "parent linkage broken" });
        }
        if block.height != height + 1 {
            return Err(ChainError::InvalidChain { height: block.height, reason: "height not consecutive" });
        }
        if block.compute_hash() != block.hash {
            return Err(ChainError::InvalidChain { height: block.height, reason: "hash mismatch" });
        }
        apply_block(&mut book, block, keys);
        parent = block.hash;
        height = block.height;
    }
    Ok(book)
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Collecting => "COLLECTING",
            Phase::Locked => "LOCKED",
            Phase::Settled => "SETTLED",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::block::Pow;
    use crate::chain::update::UpdateSigner;

    fn u(unit: u16) -> DerId {
        DerId::new(2, unit)
    }

    fn setup() -> (ContractState, UpdateSigner) {
        let ledger = CreditLedger::new([(u(1), Credit(10)), (u(2), Credit(10))]);
        (ContractState::collecting(2, 1, ledger), UpdateSigner::new(KeyStub::new(9)))
    }

    #[test]
    fn rules_ignore_the_tag_but_blocks_do_not() {
        let (state, mut s) = setup();
        let mut forged = s.make_update(Action::Demand(Credit(4)), u(1), 2, 1);
        forged.auth_tag = Hash32::of(&[b"forged"]);
        assert_eq!(check_rules(&state, &forged), Ok(()));
        assert_eq!(validate_update(&state, &forged, s.keys()), Err(Rejection::BadAuth));

        let mut book = ContractBook::new();
        book.insert(2, Arc::new(state));
        let block = Block::new(Hash32::default(), 1, u(1), 0, vec![forged], Pow::Abstract { ticket: 0 });
        assert_eq!(apply_block(&mut book, &block, s.keys()), 0);
        assert_eq!(book[&2].escrow, Credit::ZERO);
    }

    #[test]
    fn demand_accepted_while_collecting() {
        let (state, mut s) = setup();
        let d = s.make_update(Action::Demand(Credit(5)), u(1), 2, 1);
        assert_eq!(validate_update(&state, &d, s.keys()), Ok(()));
        let big = s.make_update(Action::Demand(Credit(11)), u(1), 2, 1);
        assert_eq!(validate_update(&state, &big, s.keys()), Err(Rejection::Overdraft));
        let late = s.make_update(Action::Demand(Credit(1)), u(1), 2, 0);
        assert_eq!(validate_update(&state, &late, s.keys()), Err(Rejection::WrongPeriod));
        let foreign = s.make_update(Action::Demand(Credit(1)), DerId::new(3, 1), 2, 1);
        assert_eq!(validate_update(&state, &foreign, s.keys()), Err(Rejection::WrongFeeder));
        let mut forged = d.clone();
        forged.author = u(2);
        assert_eq!(validate_update(&state, &forged, s.keys()), Err(Rejection::BadAuth));
    }

    #[test]
    fn full_round_through_escrow() {
        let (mut state, mut s) = setup();
        let keys = s.keys().clone();
        state.try_apply(&s.make_update(Action::Demand(Credit(2)), u(1), 2, 1), &keys).unwrap();
        state.try_apply(&s.make_update(Action::Demand(Credit(5)), u(2), 2, 1), &keys).unwrap();
        assert_eq!(state.escrow, Credit(7));
        assert_eq!(state.total_credit(), Credit(20));
        let dup = s.make_update(Action::Demand(Credit(1)), u(1), 2, 1);
        assert_eq!(state.try_apply(&dup, &keys), Err(Rejection::DuplicateDemand));

        state.try_apply(&s.make_update(Action::Lock, u(2), 2, 1), &keys).unwrap();
        assert_eq!(state.phase, Phase::Locked);
        assert_eq!(state.elected, Some(u(1)));

        let second_lock = s.make_update(Action::Lock, u(1), 2, 1);
        assert_eq!(state.try_apply(&second_lock, &keys), Err(Rejection::WrongPhase));
        let wrong = s.make_update(Action::Withdraw, u(2), 2, 1);
        assert_eq!(state.try_apply(&wrong, &keys), Err(Rejection::NotElected));
        let late_demand = s.make_update(Action::Demand(Credit(1)), u(2), 2, 1);
        assert_eq!(state.try_apply(&late_demand, &keys), Err(Rejection::WrongPhase));

        let before = state.ledger.get(u(1)).unwrap();
        state.try_apply(&s.make_update(Action::Withdraw, u(1), 2, 1), &keys).unwrap();
        assert_eq!(state.ledger.get(u(1)).unwrap(), Credit(before.0 + 7));
        assert_eq!(state.ledger.get(u(1)).unwrap(), Credit(15));
        assert_eq!(state.ledger.get(u(2)).unwrap(), Credit(5));
        assert_eq!(state.escrow, Credit::ZERO);
        assert_eq!(state.period, 2);
        assert_eq!(state.phase, Phase::Collecting);
        assert_eq!(state.last_election.as_ref().unwrap().elected, u(1));
        assert_eq!(state.total_credit(), Credit(20));
    }

    #[test]
    fn empty_lock_keeps_previous_regulator() {
        let (mut state, mut s) = setup();
        let keys = s.keys().clone();
        state.try_apply(&s.make_update(Action::Demand(Credit(0)), u(2), 2, 1), &keys).unwrap();
        state.try_apply(&s.make_update(Action::Lock, u(1), 2, 1), &keys).unwrap();
        state.try_apply(&s.make_update(Action::Withdraw, u(2), 2, 1), &keys).unwrap();
        state.try_apply(&s.make_update(Action::Lock, u(1), 2, 2), &keys).unwrap();
        assert_eq!(state.elected, Some(u(2)));
        assert_eq!(state.escrow, Credit::ZERO);
    }

    #[test]
    fn newcomer_joins_with_zero_credit() {
        let (mut state, mut s) = setup();
        let keys = s.keys().clone();
        let newcomer = u(5);
        let over = s.make_update(Action::Demand(Credit(1)), newcomer, 2, 1);
        assert_eq!(state.try_apply(&over, &keys), Err(Rejection::Overdraft));
        state.try_apply(&s.make_update(Action::Demand(Credit(0)), newcomer, 2, 1), &keys).unwrap();
        state.try_apply(&s.make_update(Action::Demand(Credit(3)), u(1), 2, 1), &keys).unwrap();
        state.try_apply(&s.make_update(Action::Lock, u(1), 2, 1), &keys).unwrap();
        assert_eq!(state.elected, Some(newcomer));
        state.try_apply(&s.make_update(Action::Withdraw, newcomer, 2, 1), &keys).unwrap();
        assert_eq!(state.ledger.get(newcomer), Some(Credit(3)));
        assert_eq!(state.total_credit(), Credit(20));
    }

    #[test]
    fn apply_update_is_pure() {
        let (state, mut s) = setup();
        let d = s.make_update(Action::Demand(Credit(4)), u(1), 2, 1);
        let a = apply_update(&state, &d);
        let b = apply_update(&state, &d);
        assert_eq!(a, b);
        assert_eq!(state.escrow, Credit::ZERO);
        assert_eq!(a.escrow, Credit(4));
    }
}

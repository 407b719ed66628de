//! Helpers shared by the integration and acceptance targets.
#![allow(dead_code)]

use std::sync::Arc;

use fairgrid_core::chain::{assemble_block, Action, ChainView, ContractBook, ContractState, Genesis, KeyStub, MiningRule, UpdateSigner};
use fairgrid_core::control::{Credit, CreditLedger, DerId};
use fairgrid_core::harness::{RunMode, Scenario};
use fairgrid_core::streams::fork;
use rand::seq::SliceRandom;
use rand::Rng;

/// One feeder, four DERs; the scenario used for the fairness runs.
pub fn four_der_feeder(mode: RunMode, seed: u64, periods: u64) -> Scenario {
    let mut s = Scenario { mode, seed, periods, ..Scenario::default() };
    s.feeders.ders = vec![4];
    s.feeders.households = vec![10];
    s
}

#[derive(Debug)]
pub struct ForkOutcome {
    pub agents: usize,
    /// Every view ends on the same tip with the same contract state.
    pub single_tip: bool,
    /// Every view that had the losing block as tip pooled its unique update again.
    pub restored: bool,
    pub reorged_views: usize,
}

/// Two miners extend the genesis at the same instant, each with an update
/// only its side of the network has seen; each side sees its own block first.
/// A random agent then mines on its own tip and that block reaches everyone.
pub fn induced_fork(seed: u64) -> ForkOutcome {
    let mut rng = fork(seed, "induced-fork", 0, 0);
    let n = rng.random_range(3..=8usize);
    let ders: Vec<DerId> = (1..=4).map(|u| DerId::new(1, u)).collect();
    let ledger = CreditLedger::new(ders.iter().map(|&d| (d, Credit(1000))));
    let mut book = ContractBook::new();
    book.insert(1, Arc::new(ContractState::collecting(1, 1, ledger)));
    let genesis = Genesis::new(book);
    let mut signer = UpdateSigner::new(KeyStub::new(seed));
    let mut views: Vec<ChainView> =
        (0..n).map(|_| ChainView::new(&genesis, MiningRule::Abstract, signer.keys().clone())).collect();

    // Sides: agent 0 mines block A, agent 1 mines block B.
    let mut order: Vec<usize> = (2..n).collect();
    order.shuffle(&mut rng);
    let split = rng.random_range(0..=order.len());
    let mut side_a = vec![0];
    side_a.extend_from_slice(&order[..split]);
    let mut side_b = vec![1];
    side_b.extend_from_slice(&order[split..]);

    let u = signer.make_update(Action::Demand(Credit(rng.random_range(0..=1000))), ders[0], 1, 1);
    let v = signer.make_update(Action::Demand(Credit(rng.random_range(0..=1000))), ders[1], 1, 1);
    for &i in &side_a {
        views[i].offer_update(u.clone());
    }
    for &i in &side_b {
        views[i].offer_update(v.clone());
    }
    let ts = rng.random_range(1..1_000_000u64);
    let a = Arc::new(assemble_block(&views[0], ders[0], ts, 256, &mut rng));
    let b = Arc::new(assemble_block(&views[1], ders[1], ts, 256, &mut rng));
    for &i in &side_a {
        views[i].receive_block(Arc::clone(&a));
    }
    for &i in &side_b {
        views[i].receive_block(Arc::clone(&b));
    }
    for &i in &side_a {
        views[i].receive_block(Arc::clone(&b));
    }
    for &i in &side_b {
        views[i].receive_block(Arc::clone(&a));
    }
    let tips_before: Vec<_> = views.iter().map(ChainView::tip).collect();

    let winner = rng.random_range(0..n);
    let c = Arc::new(assemble_block(&views[winner], ders[2], ts + 10_000_000, 256, &mut rng));
    for view in &mut views {
        view.receive_block(Arc::clone(&c));
    }

    let single_tip = views.iter().all(|w| w.tip() == c.hash && w.tip_state() == views[0].tip_state());
    let winning_first = views[winner].canonical_chain()[0].hash;
    let (loser, lost) = if winning_first == a.hash { (b.hash, &v) } else { (a.hash, &u) };
    let lost_digest = lost.digest();
    let mut restored = true;
    let mut reorged_views = 0;
    for (i, w) in views.iter().enumerate() {
        if tips_before[i] == loser {
            reorged_views += 1;
            let included = w.is_included(&lost_digest);
            restored &= included || w.in_mempool(&lost_digest);
        }
    }
    ForkOutcome { agents: n, single_tip, restored, reorged_views }
}

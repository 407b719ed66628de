mod common;

use std::collections::BTreeSet;

use common::four_der_feeder;
use fairgrid_core::chain::{replay_chain, KeyStub};
use fairgrid_core::harness::blockchain::genesis_for;
use fairgrid_core::harness::{run, RunMode, Scenario};
use proptest::prelude::*;

fn small(mode: RunMode, seed: u64, periods: u64, ders: u16, credit: u64) -> Scenario {
    let mut s = four_der_feeder(mode, seed, periods);
    s.feeders.ders = vec![0, ders];
    s.feeders.households = vec![10, 10];
    s.credit_per_der = credit;
    s.network.peers = s.network.peers.min(usize::from(ders).saturating_sub(1).max(1));
    s
}

fn check_conservation(s: &Scenario) {
    let r = run(s).unwrap();
    assert_eq!(r.credit_audit.violations, 0);
    assert!(r.credit_audit.checks > 0);
    assert!(!r.final_ledgers.is_empty());
    for &f in r.final_ledgers.keys() {
        assert_eq!(r.final_credit(f), Some(s.feeder_credit(f)), "feeder {f}");
    }
    let mut seen = BTreeSet::new();
    for e in &r.elections {
        assert!(seen.insert((e.period, e.feeder)), "two VSCs for {e:?}");
    }
    assert_eq!(seen.len() as u64, s.periods);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn credit_is_conserved_centralized(seed in any::<u64>(), periods in 1u64..40, ders in 1u16..8, credit in 1u64..5000) {
        check_conservation(&small(RunMode::Centralized, seed, periods, ders, credit));
    }

    #[test]
    fn credit_is_conserved_blockchain(seed in any::<u64>(), periods in 1u64..15, ders in 2u16..6, credit in 1u64..5000) {
        check_conservation(&small(RunMode::Blockchain, seed, periods, ders, credit));
    }

    #[test]
    fn bits_are_fully_accounted(seed in any::<u64>(), periods in 1u64..10) {
        let r = run(&small(RunMode::Blockchain, seed, periods, 4, 1000)).unwrap();
        let chain = r.chain.unwrap();
        let rows: u64 = r.costs.rows.iter().map(|row| row.total_bits).sum();
        prop_assert_eq!(rows, chain.transmitted_bits);
        for row in &r.costs.rows {
            prop_assert!(row.model_bits() as f64 >= row.analytic_lb);
        }
    }

    #[test]
    fn own_updates_cost_degree_times_size(seed in any::<u64>()) {
        let s = small(RunMode::Blockchain, seed, 6, 4, 1000);
        let r = run(&s).unwrap();
        for a in &r.costs.agents {
            prop_assert_eq!(a.mean_own_update_bits, a.model_own_update_bits);
        }
    }

    #[test]
    fn dump_replays_to_final_state(seed in any::<u64>()) {
        let s = small(RunMode::Blockchain, seed, 5, 3, 100);
        let r = run(&s).unwrap();
        let book = replay_chain(r.chain_dump.iter().map(|b| b.as_ref()), &genesis_for(&s), &KeyStub::new(s.seed)).unwrap();
        for (f, ledger) in &r.final_ledgers {
            prop_assert_eq!(&book[f].ledger, ledger);
            prop_assert_eq!(book[f].escrow, r.final_escrow[f]);
        }
    }
}

#[test]
fn own_block_bits_track_the_model() {
    let r = run(&four_der_feeder(RunMode::Blockchain, 11, 200)).unwrap();
    for a in &r.costs.agents {
        assert!(a.rel_err_own_block <= 0.10, "{a:?}");
    }
}

mod common;

use common::{four_der_feeder, induced_fork};
use fairgrid_core::chain::{replay_chain, KeyStub};
use fairgrid_core::harness::{run, RunMode, Scenario};

#[test]
fn induced_forks_resolve_and_restore() {
    for seed in 0..100 {
        let o = induced_fork(seed);
        assert!(o.single_tip, "seed {seed}: {o:?}");
        assert!(o.restored, "seed {seed}: {o:?}");
        assert!(o.reorged_views >= 1);
    }
}

#[test]
fn default_timing_has_no_desync() {
    for seed in 1..=3 {
        let r = run(&Scenario { seed, periods: 20, ..Scenario::default() }).unwrap();
        assert_eq!(r.consensus.desync_events, 0);
        assert_eq!(r.consensus.stale_periods, 0);
        assert_eq!(r.consensus.missed_demands, 0);
        let c = r.chain.unwrap();
        assert!(c.canonical_height > 0 && c.blocks_mined >= c.canonical_height);
    }
}

#[test]
fn canonical_dump_replays_to_final_ledgers() {
    let s = four_der_feeder(RunMode::Blockchain, 5, 30);
    let r = run(&s).unwrap();
    // Agent views prune, but the dump is complete from height 1.
    assert_eq!(r.chain_dump[0].height, 1);
    let keys = KeyStub::new(s.seed);
    let replayed = replay_chain(r.chain_dump.iter().map(|b| b.as_ref()), &genesis_of(&s), &keys).unwrap();
    assert_eq!(replayed[&1].ledger, r.final_ledgers[&1]);
}

fn genesis_of(s: &Scenario) -> fairgrid_core::chain::Genesis {
    fairgrid_core::harness::blockchain::genesis_for(s)
}

#[test]
fn slow_network_is_reported_not_hidden() {
    // Latency close to the block period makes forks frequent; the run must
    // still conserve credit and account every view disagreement.
    let mut s = four_der_feeder(RunMode::Blockchain, 9, 20);
    s.network.latency_min_s = 2.0;
    s.network.latency_max_s = 8.0;
    let r = run(&s).unwrap();
    assert_eq!(r.credit_audit.violations, 0);
    assert!(r.chain.unwrap().reorgs > 0);
    assert_eq!(r.elections.len(), 20);
}

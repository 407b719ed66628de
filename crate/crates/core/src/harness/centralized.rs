//! Central authority: every period each DER reports its demand (uplink), the
//! authority elects and settles, and replies with mode and credit (downlink).

use std::collections::BTreeMap;

use super::config::{RunMode, Scenario};
use super::plant::simulate_grid;
use super::report::{ConsensusStats, CreditAudit, ElectionRecord, RunReport};
use super::{controlled_feeders, expect_mode, histories, initial_ledger, RunError};
use crate::control::{draw_demand, demand_stream, elect_vsc, settle_credits, DemandVector, DerId};
use crate::costs::{empirical_cost_report, CostCategory, CostCounters};

pub fn run_centralized(s: &Scenario) -> Result<RunReport, RunError> {
    expect_mode(s, RunMode::Centralized)?;
    let all = s.all_ders();
    let agents: Vec<DerId> = all.iter().map(|&(d, _)| d).collect();
    let index: BTreeMap<DerId, usize> = agents.iter().enumerate().map(|(i, &d)| (d, i)).collect();
    let mut costs = CostCounters::new(agents.clone(), s.periods as usize);
    let feeders = controlled_feeders(s);
    let mut ledgers: BTreeMap<u16, _> = feeders.iter().map(|(f, d)| (*f, initial_ledger(s, *f, d))).collect();
    let mut previous: BTreeMap<u16, DerId> = BTreeMap::new();
    let mut schedule = vec![vec![None; s.feeder_count()]; s.periods as usize];
    let mut elections = Vec::new();
    let mut audit = CreditAudit::default();
    let uplink = s.costs.l_w;
    let downlink = s.costs.l_c + s.costs.l_mu;

    for round in 0..s.periods {
        for &(der, join) in &all {
            if join > 0 && join + 1 == round {
                if let Some(l) = ledgers.get_mut(&der.feeder) {
                    l.admit(der);
                }
            }
        }
        for (f, _) in &feeders {
            let ledger = &ledgers[f];
            let mut demands = DemandVector::new(round);
            for (der, credit) in ledger.iter() {
                demands.insert(der, draw_demand(credit, &mut demand_stream(s.seed, der, round)));
            }
            let elected = match elect_vsc(&demands) {
                Ok(d) => d,
                Err(_) => previous[f],
            };
            let settled = settle_credits(ledger, &demands, elected)?;
            audit.check(settled.total() == s.feeder_credit(*f));
            for der in demands.demands.keys() {
                let i = index[der];
                costs.record(round as usize, i, CostCategory::Uplink, uplink);
                costs.record(round as usize, i, CostCategory::Downlink, downlink);
            }
            ledgers.insert(*f, settled);
            previous.insert(*f, elected);
            schedule[round as usize][usize::from(*f) - 1] = Some(elected);
            elections.push(ElectionRecord { period: round, feeder: *f, elected, demands });
        }
    }

    let voltage = simulate_grid(s, &schedule)?;
    let degrees = vec![s.network.peers; agents.len()];
    let cost = empirical_cost_report(&costs, &s.cost_params(s.network.peers as f64), &degrees);
    Ok(RunReport {
        scenario: s.clone(),
        histories: histories(s, &elections)?,
        elections,
        voltage,
        costs: cost,
        credit_audit: audit,
        consensus: ConsensusStats::default(),
        chain: None,
        chain_dump: Vec::new(),
        final_ledgers: ledgers,
        final_escrow: BTreeMap::new(),
    })
}

/// Every DER at full output in every period.
pub fn run_no_control(s: &Scenario) -> Result<RunReport, RunError> {
    expect_mode(s, RunMode::NoControl)?;
    let voltage = simulate_grid(s, &[])?;
    let costs = CostCounters::new(Vec::new(), s.periods as usize);
    Ok(RunReport {
        scenario: s.clone(),
        elections: Vec::new(),
        histories: Vec::new(),
        voltage,
        costs: empirical_cost_report(&costs, &s.cost_params(s.network.peers as f64), &[]),
        credit_audit: CreditAudit::default(),
        consensus: ConsensusStats::default(),
        chain: None,
        chain_dump: Vec::new(),
        final_ledgers: BTreeMap::new(),
        final_escrow: BTreeMap::new(),
    })
}

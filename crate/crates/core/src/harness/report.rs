//! Run results, the summary written next to the traces, and recomputation of
//! that summary from the traces alone.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::{RunMode, Scenario};
use super::plant::VoltageRow;
use crate::chain::Block;
use crate::control::{fairness_gap, ControlHistory, Credit, CreditLedger, DemandVector, DerId};
use crate::costs::{CostReport, CostRow, CostSummary};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElectionRecord {
    pub period: u64,
    pub feeder: u16,
    pub elected: DerId,
    /// Demands the election was decided on; empty when the previous VSC was
    /// retained.
    pub demands: DemandVector,
}

impl ElectionRecord {
    pub const HEADER: &'static str = "period,feeder,elected,demands";

    pub fn to_csv(&self) -> String {
        format!("{},{},{},{}", self.period, self.feeder, self.elected, self.demands.to_compact())
    }

    pub fn from_csv(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.splitn(4, ',').collect();
        if f.len() != 4 {
            return None;
        }
        let period = f[0].parse().ok()?;
        let mut demands = DemandVector::new(period);
        for item in f[3].split(';').filter(|s| !s.is_empty()) {
            let (der, amount) = item.split_once(':')?;
            demands.insert(der.parse().ok()?, crate::control::Credit(amount.parse().ok()?));
        }
        Some(Self { period, feeder: f[1].parse().ok()?, elected: f[2].parse().ok()?, demands })
    }
}

/// Credit conservation checks at period boundaries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreditAudit {
    pub checks: u64,
    pub violations: u64,
}

impl CreditAudit {
    pub fn check(&mut self, ok: bool) {
        self.checks += 1;
        if !ok {
            self.violations += 1;
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusStats {
    /// Feeder-periods where agents' views disagreed at actuation.
    pub desync_events: u64,
    /// Feeder-periods where no view had the period's election yet.
    pub stale_periods: u64,
    /// Demands abandoned because the round locked before they could be sent.
    pub missed_demands: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainStats {
    pub blocks_mined: u64,
    pub canonical_height: u64,
    pub orphaned_blocks: u64,
    pub updates_included: u64,
    pub reorgs: u64,
    pub max_reorg_depth: u64,
    pub max_mempool: u64,
    pub restored_updates: u64,
    /// Every link transmission, counted at the sender.
    pub transmissions: u64,
    pub transmitted_bits: u64,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub scenario: Scenario,
    pub elections: Vec<ElectionRecord>,
    /// One per feeder that has DERs, in feeder order.
    pub histories: Vec<ControlHistory>,
    pub voltage: Vec<VoltageRow>,
    pub costs: CostReport,
    pub credit_audit: CreditAudit,
    pub consensus: ConsensusStats,
    pub chain: Option<ChainStats>,
    /// Canonical chain as seen by the first agent, oldest first.
    pub chain_dump: Vec<Arc<Block>>,
    pub final_ledgers: BTreeMap<u16, CreditLedger>,
    /// Demands still escrowed by open contracts at the end of the run.
    pub final_escrow: BTreeMap<u16, Credit>,
}

impl RunReport {
    /// Ledger balance plus escrow for one feeder.
    pub fn final_credit(&self, feeder: u16) -> Option<Credit> {
        let ledger = self.final_ledgers.get(&feeder)?.total();
        Some(ledger + self.final_escrow.get(&feeder).copied().unwrap_or_default())
    }

    /// Elected VSC per period for one feeder.
    pub fn sequence(&self, feeder: u16) -> Vec<DerId> {
        self.elections.iter().filter(|e| e.feeder == feeder).map(|e| e.elected).collect()
    }

    pub fn history(&self, feeder: u16) -> Option<&ControlHistory> {
        self.histories.iter().find(|h| h.feeder() == feeder)
    }

    pub fn summary(&self) -> Summary {
        Summary {
            mode: self.scenario.mode,
            seed: self.scenario.seed,
            periods: self.scenario.periods,
            derived: derive_summary(&self.scenario, &self.elections, &self.voltage, &self.costs.rows),
            credit_audit: self.credit_audit,
            consensus: self.consensus,
            chain: self.chain,
            scenario: self.scenario.clone(),
        }
    }
}

/// Everything in here is a pure function of the emitted traces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedSummary {
    pub elections: u64,
    pub fairness_gap: BTreeMap<u16, f64>,
    pub overvoltage_minutes: f64,
    pub baseline_overvoltage_minutes: f64,
    pub undervoltage_minutes: f64,
    pub baseline_undervoltage_minutes: f64,
    pub max_voltage_pu: f64,
    pub baseline_max_voltage_pu: f64,
    pub cost: CostSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mode: RunMode,
    pub seed: u64,
    pub periods: u64,
    pub derived: DerivedSummary,
    pub credit_audit: CreditAudit,
    pub consensus: ConsensusStats,
    pub chain: Option<ChainStats>,
    pub scenario: Scenario,
}

/// Fairness gap per feeder; the DER set of a feeder is every DER that
/// demanded or was elected there.
pub fn fairness_by_feeder(elections: &[ElectionRecord]) -> BTreeMap<u16, f64> {
    let mut ders: BTreeMap<u16, BTreeSet<DerId>> = BTreeMap::new();
    for e in elections {
        let set = ders.entry(e.feeder).or_default();
        set.insert(e.elected);
        set.extend(e.demands.demands.keys().copied());
    }
    ders.into_iter()
        .map(|(f, set)| {
            let mut h = ControlHistory::new(f, set);
            for e in elections.iter().filter(|e| e.feeder == f) {
                h.record(e.elected).expect("elected DER is in the set");
            }
            (f, fairness_gap(&h))
        })
        .collect()
}

pub fn derive_summary(s: &Scenario, elections: &[ElectionRecord], voltage: &[VoltageRow], costs: &[CostRow]) -> DerivedSummary {
    let minutes = s.grid_step_s / 60.0;
    let count = |pred: &dyn Fn(&VoltageRow) -> bool| voltage.iter().filter(|r| pred(r)).count() as f64 * minutes;
    let (v_max, v_min) = (s.grid.v_max, s.grid.v_min);
    let max = |f: fn(&VoltageRow) -> f64| voltage.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    DerivedSummary {
        elections: elections.len() as u64,
        fairness_gap: fairness_by_feeder(elections),
        overvoltage_minutes: count(&|r| r.voltage_pu > v_max),
        baseline_overvoltage_minutes: count(&|r| r.baseline_pu > v_max),
        undervoltage_minutes: count(&|r| r.voltage_pu < v_min),
        baseline_undervoltage_minutes: count(&|r| r.baseline_pu < v_min),
        max_voltage_pu: max(|r| r.voltage_pu),
        baseline_max_voltage_pu: max(|r| r.baseline_pu),
        cost: CostSummary::from_rows(costs),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: malformed row")]
    Malformed { path: String, line: usize },
    #[error("summary.json: {0}")]
    Summary(#[from] serde_json::Error),
}

fn read_rows<T>(dir: &Path, name: &str, parse: fn(&str) -> Option<T>) -> Result<Vec<T>, ReportError> {
    let path = dir.join(name);
    let text = std::fs::read_to_string(&path)
        .map_err(|source| ReportError::Io { path: path.display().to_string(), source })?;
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| parse(l).ok_or(ReportError::Malformed { path: path.display().to_string(), line: i + 1 }))
        .collect()
}

/// Reads `summary.json` and recomputes its derived part from the CSV traces
/// in `dir`. Returns the stored summary and the recomputed derived section.
pub fn recompute_summary(dir: &Path) -> Result<(Summary, DerivedSummary), ReportError> {
    let path = dir.join("summary.json");
    let text = std::fs::read_to_string(&path)
        .map_err(|source| ReportError::Io { path: path.display().to_string(), source })?;
    let stored: Summary = serde_json::from_str(&text)?;
    let elections = read_rows(dir, "election_trace.csv", ElectionRecord::from_csv)?;
    let voltage = read_rows(dir, "voltage_trace.csv", VoltageRow::from_csv)?;
    let costs = read_rows(dir, "cost_report.csv", CostRow::from_csv)?;
    let derived = derive_summary(&stored.scenario, &elections, &voltage, &costs);
    Ok((stored, derived))
}

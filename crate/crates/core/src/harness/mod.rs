//! Scenario orchestration: configuration, the three coordination modes,
//! artifacts, and batch sweeps.

pub mod artifacts;
pub mod blockchain;
pub mod centralized;
pub mod config;
pub mod plant;
pub mod report;
pub mod sweep;

use std::collections::BTreeMap;

use thiserror::Error;

pub use artifacts::{emit_artifacts, ArtifactError};
pub use blockchain::run_blockchain;
pub use centralized::{run_centralized, run_no_control};
pub use config::{load_config, ConfigError, RunMode, Scenario};
pub use plant::{simulate_grid, VoltageRow};
pub use report::{
    recompute_summary, ChainStats, ConsensusStats, CreditAudit, DerivedSummary, ElectionRecord, RunReport, Summary,
};
pub use sweep::{run_batch, Exec};

use crate::control::{ControlError, ControlHistory, CreditLedger, DerId};
use crate::grid::GridError;
use crate::netsim::TopologyError;
use crate::streams::fork;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("scenario mode is {actual}, expected {expected}")]
    WrongMode { expected: RunMode, actual: RunMode },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

/// Runs whichever mode the scenario selects.
pub fn run(s: &Scenario) -> Result<RunReport, RunError> {
    s.validate()?;
    match s.mode {
        RunMode::Centralized => run_centralized(s),
        RunMode::Blockchain => run_blockchain(s),
        RunMode::NoControl => run_no_control(s),
    }
}

fn expect_mode(s: &Scenario, expected: RunMode) -> Result<(), RunError> {
    if s.mode != expected {
        return Err(RunError::WrongMode { expected, actual: s.mode });
    }
    Ok(())
}

/// Feeders that have DERs at the start, with their initial members.
fn controlled_feeders(s: &Scenario) -> Vec<(u16, Vec<DerId>)> {
    let ders = s.initial_ders();
    (1..=s.feeder_count() as u16)
        .map(|f| (f, ders.iter().copied().filter(|d| d.feeder == f).collect::<Vec<_>>()))
        .filter(|(_, d)| !d.is_empty())
        .collect()
}

/// The shared initial credit split of a feeder; both coordination modes
/// start from it.
fn initial_ledger(s: &Scenario, feeder: u16, ders: &[DerId]) -> CreditLedger {
    CreditLedger::random_split(s.feeder_credit(feeder), ders, &mut fork(s.seed, "credit", u64::from(feeder), 0))
}

/// Mode histories rebuilt from the election records; joiners get a row
/// from the round they first take part in.
fn histories(s: &Scenario, elections: &[ElectionRecord]) -> Result<Vec<ControlHistory>, ControlError> {
    let joiners: BTreeMap<DerId, u64> = s.all_ders().into_iter().filter(|&(_, p)| p > 0).collect();
    let mut out = Vec::new();
    for (f, ders) in controlled_feeders(s) {
        let mut h = ControlHistory::new(f, ders);
        for e in elections.iter().filter(|e| e.feeder == f) {
            for (&d, &p) in joiners.iter().filter(|(d, _)| d.feeder == f) {
                if p + 1 == e.period {
                    h.add_der(d)?;
                }
            }
            h.record(e.elected)?;
        }
        out.push(h);
    }
    Ok(out)
}

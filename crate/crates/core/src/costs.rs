//! Communication-cost accounting: link-level bit counters per agent and
//! period, and the closed-form cost models they are compared against.

use serde::{Deserialize, Serialize};

use crate::control::DerId;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CostCategory {
    /// The agent's own demand update.
    OwnUpdate,
    /// The agent's own lock and withdraw updates, kept apart from the
    /// single-transaction term of the model.
    OwnControl,
    RelayUpdate,
    OwnBlock,
    RelayBlock,
    /// Centralized mode: DER to authority.
    Uplink,
    /// Centralized mode: authority to DER, charged to the receiving DER.
    Downlink,
}

/// Bits sent by one agent in one period.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentCost {
    pub own_update_bits: u64,
    pub own_control_bits: u64,
    pub relay_update_bits: u64,
    pub own_block_bits: u64,
    pub relay_block_bits: u64,
    pub uplink_bits: u64,
    pub downlink_bits: u64,
}

impl AgentCost {
    pub fn add(&mut self, cat: CostCategory, bits: u64) {
        let slot = match cat {
            CostCategory::OwnUpdate => &mut self.own_update_bits,
            CostCategory::OwnControl => &mut self.own_control_bits,
            CostCategory::RelayUpdate => &mut self.relay_update_bits,
            CostCategory::OwnBlock => &mut self.own_block_bits,
            CostCategory::RelayBlock => &mut self.relay_block_bits,
            CostCategory::Uplink => &mut self.uplink_bits,
            CostCategory::Downlink => &mut self.downlink_bits,
        };
        *slot += bits;
    }

    pub fn total(&self) -> u64 {
        self.own_update_bits
            + self.own_control_bits
            + self.relay_update_bits
            + self.own_block_bits
            + self.relay_block_bits
            + self.uplink_bits
            + self.downlink_bits
    }
}

/// Per-period, per-agent counters. A fresh row is opened for every period.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostCounters {
    agents: Vec<DerId>,
    periods: Vec<Vec<AgentCost>>,
}

impl CostCounters {
    pub fn new(agents: Vec<DerId>, periods: usize) -> Self {
        let n = agents.len();
        Self { agents, periods: vec![vec![AgentCost::default(); n]; periods] }
    }

    pub fn agents(&self) -> &[DerId] {
        &self.agents
    }

    pub fn periods(&self) -> usize {
        self.periods.len()
    }

    /// Bits sent outside the recorded horizon are ignored.
    pub fn record(&mut self, period: usize, agent: usize, cat: CostCategory, bits: u64) {
        if let Some(row) = self.periods.get_mut(period) {
            row[agent].add(cat, bits);
        }
    }

    pub fn get(&self, period: usize, agent: usize) -> AgentCost {
        self.periods[period][agent]
    }

    pub fn grand_total(&self) -> u64 {
        self.periods.iter().flatten().map(AgentCost::total).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostModelParams {
    /// Peers per agent.
    pub n: f64,
    pub l_u: u64,
    pub l_b: u64,
    pub l_w: u64,
    pub l_c: u64,
    pub l_mu: u64,
    /// Expected blocks per control period.
    pub n_b: f64,
    /// Probability that a given block is mined by the agent.
    pub p_b: f64,
    pub u_total: usize,
}

impl Default for CostModelParams {
    fn default() -> Self {
        Self { n: 3.0, l_u: 800, l_b: 8000, l_w: 64, l_c: 64, l_mu: 64, n_b: 90.0, p_b: 1.0 / 24.0, u_total: 24 }
    }
}

pub fn analytic_cost_blockchain(p: &CostModelParams, j_rc: f64, j_rb: f64) -> f64 {
    p.n * p.l_u as f64 + j_rc + p.p_b * p.n_b * p.n * p.l_b as f64 + j_rb
}

/// Single peer, no relaying, equal mining share.
pub fn analytic_cost_lower_bound(p: &CostModelParams) -> f64 {
    p.l_u as f64 + p.n_b * p.l_b as f64 / p.u_total as f64
}

pub fn analytic_cost_centralized(p: &CostModelParams) -> f64 {
    (p.l_w + p.l_c + p.l_mu) as f64
}

/// One line of `cost_report.csv`. In centralized runs the uplink report is
/// filed under `own_update_bits` and the downlink reply under
/// `own_control_bits`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub period: u64,
    pub agent: DerId,
    pub own_update_bits: u64,
    pub relay_update_bits: u64,
    pub own_block_bits: u64,
    pub relay_block_bits: u64,
    pub total_bits: u64,
    /// Model cost with this agent's degree and its measured relay bits.
    pub analytic_bc: f64,
    pub analytic_lb: f64,
    pub analytic_c: f64,
    pub own_control_bits: u64,
}

impl CostRow {
    pub const HEADER: &'static str = "period,agent,own_update_bits,relay_update_bits,own_block_bits,relay_block_bits,total_bits,analytic_bc,analytic_lb,analytic_c,own_control_bits";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.period,
            self.agent,
            self.own_update_bits,
            self.relay_update_bits,
            self.own_block_bits,
            self.relay_block_bits,
            self.total_bits,
            self.analytic_bc,
            self.analytic_lb,
            self.analytic_c,
            self.own_control_bits
        )
    }

    pub fn from_csv(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return None;
        }
        Some(Self {
            period: f[0].parse().ok()?,
            agent: f[1].parse().ok()?,
            own_update_bits: f[2].parse().ok()?,
            relay_update_bits: f[3].parse().ok()?,
            own_block_bits: f[4].parse().ok()?,
            relay_block_bits: f[5].parse().ok()?,
            total_bits: f[6].parse().ok()?,
            analytic_bc: f[7].parse().ok()?,
            analytic_lb: f[8].parse().ok()?,
            analytic_c: f[9].parse().ok()?,
            own_control_bits: f[10].parse().ok()?,
        })
    }

    /// The four terms of the blockchain cost model, without lock/withdraw.
    pub fn model_bits(&self) -> u64 {
        self.own_update_bits + self.relay_update_bits + self.own_block_bits + self.relay_block_bits
    }
}

/// Fleet-level aggregates over a set of rows.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub agent_periods: u64,
    pub mean_total_bits: f64,
    pub mean_model_bits: f64,
    pub min_model_bits: u64,
    pub mean_own_update_bits: f64,
    pub mean_own_block_bits: f64,
    pub mean_analytic_bc: f64,
    pub analytic_lb: f64,
    pub analytic_c: f64,
}

impl CostSummary {
    pub fn from_rows(rows: &[CostRow]) -> Self {
        let Some(first) = rows.first() else {
            return Self::default();
        };
        let n = rows.len() as f64;
        let mean = |f: fn(&CostRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        Self {
            agent_periods: rows.len() as u64,
            mean_total_bits: mean(|r| r.total_bits as f64),
            mean_model_bits: mean(|r| r.model_bits() as f64),
            min_model_bits: rows.iter().map(CostRow::model_bits).min().unwrap_or(0),
            mean_own_update_bits: mean(|r| r.own_update_bits as f64),
            mean_own_block_bits: mean(|r| r.own_block_bits as f64),
            mean_analytic_bc: mean(|r| r.analytic_bc),
            analytic_lb: first.analytic_lb,
            analytic_c: first.analytic_c,
        }
    }
}

/// Per-agent means over all periods next to the model's own-cost terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentCostMean {
    pub agent: DerId,
    pub degree: usize,
    pub mean_total_bits: f64,
    pub mean_own_update_bits: f64,
    pub mean_own_block_bits: f64,
    pub model_own_update_bits: f64,
    pub model_own_block_bits: f64,
    pub rel_err_own_update: f64,
    pub rel_err_own_block: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub rows: Vec<CostRow>,
    pub agents: Vec<AgentCostMean>,
    pub summary: CostSummary,
    /// Model own-block bits averaged over the fleet's degrees.
    pub model_fleet_own_block_bits: f64,
}

fn rel_err(measured: f64, model: f64) -> f64 {
    if model == 0.0 {
        if measured == 0.0 { 0.0 } else { f64::INFINITY }
    } else {
        (measured - model).abs() / model
    }
}

/// Turns raw counters into report rows. `degrees[i]` is agent `i`'s peer
/// count, used as `N` in the model for that agent.
pub fn empirical_cost_report(counters: &CostCounters, params: &CostModelParams, degrees: &[usize]) -> CostReport {
    let lb = analytic_cost_lower_bound(params);
    let c = analytic_cost_centralized(params);
    let mut rows = Vec::with_capacity(counters.periods() * counters.agents().len());
    for (period, costs) in counters.periods.iter().enumerate() {
        for (i, (&agent, cost)) in counters.agents.iter().zip(costs).enumerate() {
            let p = CostModelParams { n: degrees[i] as f64, ..*params };
            rows.push(CostRow {
                period: period as u64,
                agent,
                own_update_bits: cost.own_update_bits + cost.uplink_bits,
                relay_update_bits: cost.relay_update_bits,
                own_block_bits: cost.own_block_bits,
                relay_block_bits: cost.relay_block_bits,
                total_bits: cost.total(),
                analytic_bc: analytic_cost_blockchain(&p, cost.relay_update_bits as f64, cost.relay_block_bits as f64),
                analytic_lb: lb,
                analytic_c: c,
                own_control_bits: cost.own_control_bits + cost.downlink_bits,
            });
        }
    }

    let k = counters.periods().max(1) as f64;
    let agents: Vec<AgentCostMean> = counters
        .agents
        .iter()
        .enumerate()
        .map(|(i, &agent)| {
            let (mut total, mut upd, mut blk) = (0.0, 0.0, 0.0);
            for per in &counters.periods {
                total += per[i].total() as f64;
                upd += per[i].own_update_bits as f64;
                blk += per[i].own_block_bits as f64;
            }
            let n = degrees[i] as f64;
            let model_upd = n * params.l_u as f64;
            let model_blk = params.p_b * params.n_b * n * params.l_b as f64;
            AgentCostMean {
                agent,
                degree: degrees[i],
                mean_total_bits: total / k,
                mean_own_update_bits: upd / k,
                mean_own_block_bits: blk / k,
                model_own_update_bits: model_upd,
                model_own_block_bits: model_blk,
                rel_err_own_update: rel_err(upd / k, model_upd),
                rel_err_own_block: rel_err(blk / k, model_blk),
            }
        })
        .collect();
    let model_fleet_own_block_bits = if agents.is_empty() {
        0.0
    } else {
        agents.iter().map(|a| a.model_own_block_bits).sum::<f64>() / agents.len() as f64
    };
    let summary = CostSummary::from_rows(&rows);
    CostReport { rows, agents, summary, model_fleet_own_block_bits }
}

//! Scenario configuration: JSON with documented defaults, unknown keys
//! rejected, validated with the offending key path.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::MiningRule;
use crate::control::{Credit, DerId};
use crate::costs::CostModelParams;
use crate::grid::{DroopParams, LoadProfile, PvProfile};
use crate::netsim::LatencyModel;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("invalid value at `{path}`: {message}")]
    Validation { path: String, message: String },
}

fn bad(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Validation { path: path.to_string(), message: message.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Centralized,
    #[default]
    Blockchain,
    NoControl,
}

impl std::str::FromStr for RunMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "centralized" => Ok(RunMode::Centralized),
            "blockchain" => Ok(RunMode::Blockchain),
            "no_control" => Ok(RunMode::NoControl),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

impl std::fmt::Display for RunMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RunMode::Centralized => "centralized",
            RunMode::Blockchain => "blockchain",
            RunMode::NoControl => "no_control",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeederConfig {
    /// DERs installed on each feeder at the start; feeder `i` is numbered
    /// `i + 1`.
    pub ders: Vec<u16>,
    pub households: Vec<u32>,
}

impl Default for FeederConfig {
    fn default() -> Self {
        Self { ders: vec![0, 4, 4, 4, 4, 4, 4], households: vec![10; 7] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub v_ref: f64,
    pub gamma: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub v_pcc: f64,
    /// Voltage sensitivity per feeder (PU per kW). Empty selects the default
    /// schedule, growing with distance from the transformer.
    pub alpha: Vec<f64>,
    pub rated_kw: f64,
    pub s_max_kva: f64,
    /// Depth of the daily random PV dip; 0 gives identical clear-sky days.
    pub cloudiness: f64,
    pub pv: PvProfile,
    pub load: LoadProfile,
}

impl Default for GridConfig {
    fn default() -> Self {
        let d = DroopParams::default();
        Self {
            v_ref: d.v_ref,
            gamma: d.gamma,
            v_min: d.v_min,
            v_max: d.v_max,
            v_pcc: 1.0,
            alpha: Vec::new(),
            rated_kw: 4.0,
            s_max_kva: 5.0,
            cloudiness: 0.0,
            pv: PvProfile::default(),
            load: LoadProfile::default(),
        }
    }
}

/// Default sensitivity of feeder `f` (1-based).
pub fn default_alpha(f: usize) -> f64 {
    0.00505 + 0.00005 * f as f64
}

impl GridConfig {
    pub fn droop(&self) -> DroopParams {
        DroopParams { v_ref: self.v_ref, gamma: self.gamma, v_min: self.v_min, v_max: self.v_max }
    }

    pub fn alpha_for(&self, f: usize) -> f64 {
        self.alpha.get(f - 1).copied().unwrap_or_else(|| default_alpha(f))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainConfig {
    pub block_period_s: f64,
    pub mining: MiningRule,
    pub max_block_updates: usize,
    /// Blocks kept below the tip in each agent's view.
    pub prune_depth: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self { block_period_s: 10.0, mining: MiningRule::Abstract, max_block_updates: 256, prune_depth: 128 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub peers: usize,
    pub latency_min_s: f64,
    pub latency_max_s: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        let l = LatencyModel::default();
        Self { peers: 3, latency_min_s: l.min_s, latency_max_s: l.max_s }
    }
}

impl NetworkConfig {
    pub fn latency(&self) -> LatencyModel {
        LatencyModel { min_s: self.latency_min_s, max_s: self.latency_max_s }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostConfig {
    pub l_u: u64,
    pub l_b: u64,
    pub l_w: u64,
    pub l_c: u64,
    pub l_mu: u64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self { l_u: 800, l_b: 8000, l_w: 64, l_c: 64, l_mu: 64 }
    }
}

/// A DER plugged into `feeder` at the start of `period`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JoinConfig {
    pub feeder: u16,
    pub period: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub mode: RunMode,
    pub seed: u64,
    /// Control periods to simulate.
    pub periods: u64,
    pub control_period_s: f64,
    /// Lock instant as a fraction of the control period.
    pub lock_fraction: f64,
    /// Demands are sent no later than this long before the lock instant.
    pub demand_guard_s: f64,
    pub grid_step_s: f64,
    /// Desynchronized periods tolerated before the CLI reports failure.
    pub desync_budget: u64,
    /// Initial credit per DER, in milli-credits.
    pub credit_per_der: u64,
    pub feeders: FeederConfig,
    pub grid: GridConfig,
    pub chain: ChainConfig,
    pub network: NetworkConfig,
    pub costs: CostConfig,
    pub joins: Vec<JoinConfig>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            mode: RunMode::default(),
            seed: 1,
            periods: 96,
            control_period_s: 900.0,
            lock_fraction: 0.9,
            demand_guard_s: 5.0,
            grid_step_s: 60.0,
            desync_budget: 0,
            credit_per_der: 10_000,
            feeders: FeederConfig::default(),
            grid: GridConfig::default(),
            chain: ChainConfig::default(),
            network: NetworkConfig::default(),
            costs: CostConfig::default(),
            joins: Vec::new(),
        }
    }
}

impl Scenario {
    pub fn feeder_count(&self) -> usize {
        self.feeders.ders.len()
    }

    /// DERs present from the start, feeder-major.
    pub fn initial_ders(&self) -> Vec<DerId> {
        let mut out = Vec::new();
        for (i, &n) in self.feeders.ders.iter().enumerate() {
            out.extend((1..=n).map(|u| DerId::new(i as u16 + 1, u)));
        }
        out
    }

    /// Every DER with the period it starts participating (0 for initial
    /// ones), feeder-major. Joiners get the next unit numbers on their feeder.
    pub fn all_ders(&self) -> Vec<(DerId, u64)> {
        let mut out = Vec::new();
        for (i, &n) in self.feeders.ders.iter().enumerate() {
            let f = i as u16 + 1;
            out.extend((1..=n).map(|u| (DerId::new(f, u), 0)));
            let mut next = n;
            for j in self.joins.iter().filter(|j| j.feeder == f) {
                next += 1;
                out.push((DerId::new(f, next), j.period));
            }
        }
        out
    }

    pub fn feeder_credit(&self, f: u16) -> Credit {
        Credit(self.credit_per_der * u64::from(self.feeders.ders[f as usize - 1]))
    }

    /// Expected blocks per control period.
    pub fn blocks_per_period(&self) -> f64 {
        self.control_period_s / self.chain.block_period_s
    }

    pub fn cost_params(&self, peers: f64) -> CostModelParams {
        let u_total = self.all_ders().len().max(1);
        CostModelParams {
            n: peers,
            l_u: self.costs.l_u,
            l_b: self.costs.l_b,
            l_w: self.costs.l_w,
            l_c: self.costs.l_c,
            l_mu: self.costs.l_mu,
            n_b: self.blocks_per_period(),
            p_b: 1.0 / u_total as f64,
            u_total,
        }
    }

    // Negated comparisons so NaN fails every range check.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.periods < 1 {
            return Err(bad("periods", "must be at least 1"));
        }
        if !(self.control_period_s > 0.0) {
            return Err(bad("control_period_s", "must be positive"));
        }
        if !(self.lock_fraction > 0.0 && self.lock_fraction < 1.0) {
            return Err(bad("lock_fraction", "must lie strictly between 0 and 1"));
        }
        if !(self.demand_guard_s >= 0.0 && self.demand_guard_s < self.lock_fraction * self.control_period_s) {
            return Err(bad("demand_guard_s", "must be nonnegative and shorter than the collection window"));
        }
        if !(self.grid_step_s > 0.0) {
            return Err(bad("grid_step_s", "must be positive"));
        }
        if self.credit_per_der == 0 {
            return Err(bad("credit_per_der", "must be positive"));
        }
        let n = self.feeders.ders.len();
        if n == 0 || n > usize::from(u16::MAX) {
            return Err(bad("feeders.ders", "need at least one feeder"));
        }
        if self.feeders.households.len() != n {
            return Err(bad("feeders.households", format!("expected {n} entries, one per feeder")));
        }
        let g = &self.grid;
        if !g.droop().is_valid() {
            return Err(bad("grid", "need v_min < v_ref < v_max and gamma > 0"));
        }
        if !g.alpha.is_empty() && g.alpha.len() != n {
            return Err(bad("grid.alpha", format!("expected {n} entries or none")));
        }
        if g.alpha.iter().any(|a| !(*a > 0.0)) {
            return Err(bad("grid.alpha", "sensitivities must be positive"));
        }
        if !(g.rated_kw >= 0.0 && g.s_max_kva > 0.0) {
            return Err(bad("grid.rated_kw", "ratings must be nonnegative"));
        }
        if !(0.0..=1.0).contains(&g.cloudiness) {
            return Err(bad("grid.cloudiness", "must lie in [0, 1]"));
        }
        if !(g.pv.sunrise_h < g.pv.sunset_h && g.pv.exponent > 0.0) {
            return Err(bad("grid.pv", "need sunrise before sunset and a positive exponent"));
        }
        for (i, j) in self.joins.iter().enumerate() {
            if j.feeder == 0 || usize::from(j.feeder) > n {
                return Err(bad(&format!("joins[{i}].feeder"), "no such feeder"));
            }
            if self.feeders.ders[usize::from(j.feeder) - 1] == 0 {
                return Err(bad(&format!("joins[{i}].feeder"), "feeder has no initial DER"));
            }
            if j.period >= self.periods {
                return Err(bad(&format!("joins[{i}].period"), "beyond the simulated horizon"));
            }
        }
        if self.mode == RunMode::Blockchain {
            let c = &self.chain;
            if !(c.block_period_s > 0.0) {
                return Err(bad("chain.block_period_s", "must be positive"));
            }
            if self.control_period_s < 10.0 * c.block_period_s {
                return Err(bad("control_period_s", "must be at least ten block periods"));
            }
            if c.max_block_updates == 0 {
                return Err(bad("chain.max_block_updates", "must be positive"));
            }
            if c.prune_depth < 8 {
                return Err(bad("chain.prune_depth", "must be at least 8"));
            }
            if let MiningRule::Hash { difficulty_bits } = c.mining {
                if difficulty_bits > 24 {
                    return Err(bad("chain.mining.difficulty_bits", "at most 24"));
                }
            }
            let agents = self.all_ders().len();
            let net = &self.network;
            if net.peers == 0 || net.peers >= agents {
                return Err(bad("network.peers", format!("must lie in 1..{agents}")));
            }
            if !(net.latency_min_s >= 0.0 && net.latency_min_s <= net.latency_max_s) {
                return Err(bad("network.latency_min_s", "need 0 <= latency_min_s <= latency_max_s"));
            }
        }
        Ok(())
    }

    /// Parses and validates a JSON document.
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let s: Scenario = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_json_value(value: serde_json::Value) -> Result<Self, ConfigError> {
        let s: Scenario = serde_path_to_error::deserialize(value).map_err(|e| ConfigError::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        s.validate()?;
        Ok(s)
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<Scenario, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    Scenario::from_json_str(&text)
}

/// Sets a dotted key (`chain.block_period_s`) inside a JSON config document,
/// creating intermediate objects as needed.
pub fn set_json_path(doc: &mut serde_json::Value, path: &str, value: serde_json::Value) -> Result<(), ConfigError> {
    let mut cur = doc;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, key) in parts.iter().enumerate() {
        if key.is_empty() {
            return Err(bad(path, "empty key segment"));
        }
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| bad(&parts[..i].join("."), "not an object"))?;
        if i + 1 == parts.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(key.to_string()).or_insert_with(|| serde_json::json!({}));
    }
    Ok(())
}

//! Stepping the electrical model over a whole run for a fixed VSC schedule.
//! The chain never reads grid state, so the grid is replayed after the
//! coordination layer has fixed who regulates each period.

use serde::{Deserialize, Serialize};

use super::config::Scenario;
use crate::control::DerId;
use crate::grid::{step_grid, Conditions, DerUnit, FeederModel, GridError, SECONDS_PER_DAY};
use crate::streams::fork;
use rand::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoltageRow {
    pub time_s: f64,
    pub feeder: u16,
    pub voltage_pu: f64,
    /// Same instant with every DER at full output.
    pub baseline_pu: f64,
    pub vsc: Option<DerId>,
    pub curtailed_kw: f64,
    pub saturated: bool,
}

impl VoltageRow {
    pub const HEADER: &'static str = "time_s,feeder,voltage_pu,baseline_pu,vsc,curtailed_kw,saturated";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.time_s,
            self.feeder,
            self.voltage_pu,
            self.baseline_pu,
            self.vsc.map(|d| d.to_string()).unwrap_or_default(),
            self.curtailed_kw,
            u8::from(self.saturated)
        )
    }

    pub fn from_csv(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return None;
        }
        Some(Self {
            time_s: f[0].parse().ok()?,
            feeder: f[1].parse().ok()?,
            voltage_pu: f[2].parse().ok()?,
            baseline_pu: f[3].parse().ok()?,
            vsc: if f[4].is_empty() { None } else { Some(f[4].parse().ok()?) },
            curtailed_kw: f[5].parse().ok()?,
            saturated: f[6] == "1",
        })
    }
}

/// Daily PV scale factor: `1 - cloudiness * u_d` with `u_d` uniform per day.
pub fn clearness(seed: u64, day: u64, cloudiness: f64) -> f64 {
    if cloudiness == 0.0 {
        return 1.0;
    }
    1.0 - cloudiness * fork(seed, "weather", day, 0).random::<f64>()
}

fn build_feeders(s: &Scenario) -> Vec<FeederModel> {
    (0..s.feeder_count())
        .map(|i| FeederModel {
            index: i as u16 + 1,
            alpha: s.grid.alpha_for(i + 1),
            v_pcc: s.grid.v_pcc,
            ders: Vec::new(),
            households: s.feeders.households[i],
            load_kw: 0.0,
        })
        .collect()
}

/// Steps every feeder at each multiple of `grid_step_s` inside the horizon.
/// `schedule[k][f]` is feeder `f + 1`'s VSC during period `k`.
pub fn simulate_grid(s: &Scenario, schedule: &[Vec<Option<DerId>>]) -> Result<Vec<VoltageRow>, GridError> {
    let mut ctrl = build_feeders(s);
    let mut base = build_feeders(s);
    let mut pending: Vec<(DerId, u64)> = s.all_ders();
    pending.sort_by_key(|&(d, p)| (p, d));
    let mut pending = pending.into_iter().peekable();

    let droop = s.grid.droop();
    let none = vec![None; ctrl.len()];
    let horizon = s.periods as f64 * s.control_period_s;
    let steps = (horizon / s.grid_step_s).ceil() as u64;
    let mut rows = Vec::with_capacity(steps as usize * ctrl.len());
    let mut day_factor = (u64::MAX, 1.0);

    for j in 0..steps {
        let t = j as f64 * s.grid_step_s;
        let period = ((t / s.control_period_s) as u64).min(s.periods - 1);
        while let Some(&(der, _)) = pending.peek().filter(|(_, p)| *p <= period) {
            for feeders in [&mut ctrl, &mut base] {
                feeders[usize::from(der.feeder) - 1].ders.push(DerUnit::new(der, s.grid.s_max_kva));
            }
            pending.next();
        }
        let day = (t / SECONDS_PER_DAY) as u64;
        if day_factor.0 != day {
            day_factor = (day, clearness(s.seed, day, s.grid.cloudiness));
        }
        let cond = Conditions { rated_kw: s.grid.rated_kw, clearness: day_factor.1, pv: &s.grid.pv, load: &s.grid.load };
        let assigned = schedule.get(period as usize).unwrap_or(&none);
        let snap = step_grid(&mut ctrl, assigned, t, &cond, &droop)?;
        let baseline = step_grid(&mut base, &none, t, &cond, &droop)?;
        for (f, b) in snap.feeders.iter().zip(&baseline.feeders) {
            rows.push(VoltageRow {
                time_s: t,
                feeder: f.feeder,
                voltage_pu: f.voltage,
                baseline_pu: b.voltage,
                vsc: f.vsc,
                curtailed_kw: f.curtailment_kw,
                saturated: f.saturated,
            });
        }
    }
    Ok(rows)
}

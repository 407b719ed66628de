//! Electrical stand-in for the low-voltage grid.
//!
//! Each feeder is modeled by a single linear voltage sensitivity around the
//! PCC voltage, `v = v_pcc + alpha_f * P_net`. The feeder's VSC follows the
//! droop law `v = v_ref - gamma * (g - p)`; its setpoint is the intersection of
//! the two lines, clamped to `[0, g]`. Reactive power is bookkept from the
//! apparent-power limit but does not feed back into the voltage.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::DerId;

pub const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("active power {p} kW exceeds apparent limit {s_max} kVA")]
    Domain { p: f64, s_max: f64 },
    #[error("feeder {feeder}: VSC {der} is not installed on it")]
    UnknownVsc { feeder: u16, der: DerId },
    #[error("expected {expected} VSC assignments, got {got}")]
    AssignmentLength { expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Csc,
    Vsc,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DroopParams {
    pub v_ref: f64,
    pub gamma: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for DroopParams {
    fn default() -> Self {
        Self { v_ref: 1.0, gamma: 0.005, v_min: 0.95, v_max: 1.05 }
    }
}

impl DroopParams {
    pub fn is_valid(&self) -> bool {
        self.v_min < self.v_ref && self.v_ref < self.v_max && self.gamma > 0.0
    }
}

/// Droop law: voltage set by a VSC that curtails `g - p` kW.
pub fn droop_voltage(g: f64, p: f64, params: &DroopParams) -> f64 {
    params.v_ref - params.gamma * (g - p)
}

pub fn reactive_power(p: f64, s_max: f64) -> Result<f64, GridError> {
    if p > s_max || p < 0.0 {
        return Err(GridError::Domain { p, s_max });
    }
    Ok((s_max * s_max - p * p).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerUnit {
    pub id: DerId,
    /// Available power `g` in kW.
    pub capacity_kw: f64,
    /// Active output `p` in kW.
    pub setpoint_kw: f64,
    pub reactive_kvar: f64,
    pub s_max_kva: f64,
    pub mode: Mode,
}

impl DerUnit {
    pub fn new(id: DerId, s_max_kva: f64) -> Self {
        Self {
            id,
            capacity_kw: 0.0,
            setpoint_kw: 0.0,
            reactive_kvar: 0.0,
            s_max_kva,
            mode: Mode::Csc,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeederModel {
    pub index: u16,
    /// Voltage sensitivity in PU per kW of net injection.
    pub alpha: f64,
    pub v_pcc: f64,
    pub ders: Vec<DerUnit>,
    pub households: u32,
    /// Current total household consumption in kW.
    pub load_kw: f64,
}

impl FeederModel {
    pub fn net_injection(&self) -> f64 {
        self.ders.iter().map(|d| d.setpoint_kw).sum::<f64>() - self.load_kw
    }
}

/// Linearized feeder voltage for a net injection in kW.
pub fn feeder_voltage(net_injection: f64, feeder: &FeederModel) -> f64 {
    feeder.v_pcc + feeder.alpha * net_injection
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VscSetpoint {
    pub setpoint_kw: f64,
    /// Fully curtailed and the feeder is still above `v_max`.
    pub saturated: bool,
}

/// Intersects the droop line of `vsc` with the feeder's network line.
///
/// All other DERs contribute their current setpoints. When `alpha == gamma`
/// the lines are parallel; the VSC then keeps full output.
pub fn solve_vsc_setpoint(feeder: &FeederModel, vsc: &DerUnit, params: &DroopParams) -> VscSetpoint {
    let g = vsc.capacity_kw;
    let others: f64 = feeder
        .ders
        .iter()
        .filter(|d| d.id != vsc.id)
        .map(|d| d.setpoint_kw)
        .sum();
    let exogenous = others - feeder.load_kw;
    let slope = feeder.alpha - params.gamma;
    let unconstrained = if slope == 0.0 {
        g
    } else {
        (params.v_ref - params.gamma * g - feeder.v_pcc - feeder.alpha * exogenous) / slope
    };
    let setpoint_kw = unconstrained.clamp(0.0, g.max(0.0));
    let voltage = feeder.v_pcc + feeder.alpha * (exogenous + setpoint_kw);
    VscSetpoint {
        setpoint_kw,
        saturated: setpoint_kw == 0.0 && voltage > params.v_max,
    }
}

/// Clear-sky PV bell: `rated * sin(pi * x)^exponent` between sunrise and
/// sunset, peaking at their midpoint (solar noon).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PvProfile {
    pub sunrise_h: f64,
    pub sunset_h: f64,
    pub exponent: f64,
}

impl Default for PvProfile {
    fn default() -> Self {
        Self { sunrise_h: 5.0, sunset_h: 21.0, exponent: 2.0 }
    }
}

impl PvProfile {
    pub fn solar_noon_s(&self) -> f64 {
        (self.sunrise_h + self.sunset_h) * 0.5 * 3600.0
    }
}

pub fn pv_profile(t: f64, rated: f64, profile: &PvProfile) -> f64 {
    let sunrise = profile.sunrise_h * 3600.0;
    let sunset = profile.sunset_h * 3600.0;
    if t <= sunrise || t >= sunset {
        return 0.0;
    }
    let x = (t - sunrise) / (sunset - sunrise);
    rated * (std::f64::consts::PI * x).sin().powf(profile.exponent)
}

/// Household consumption: a flat base plus morning and evening Gaussian peaks,
/// using circular time-of-day distance so the curve is continuous at midnight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoadProfile {
    pub base_kw: f64,
    pub morning_kw: f64,
    pub morning_h: f64,
    pub morning_width_h: f64,
    pub evening_kw: f64,
    pub evening_h: f64,
    pub evening_width_h: f64,
}

impl Default for LoadProfile {
    fn default() -> Self {
        Self {
            base_kw: 0.3,
            morning_kw: 0.4,
            morning_h: 7.5,
            morning_width_h: 1.0,
            evening_kw: 0.9,
            evening_h: 19.0,
            evening_width_h: 1.5,
        }
    }
}

pub fn load_profile(t: f64, base: f64, profile: &LoadProfile) -> f64 {
    let hour = t / 3600.0;
    let bump = |center: f64, width: f64, amp: f64| {
        let d = (hour - center).rem_euclid(24.0);
        let d = d.min(24.0 - d);
        amp * (-(d * d) / (2.0 * width * width)).exp()
    };
    base + bump(profile.morning_h, profile.morning_width_h, profile.morning_kw)
        + bump(profile.evening_h, profile.evening_width_h, profile.evening_kw)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeederSnapshot {
    pub feeder: u16,
    pub voltage: f64,
    pub vsc: Option<DerId>,
    pub curtailment_kw: f64,
    pub saturated: bool,
    pub load_kw: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerSnapshot {
    pub id: DerId,
    pub capacity_kw: f64,
    pub setpoint_kw: f64,
    pub reactive_kvar: f64,
    pub mode: Mode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSnapshot {
    pub time_s: f64,
    pub feeders: Vec<FeederSnapshot>,
    pub ders: Vec<DerSnapshot>,
}

impl GridSnapshot {
    pub fn max_voltage(&self) -> f64 {
        self.feeders.iter().map(|f| f.voltage).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Exogenous conditions for one grid step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Conditions<'a> {
    pub rated_kw: f64,
    /// Daily PV scale factor in `[0, 1]`.
    pub clearness: f64,
    pub pv: &'a PvProfile,
    pub load: &'a LoadProfile,
}

/// Advances every feeder to time `t` (seconds since scenario start) with the
/// given VSC per feeder (`None` = no regulation on that feeder).
pub fn step_grid(
    feeders: &mut [FeederModel],
    vsc: &[Option<DerId>],
    t: f64,
    cond: &Conditions<'_>,
    params: &DroopParams,
) -> Result<GridSnapshot, GridError> {
    if vsc.len() != feeders.len() {
        return Err(GridError::AssignmentLength { expected: feeders.len(), got: vsc.len() });
    }
    let tod = t.rem_euclid(SECONDS_PER_DAY);
    let g = pv_profile(tod, cond.rated_kw, cond.pv) * cond.clearness;
    let per_household = load_profile(tod, cond.load.base_kw, cond.load);

    let mut snap = GridSnapshot { time_s: t, feeders: Vec::with_capacity(feeders.len()), ders: Vec::new() };
    for (feeder, assigned) in feeders.iter_mut().zip(vsc) {
        feeder.load_kw = per_household * f64::from(feeder.households);
        for d in &mut feeder.ders {
            d.capacity_kw = g.min(d.s_max_kva);
            d.setpoint_kw = d.capacity_kw;
            d.reactive_kvar = 0.0;
            d.mode = Mode::Csc;
        }
        let mut curtailment_kw = 0.0;
        let mut saturated = false;
        if let Some(id) = *assigned {
            let idx = feeder
                .ders
                .iter()
                .position(|d| d.id == id)
                .ok_or(GridError::UnknownVsc { feeder: feeder.index, der: id })?;
            let sol = solve_vsc_setpoint(feeder, &feeder.ders[idx], params);
            let unit = &mut feeder.ders[idx];
            unit.mode = Mode::Vsc;
            unit.setpoint_kw = sol.setpoint_kw;
            unit.reactive_kvar = reactive_power(sol.setpoint_kw, unit.s_max_kva)?;
            curtailment_kw = unit.capacity_kw - unit.setpoint_kw;
            saturated = sol.saturated;
        }
        snap.feeders.push(FeederSnapshot {
            feeder: feeder.index,
            voltage: feeder_voltage(feeder.net_injection(), feeder),
            vsc: *assigned,
            curtailment_kw,
            saturated,
            load_kw: feeder.load_kw,
        });
        snap.ders.extend(feeder.ders.iter().map(|d| DerSnapshot {
            id: d.id,
            capacity_kw: d.capacity_kw,
            setpoint_kw: d.setpoint_kw,
            reactive_kvar: d.reactive_kvar,
            mode: d.mode,
        }));
    }
    Ok(snap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn feeder(alpha: f64, other_kw: f64, load_kw: f64, g: f64) -> FeederModel {
        let mut vsc = DerUnit::new(DerId::new(1, 1), 5.0);
        vsc.capacity_kw = g;
        vsc.setpoint_kw = g;
        let mut other = DerUnit::new(DerId::new(1, 2), 1e9);
        other.capacity_kw = other_kw;
        other.setpoint_kw = other_kw;
        FeederModel { index: 1, alpha, v_pcc: 1.0, ders: vec![vsc, other], households: 0, load_kw }
    }

    /// Bisection on network(p) - droop(p) over [0, g]; falls back to the
    /// endpoint of least mismatch when the lines do not cross inside.
    fn bisect_setpoint(f: &FeederModel, params: &DroopParams) -> f64 {
        let g = f.ders[0].capacity_kw;
        let exo = f.ders[1].setpoint_kw - f.load_kw;
        let h = |p: f64| (f.v_pcc + f.alpha * (exo + p)) - droop_voltage(g, p, params);
        let (h0, hg) = (h(0.0), h(g));
        if h0.signum() == hg.signum() {
            return if h0.abs() < hg.abs() { 0.0 } else { g };
        }
        let (mut lo, mut hi) = (0.0, g);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(mid).signum() == h0.signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn droop_examples() {
        let p = DroopParams::default();
        assert_eq!(droop_voltage(4.0, 4.0, &p), 1.0);
        assert!((droop_voltage(4.0, 2.0, &p) - 0.99).abs() < 1e-12);
        assert_eq!(droop_voltage(0.0, 0.0, &p), 1.0);
    }

    #[test]
    fn reactive_examples() {
        assert_eq!(reactive_power(5.0, 5.0).unwrap(), 0.0);
        assert_eq!(reactive_power(0.0, 5.0).unwrap(), 5.0);
        assert!((reactive_power(3.0, 5.0).unwrap() - 4.0).abs() < 1e-12);
        assert!(matches!(reactive_power(5.1, 5.0), Err(GridError::Domain { .. })));
    }

    #[test]
    fn feeder_voltage_examples() {
        let mut f = feeder(0.002, 0.0, 0.0, 0.0);
        assert_eq!(feeder_voltage(0.0, &f), 1.0);
        assert!((feeder_voltage(10.0, &f) - 1.02).abs() < 1e-12);
        assert!((feeder_voltage(-10.0, &f) - 0.98).abs() < 1e-12);
        f.v_pcc = 1.01;
        assert_eq!(feeder_voltage(0.0, &f), 1.01);
    }

    #[test]
    fn setpoint_hand_solved_example() {
        // (1.0 - 0.005*4 - 1.0 - 0.002*20) / (0.002 - 0.005) = 20, clamped to 4.
        let f = feeder(0.002, 20.0, 0.0, 4.0);
        let s = solve_vsc_setpoint(&f, &f.ders[0], &DroopParams::default());
        assert_eq!(s.setpoint_kw, 4.0);
        assert!(!s.saturated);
    }

    #[test]
    fn setpoint_interior_solution_meets_droop() {
        // alpha = 0.006 > gamma: (1 - 0.02 - 1 + 0.021) / 0.001 = 1.0
        let params = DroopParams::default();
        let f = feeder(0.006, 0.0, 3.5, 4.0);
        let s = solve_vsc_setpoint(&f, &f.ders[0], &params);
        assert!((s.setpoint_kw - 1.0).abs() < 1e-9);
        assert!((s.setpoint_kw - bisect_setpoint(&f, &params)).abs() < 1e-9);
        let v = feeder_voltage(-3.5 + s.setpoint_kw, &f);
        assert!((v - droop_voltage(4.0, s.setpoint_kw, &params)).abs() < 1e-12);
    }

    #[test]
    fn setpoint_no_curtailment_when_at_reference() {
        // Net injection at full output is zero, so the feeder sits at v_ref.
        let params = DroopParams::default();
        let f = feeder(0.006, 2.0, 6.0, 4.0);
        let s = solve_vsc_setpoint(&f, &f.ders[0], &params);
        assert!((s.setpoint_kw - 4.0).abs() < 1e-9);
        assert_eq!(feeder_voltage(0.0, &f), params.v_ref);
    }

    #[test]
    fn setpoint_saturates() {
        let params = DroopParams::default();
        let f = feeder(0.006, 10.0, 0.0, 4.0);
        let s = solve_vsc_setpoint(&f, &f.ders[0], &params);
        assert_eq!(s.setpoint_kw, 0.0);
        assert!(s.saturated);
        let zero = feeder(0.006, 0.0, 3.0, 0.0);
        let s = solve_vsc_setpoint(&zero, &zero.ders[0], &params);
        assert_eq!(s.setpoint_kw, 0.0);
        assert!(!s.saturated);
    }

    #[test]
    fn pv_shape() {
        let p = PvProfile::default();
        assert_eq!(pv_profile(0.0, 4.0, &p), 0.0);
        assert!((pv_profile(p.solar_noon_s(), 4.0, &p) - 4.0).abs() < 1e-12);
        let mut prev = 0.0;
        let mut t = p.sunrise_h * 3600.0;
        while t <= p.solar_noon_s() {
            let v = pv_profile(t, 4.0, &p);
            assert!(v >= prev);
            prev = v;
            t += 60.0;
        }
    }

    #[test]
    fn load_shape() {
        let l = LoadProfile::default();
        for step in 0..1440 {
            let t = step as f64 * 60.0;
            let v = load_profile(t, l.base_kw, &l);
            assert!(v > 0.0);
            assert_eq!(v, load_profile(t, l.base_kw, &l));
        }
        assert!(load_profile(19.0 * 3600.0, l.base_kw, &l) > load_profile(13.0 * 3600.0, l.base_kw, &l));
        let before = load_profile(86_399.0, l.base_kw, &l);
        let after = load_profile(0.0, l.base_kw, &l);
        assert!((before - after).abs() < 1e-4);
    }

    fn grid(alpha: f64) -> Vec<FeederModel> {
        (1..=2)
            .map(|f| FeederModel {
                index: f,
                alpha: alpha + 0.0001 * f64::from(f),
                v_pcc: 1.0,
                ders: (1..=4).map(|u| DerUnit::new(DerId::new(f, u), 5.0)).collect(),
                households: 10,
                load_kw: 0.0,
            })
            .collect()
    }

    #[test]
    fn step_grid_night_is_control_invariant() {
        let (pv, load) = (PvProfile::default(), LoadProfile::default());
        let cond = Conditions { rated_kw: 4.0, clearness: 1.0, pv: &pv, load: &load };
        let params = DroopParams::default();
        let vsc = [Some(DerId::new(1, 1)), Some(DerId::new(2, 3))];
        let a = step_grid(&mut grid(0.0052), &vsc, 3600.0, &cond, &params).unwrap();
        let b = step_grid(&mut grid(0.0052), &[None, None], 3600.0, &cond, &params).unwrap();
        for (x, y) in a.feeders.iter().zip(&b.feeders) {
            assert_eq!(x.voltage, y.voltage);
            assert!(x.voltage < params.v_ref);
        }
    }

    #[test]
    fn step_grid_rejects_foreign_vsc() {
        let (pv, load) = (PvProfile::default(), LoadProfile::default());
        let cond = Conditions { rated_kw: 4.0, clearness: 1.0, pv: &pv, load: &load };
        let err = step_grid(&mut grid(0.0052), &[Some(DerId::new(2, 1)), None], 0.0, &cond, &DroopParams::default());
        assert!(matches!(err, Err(GridError::UnknownVsc { .. })));
        let err = step_grid(&mut grid(0.0052), &[None], 0.0, &cond, &DroopParams::default());
        assert!(matches!(err, Err(GridError::AssignmentLength { .. })));
    }

    proptest! {
        #[test]
        fn snapshot_power_invariants(t in 0.0f64..86_400.0, alpha in 0.001f64..0.01, unit in 1u16..=4, clear in 0.0f64..=1.0) {
            let (pv, load) = (PvProfile::default(), LoadProfile::default());
            let cond = Conditions { rated_kw: 4.0, clearness: clear, pv: &pv, load: &load };
            let snap = step_grid(&mut grid(alpha), &[Some(DerId::new(1, unit)), None], t, &cond, &DroopParams::default()).unwrap();
            for d in &snap.ders {
                prop_assert!(d.setpoint_kw >= 0.0 && d.setpoint_kw <= d.capacity_kw);
                if d.mode == Mode::Vsc {
                    let s2 = d.setpoint_kw * d.setpoint_kw + d.reactive_kvar * d.reactive_kvar;
                    prop_assert!((s2 - 25.0).abs() < 1e-9);
                }
            }
            prop_assert!(snap.feeders.iter().all(|f| f.voltage.is_finite()));
        }

        #[test]
        fn curtailment_never_raises_voltage(alpha in 0.001f64..0.01, exo in -20.0f64..20.0, p1 in 0.0f64..4.0, dp in 0.0f64..4.0) {
            let f = feeder(alpha, 0.0, 0.0, 4.0);
            let p0 = (p1 - dp).max(0.0);
            prop_assert!(feeder_voltage(exo + p0, &f) <= feeder_voltage(exo + p1, &f));
        }

        #[test]
        fn setpoint_agrees_with_bisection(alpha in 0.0055f64..0.01, other in 0.0f64..16.0, load in 0.0f64..15.0, g in 0.0f64..4.0) {
            let params = DroopParams::default();
            let f = feeder(alpha, other, load, g);
            let s = solve_vsc_setpoint(&f, &f.ders[0], &params);
            prop_assert!((s.setpoint_kw - bisect_setpoint(&f, &params)).abs() < 1e-6);
        }
    }
}

//! Acceptance runner: one PASS/FAIL line per criterion, non-zero exit on
//! any failure. Run with `cargo test --test acceptance`.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{four_der_feeder, induced_fork};
use fairgrid_core::control::{fairness_gap, DerId};
use fairgrid_core::costs::{
    analytic_cost_centralized, analytic_cost_lower_bound, empirical_cost_report, CostCategory, CostCounters,
    CostModelParams,
};
use fairgrid_core::harness::artifacts::ARTIFACTS;
use fairgrid_core::harness::sweep::seed_range;
use fairgrid_core::harness::{emit_artifacts, run, run_batch, Exec, RunMode, RunReport, Scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

type Check = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

fn default_run(mode: RunMode, seed: u64, periods: u64) -> RunReport {
    run(&Scenario { mode, seed, periods, ..Scenario::default() }).expect("run")
}

fn conserved(s: &Scenario, r: &RunReport) -> bool {
    r.credit_audit.violations == 0
        && r.credit_audit.checks > 0
        && !r.final_ledgers.is_empty()
        && r.final_ledgers.keys().all(|&f| r.final_credit(f) == Some(s.feeder_credit(f)))
}

fn credit_conservation() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0ffee);
    let (mut runs, mut bad) = (0, 0);
    for i in 0..120 {
        let mode = if i % 2 == 0 { RunMode::Centralized } else { RunMode::Blockchain };
        let mut s = four_der_feeder(mode, rng.random(), rng.random_range(1..25));
        let ders: u16 = rng.random_range(2..7);
        s.feeders.ders = vec![ders, rng.random_range(0..5)];
        s.feeders.households = vec![10, 10];
        s.credit_per_der = rng.random_range(1..20_000);
        s.network.peers = rng.random_range(1..usize::from(ders));
        let r = run(&s).expect("run");
        runs += 1;
        if !conserved(&s, &r) {
            bad += 1;
        }
    }
    let took = start.elapsed();
    Outcome::new(
        bad == 0 && runs >= 100 && took < Duration::from_secs(60),
        format!("{runs} runs across both modes, {bad} violating, {:.1} s (limit 60 s)", took.as_secs_f64()),
    )
}

fn fairness() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    for mode in [RunMode::Centralized, RunMode::Blockchain] {
        let seeds = seed_range(&four_der_feeder(mode, 0, 1000), 1, 100);
        let reports = run_batch(&seeds, Exec::Parallel);
        let gaps: Vec<f64> = reports.iter().map(|r| fairness_gap(&r.as_ref().expect("run").histories[0])).collect();
        let ok = gaps.iter().filter(|&&g| g <= 0.05).count();
        let worst = gaps.iter().copied().fold(0.0, f64::max);
        pass &= ok >= 95;
        parts.push(format!("{mode}: {ok}/100 seeds with gap <= 0.05 (worst {worst:.4})"));
    }
    let took = start.elapsed();
    pass &= took < Duration::from_secs(120);
    Outcome::new(pass, format!("{}; {:.1} s (target 120 s)", parts.join(", "), took.as_secs_f64()))
}

fn centralized_cost() -> Outcome {
    let r = default_run(RunMode::Centralized, 1, 96);
    let off = r.costs.rows.iter().filter(|row| row.total_bits != 192).count();
    let analytic = analytic_cost_centralized(&CostModelParams::default());
    Outcome::new(
        off == 0 && !r.costs.rows.is_empty() && analytic == 192.0,
        format!("{} agent-periods, {off} not at 192 bits, analytic {analytic}", r.costs.rows.len()),
    )
}

fn lower_bound() -> Outcome {
    let params = CostModelParams::default();
    let lb = analytic_cost_lower_bound(&params);

    let agents: Vec<DerId> = (0..24u16).map(|i| DerId::new(2 + i / 4, i % 4 + 1)).collect();
    let periods = 8;
    let mut c = CostCounters::new(agents, periods);
    for p in 0..periods {
        for a in 0..24 {
            c.record(p, a, CostCategory::OwnUpdate, params.l_u);
        }
    }
    for b in 0..90 * periods {
        c.record(b / 90, b % 24, CostCategory::OwnBlock, params.l_b);
    }
    let synthetic = empirical_cost_report(&c, &params, &[1; 24]);
    let synthetic_exact = synthetic.agents.iter().all(|a| a.mean_total_bits == lb)
        && synthetic.summary.mean_total_bits == lb;

    let r = default_run(RunMode::Blockchain, 1, 200);
    let min = r.costs.rows.iter().map(|row| row.model_bits()).min().unwrap_or(0);
    let fleet = r.costs.agents.iter().map(|a| a.mean_own_block_bits).sum::<f64>() / r.costs.agents.len() as f64;
    let model = r.costs.model_fleet_own_block_bits;
    let err = (fleet - model).abs() / model;
    Outcome::new(
        lb == 30_800.0 && synthetic_exact && min as f64 >= lb && err <= 0.10,
        format!(
            "analytic {lb}, synthetic exact {synthetic_exact}, min empirical {min} bits per agent-period, \
             fleet own-block {fleet:.0} vs model {model:.0} ({:.2}% off, limit 10%)",
            err * 100.0
        ),
    )
}

fn lower_bound_shape() -> Outcome {
    let c = analytic_cost_centralized(&CostModelParams::default());
    let values: Vec<f64> = (4..=40)
        .map(|u| analytic_cost_lower_bound(&CostModelParams { u_total: u, ..CostModelParams::default() }))
        .collect();
    let decreasing = values.windows(2).all(|w| w[1] < w[0]);
    let above = values.iter().all(|&v| v > c);
    Outcome::new(
        decreasing && above,
        format!("U 4..40: {:.0} down to {:.0}, decreasing {decreasing}, all above {c}", values[0], values[values.len() - 1]),
    )
}

fn voltage() -> Outcome {
    let base = Scenario { periods: 96, ..Scenario::default() };
    let nc = run(&Scenario { mode: RunMode::NoControl, ..base.clone() }).expect("run");
    let ctl = run(&Scenario { mode: RunMode::Centralized, ..base.clone() }).expect("run");
    let (sunrise, sunset) = (base.grid.pv.sunrise_h * 3600.0, base.grid.pv.sunset_h * 3600.0);
    let noon = base.grid.pv.solar_noon_s();

    let midday_max = nc
        .voltage
        .iter()
        .filter(|v| (v.time_s - noon).abs() <= 2.0 * 3600.0)
        .map(|v| v.voltage_pu)
        .fold(f64::MIN, f64::max);
    let a = midday_max > base.grid.v_max;

    assert_eq!(nc.voltage.len(), ctl.voltage.len());
    let (mut curtailed, mut b_bad, mut c_bad, mut night) = (0, 0, 0, 0);
    for (n, c) in nc.voltage.iter().zip(&ctl.voltage) {
        assert_eq!((n.time_s, n.feeder), (c.time_s, c.feeder));
        if c.curtailed_kw > 0.0 {
            curtailed += 1;
            if c.voltage_pu >= n.voltage_pu {
                b_bad += 1;
            }
        }
        if c.time_s <= sunrise || c.time_s >= sunset {
            night += 1;
            if c.voltage_pu != n.voltage_pu {
                c_bad += 1;
            }
        }
    }
    let at_noon: Vec<f64> = nc.voltage.iter().filter(|v| v.time_s == noon).map(|v| v.voltage_pu).collect();
    let d = at_noon.len() == base.feeder_count() && at_noon.windows(2).all(|w| w[0] < w[1]);

    let month = Scenario { periods: 30 * 96, ..base.clone() };
    let m_nc = run(&Scenario { mode: RunMode::NoControl, ..month.clone() }).expect("run").summary().derived;
    let m_ctl = run(&Scenario { mode: RunMode::Centralized, ..month }).expect("run").summary().derived;
    let over = m_ctl.overvoltage_minutes < 0.25 * m_nc.overvoltage_minutes;
    let under = m_ctl.undervoltage_minutes == m_nc.undervoltage_minutes;

    Outcome::new(
        a && curtailed > 0 && b_bad == 0 && night > 0 && c_bad == 0 && d && over && under,
        format!(
            "midday max {midday_max:.4} > {}: {a}; {b_bad}/{curtailed} curtailed steps not lower; \
             {c_bad}/{night} night steps differ; noon ordering {d}; 30 days overvoltage {} vs {} min, \
             undervoltage {} vs {} min",
            base.grid.v_max,
            m_ctl.overvoltage_minutes,
            m_nc.overvoltage_minutes,
            m_ctl.undervoltage_minutes,
            m_nc.undervoltage_minutes
        ),
    )
}

fn consensus() -> Outcome {
    let seeds = seed_range(&Scenario { periods: 50, ..Scenario::default() }, 1, 20);
    let (mut desync, mut stale, mut missed, mut reorgs) = (0, 0, 0, 0);
    for r in run_batch(&seeds, Exec::Parallel) {
        let r = r.expect("run");
        desync += r.consensus.desync_events;
        stale += r.consensus.stale_periods;
        missed += r.consensus.missed_demands;
        reorgs += r.chain.map_or(0, |c| c.reorgs);
    }
    let forks = 200;
    let (mut single, mut restored) = (0, 0);
    for seed in 0..forks {
        let o = induced_fork(seed);
        single += usize::from(o.single_tip);
        restored += usize::from(o.restored && o.reorged_views > 0);
    }
    Outcome::new(
        desync == 0 && stale == 0 && single == forks as usize && restored == forks as usize,
        format!(
            "20 seeds x 50 periods: {desync} disagreements, {stale} stale, {missed} missed demands, {reorgs} natural reorgs; \
             induced forks: {single}/{forks} single tip, {restored}/{forks} restored"
        ),
    )
}

fn equivalence() -> Outcome {
    let mut mismatched = Vec::new();
    let seeds = [1, 2, 3];
    for &seed in &seeds {
        let c = default_run(RunMode::Centralized, seed, 200);
        let b = default_run(RunMode::Blockchain, seed, 200);
        if c.elections != b.elections || c.elections.len() != 200 * 6 {
            mismatched.push(seed);
        }
    }
    Outcome::new(
        mismatched.is_empty(),
        format!("{} seeds x 200 periods x 6 feeders, mismatching seeds {mismatched:?}", seeds.len()),
    )
}

fn determinism() -> Outcome {
    let mut digests = Vec::new();
    for mode in [RunMode::Blockchain, RunMode::Blockchain, RunMode::Centralized, RunMode::Centralized] {
        let dir = tempfile::tempdir().expect("tempdir");
        emit_artifacts(&default_run(mode, 7, 24), dir.path()).expect("emit");
        let d: Vec<String> = ARTIFACTS
            .iter()
            .map(|n| hex::encode(Sha256::digest(std::fs::read(dir.path().join(n)).expect("read"))))
            .collect();
        digests.push(d);
    }
    let same = digests[0] == digests[1] && digests[2] == digests[3];
    Outcome::new(same, format!("{} artifacts per run, blockchain and centralized pairs identical: {same}", ARTIFACTS.len()))
}

fn main() -> ExitCode {
    let checks: [Check; 9] = [
        ("credit conservation", credit_conservation),
        ("fairness", fairness),
        ("centralized cost", centralized_cost),
        ("blockchain cost lower bound", lower_bound),
        ("lower bound shape", lower_bound_shape),
        ("voltage regulation", voltage),
        ("consensus", consensus),
        ("centralized/contract equivalence", equivalence),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let start = Instant::now();
        let o = check();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("{tag} {name}: {} [{:.1} s]", o.detail, start.elapsed().as_secs_f64());
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

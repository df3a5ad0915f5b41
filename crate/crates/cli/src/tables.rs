//! `stats` output and the reference tables.

use std::fmt::Write as _;

use anyhow::{bail, Result};

use sfv_core::stats::{
    catch_probability, collision_band, collision_budget, collision_stddev, detection_probability,
    expected_collisions, steal_capacity, CollisionModel, DEFAULT_BUDGET_Z,
};
use sfv_core::{ChoiceModel, ElectionConfig, Layout, SigningMode};

use crate::checks::Verdict;
use crate::pipeline::{run_trials, with_jobs, AttackParams, Scenario};
use crate::summary::{aligned, TrialTable};

fn fmt(x: f64) -> String {
    format!("{x:.6}")
}

pub fn stats_collisions(n: f64, s: f64, k: u32, z: f64) -> Result<String> {
    if k < 2 {
        bail!("k must be at least 2");
    }
    let model = CollisionModel::new(n, s)?;
    let rows: Vec<Vec<String>> = (2..=k)
        .map(|j| vec![j.to_string(), fmt(expected_collisions(&model, j))])
        .collect();
    let mut out = aligned(&["k", "expected"], &rows);
    let band = collision_band(&model, z);
    out.push('\n');
    for j in 2..=k {
        let _ = writeln!(out, "expected_c{j}={}", expected_collisions(&model, j));
    }
    let _ = writeln!(out, "sigma={}", collision_stddev(&model));
    let _ = writeln!(out, "z={z}");
    let _ = writeln!(out, "normal_low={}", band.normal_low);
    let _ = writeln!(out, "normal_high={}", band.normal_high);
    let _ = writeln!(out, "poisson_low={}", band.poisson_low);
    let _ = writeln!(out, "poisson_high={}", band.poisson_high);
    let _ = writeln!(out, "budget={}", collision_budget(&model, z));
    Ok(out)
}

pub fn stats_detection(v: u64, p: f64, threshold: u64) -> Result<String> {
    if !(0.0..=1.0).contains(&p) {
        bail!("p must lie in [0, 1], got {p}");
    }
    let d = detection_probability(v, p, threshold);
    let mut out = aligned(
        &["verifiers", "p", "threshold", "detection"],
        &[vec![v.to_string(), p.to_string(), threshold.to_string(), fmt(d)]],
    );
    let _ = writeln!(out, "\ndetection={d}");
    Ok(out)
}

pub fn stats_capacity(budget: u64, p: f64) -> Result<String> {
    let c = steal_capacity(budget, p)?;
    let mut out = aligned(
        &["budget", "p", "attempts", "steals"],
        &[vec![budget.to_string(), p.to_string(), fmt(c.attempts), fmt(c.expected_steals)]],
    );
    let _ = writeln!(out, "\nattempts={}\nexpected_steals={}", c.attempts, c.expected_steals);
    Ok(out)
}

pub fn stats_catch(m: u64, k: u64, a: u64) -> Result<String> {
    let p = catch_probability(m, k, a)?;
    let mut out = aligned(
        &["altered", "safe", "actionable", "catch"],
        &[vec![m.to_string(), k.to_string(), a.to_string(), fmt(p)]],
    );
    let _ = writeln!(out, "\ncatch_probability={p}");
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReportOptions {
    pub trials: u64,
    pub seed: u64,
    pub jobs: Option<usize>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self { trials: 100, seed: 20_240_601, jobs: None }
    }
}

fn scaled(layout: &Layout, seed: u64, width: u8) -> Result<ElectionConfig> {
    let mut cfg = ElectionConfig::from_layout(layout, seed)?;
    cfg.pseudonym_width = width;
    cfg.signing = SigningMode::Deferred;
    Ok(cfg)
}

struct Row {
    quantity: &'static str,
    value: String,
    reference: &'static str,
    ok: bool,
}

/// Closed-form numbers at national scale, then desk-scale Monte-Carlo
/// runs compared against the same formulas.
pub fn reproduce_reference_tables(opts: &ReportOptions) -> Result<Verdict> {
    let model = CollisionModel::new(1e7, 1e12)?;
    let e2 = expected_collisions(&model, 2);
    let sigma = collision_stddev(&model);
    let band = collision_band(&model, 3.0);
    let budget = collision_budget(&model, DEFAULT_BUDGET_Z);
    let cap = steal_capacity(20, 0.9)?;
    let catch = catch_probability(200_000, 100_000, 5_100_000)?;
    let det = detection_probability(1000, 0.02, 10);
    let rows = [
        Row { quantity: "E[C2] N=1e7 S=1e12", value: format!("{e2:.3}"), reference: "50", ok: (e2 - 50.0).abs() <= 0.5 },
        Row { quantity: "sigma", value: format!("{sigma:.4}"), reference: "7.07", ok: (sigma - 7.07).abs() <= 0.01 },
        Row {
            quantity: "3 sigma band",
            value: format!("[{:.2}, {:.2}]", band.normal_low, band.normal_high),
            reference: "28-72",
            ok: band.normal_low >= 28.0 && band.normal_high <= 72.0,
        },
        Row {
            quantity: "exact Poisson band",
            value: format!("[{}, {}]", band.poisson_low, band.poisson_high),
            reference: "-",
            ok: true,
        },
        Row { quantity: "collision budget", value: budget.to_string(), reference: "20", ok: budget == 20 },
        Row {
            quantity: "steal capacity B=20 p=0.9",
            value: format!("{:.1} / {:.1}", cap.attempts, cap.expected_steals),
            reference: "200/180",
            ok: (cap.attempts - 200.0).abs() < 1e-9 && (cap.expected_steals - 180.0).abs() < 1e-9,
        },
        Row {
            quantity: "catch probability",
            value: format!("{catch:.4}"),
            reference: "2%",
            ok: (catch - 0.02).abs() < 1e-12,
        },
        Row {
            quantity: "detection V=1000 t=10",
            value: format!("{det:.4}"),
            reference: "99.5%",
            ok: (det - 0.995).abs() <= 0.001,
        },
    ];
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.quantity.to_string(), r.value.clone(), r.reference.to_string(), r.ok.to_string()])
        .collect();
    let mut text = String::from("analytic\n");
    text.push_str(&aligned(&["quantity", "value", "reference", "ok"], &table));
    let mut pass = rows.iter().all(|r| r.ok);

    let trials = opts.trials;
    let mut section = |title: &str, table: TrialTable| {
        let _ = write!(text, "\n{title}\n");
        text.push_str(&table.summary_text());
        pass &= table.all_agree();
    };

    let mut honest = Layout::uniform(2, 20, 500);
    honest.precincts_per_cluster = Some(20);
    let cfg = scaled(&honest, opts.seed ^ 2, 6)?;
    section(
        "honest collisions, N=1e4 S=1e6",
        with_jobs(opts.jobs, || run_trials(&cfg, Scenario::Honest, &AttackParams::default(), trials))??,
    );

    let mut homogeneous = Layout::uniform(2, 20, 500);
    homogeneous.precincts_per_cluster = Some(5);
    homogeneous.choice = ChoiceModel::Preferences(vec![0.9, 0.1]);
    let cfg = scaled(&homogeneous, opts.seed ^ 3, 6)?;
    let params = AttackParams { budget: 19, ..AttackParams::default() };
    section(
        "homogeneous-precinct attack, B=19 p=0.9",
        with_jobs(opts.jobs, || run_trials(&cfg, Scenario::Homogeneous, &params, trials))??,
    );

    let mut central = Layout::uniform(2, 10, 1000);
    central.choice = ChoiceModel::Counts(vec![510, 490]);
    let cfg = scaled(&central, opts.seed ^ 4, 12)?;
    let params = AttackParams { altered: 200, safe: 100, verifiers: 100, threshold: 1, ..AttackParams::default() };
    section(
        "safe-vote alteration at 1/10 scale, A=5100 M=200 K=100 V=100",
        with_jobs(opts.jobs, || run_trials(&cfg, Scenario::Central, &params, trials))??,
    );
    Ok(Verdict { pass, text })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_lines_are_machine_readable() {
        let text = stats_collisions(1e7, 1e12, 3, 3.0).unwrap();
        let e2: f64 = text
            .lines()
            .find_map(|l| l.strip_prefix("expected_c2="))
            .unwrap()
            .parse()
            .unwrap();
        assert!((e2 - 50.0).abs() < 0.01);
        assert!(text.contains("budget=21"));
        assert!(stats_collisions(10.0, 100.0, 1, 3.0).is_err());
    }

    #[test]
    fn capacity_and_catch_lines() {
        assert!(stats_capacity(20, 0.9).unwrap().contains("expected_steals=180"));
        assert!(stats_capacity(20, 1.0).is_err());
        assert!(stats_catch(200_000, 100_000, 5_100_000).unwrap().contains("catch_probability=0.02\n"));
        assert!(stats_detection(10, 1.5, 1).is_err());
    }
}

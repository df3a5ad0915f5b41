//! Subcommands that read a run directory and pass or fail.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Result};

use sfv_core::audit::{
    electronic_batch_tallies, full_recount, plan_rla, run_rla, AuditDecision, RecountScope,
};
use sfv_core::ledger::NodeId;
use sfv_core::stats::{collision_band, CollisionModel};
use sfv_core::verification::{
    anti_stuffing_check, count_collisions, detect_semi_collisions, digital_tally, file_dispute, locate_vote,
    verify_cluster_manual, verify_hierarchy, ClusterCheckReport, Scope,
};
use sfv_core::{AntiStuffing, CandidateId, DisputeClass, ElectionConfig, Pseudonym, VerificationError};

use crate::files::{self, load_receipt, parse_precinct_list, Private, Published, CONFIG_FILE};
use crate::pipeline::{manifest_header, publish_ledgers, write_manifest};
use crate::summary::aligned;

pub const CERTIFICATE_FILE: &str = "audit-certificate.txt";
pub const RECOUNT_FILE: &str = "recount.txt";

/// Result of a check that ran to completion.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub pass: bool,
    pub text: String,
}

impl Verdict {
    fn new(pass: bool, mut text: String) -> Self {
        let _ = writeln!(text, "result={}", if pass { "pass" } else { "fail" });
        Self { pass, text }
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn run_config(dir: &Path) -> Result<ElectionConfig> {
    let path = dir.join(CONFIG_FILE);
    let (config, _) = ElectionConfig::parse(&files::read(&path)?).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    Ok(config)
}

pub fn verify_vote(dir: &Path, r: &str, candidate: Option<CandidateId>) -> Result<Verdict> {
    let flat = Published::load_flat(dir)?;
    let r = Pseudonym::parse(r, flat.width)?;
    let hits = locate_vote(&flat, r);
    let mut text = String::new();
    for h in hits {
        let _ = writeln!(text, "found r={} candidate={}", h.r, h.candidate);
    }
    let pass = match candidate {
        Some(c) => hits.iter().any(|h| h.candidate == c),
        None => !hits.is_empty(),
    };
    if hits.is_empty() {
        let _ = writeln!(text, "r={r} is not on the ledger");
    }
    Ok(Verdict::new(pass, text))
}

fn cluster_lines(report: &ClusterCheckReport) -> String {
    let mut text = String::new();
    let _ = writeln!(text, "cluster={}", report.cluster);
    if let Some(gap) = report.serial_gap {
        let _ = writeln!(text, "serial_gap row={} expected={} found={}", gap.position, gap.expected, gap.found);
    }
    if let Some(c) = report.split_block {
        let _ = writeln!(text, "split_block candidate={c}");
    }
    let _ = writeln!(text, "totals={}", join(&report.totals));
    let _ = writeln!(text, "dummies={}", join(&report.dummies));
    text
}

pub fn verify_cluster(path: &Path) -> Result<Verdict> {
    let text = files::read(path)?;
    let file = sfv_core::ledger::parse_cluster_unchecked(&text).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    let report = verify_cluster_manual(&file);
    Ok(Verdict::new(report.pass, cluster_lines(&report)))
}

pub fn verify_hierarchy_at(dir: &Path, path: Option<NodeId>) -> Result<Verdict> {
    let published = Published::load(dir)?;
    let reports: Vec<ClusterCheckReport> = published.clusters.iter().map(|(_, c)| verify_cluster_manual(c)).collect();
    let scope = path.map_or(Scope::Full, Scope::Path);
    let report = verify_hierarchy(&published.aggregates, &reports, scope)?;
    let rows: Vec<Vec<String>> = report
        .nodes
        .iter()
        .map(|n| vec![n.node.to_string(), n.own_ok.to_string(), n.subtree_ok.to_string()])
        .collect();
    let mut text = aligned(&["node", "own_ok", "subtree_ok"], &rows);
    let _ = writeln!(text, "entries_touched={}", report.entries_touched);
    Ok(Verdict::new(report.pass, text))
}

/// Flat tally, cluster manual tallies, the national aggregate, and the
/// anti-stuffing count must all agree.
pub fn tally(dir: &Path) -> Result<Verdict> {
    let published = Published::load(dir)?;
    let n = published.flat.num_candidates;
    let mut text = String::new();
    let flat_tally = match digital_tally(&published.flat) {
        Ok(t) => Some(t.into_iter().map(|x| x as i64).collect::<Vec<i64>>()),
        Err(VerificationError::NegativeTotal { candidate, total }) => {
            let _ = writeln!(text, "negative total {total} for candidate {candidate}");
            None
        }
        Err(e) => return Err(e.into()),
    };
    let reports: Vec<ClusterCheckReport> = published.clusters.iter().map(|(_, c)| verify_cluster_manual(c)).collect();
    let manual: Vec<i64> = (0..n).map(|k| reports.iter().map(|r| r.totals[k]).sum()).collect();
    let national = published
        .aggregates
        .iter()
        .find(|a| a.node == NodeId::National)
        .map(|a| a.totals.clone());
    let anti = anti_stuffing_check(&published.rolls, &published.flat);
    let rows: Vec<Vec<String>> = (0..n)
        .map(|k| {
            vec![
                k.to_string(),
                flat_tally.as_ref().map_or("-".into(), |t| t[k].to_string()),
                manual[k].to_string(),
                national.as_ref().map_or("-".into(), |t| t[k].to_string()),
            ]
        })
        .collect();
    text.push_str(&aligned(&["candidate", "flat", "clusters", "national"], &rows));
    if let Some(t) = &flat_tally {
        let _ = writeln!(text, "tally={}", join(t));
    }
    let _ = writeln!(
        text,
        "anti_stuffing={}",
        match anti {
            AntiStuffing::Ok => "ok".to_string(),
            AntiStuffing::Mismatch(d) => format!("mismatch {d:+}"),
        }
    );
    let pass = flat_tally.as_ref() == Some(&manual)
        && national.as_ref() == Some(&manual)
        && reports.iter().all(|r| r.pass)
        && anti == AntiStuffing::Ok;
    Ok(Verdict::new(pass, text))
}

/// Fails when C2 exceeds the upper edge of the natural band.
pub fn collisions(dir: &Path, z: f64) -> Result<Verdict> {
    let flat = Published::load_flat(dir)?;
    let census = count_collisions(&flat);
    let band = collision_band(&CollisionModel::for_width(flat.rows.len() as u64, flat.width), z);
    let rows: Vec<Vec<String>> = census.counts.iter().map(|(k, c)| vec![k.to_string(), c.to_string()]).collect();
    let mut text = aligned(&["k", "values"], &rows);
    for (r, cs) in census.colliding.iter().filter(|(_, cs)| cs.iter().any(|c| *c != cs[0])) {
        let _ = writeln!(text, "visible r={r} candidates={}", join(cs));
    }
    let _ = writeln!(text, "c2={}", census.c(2));
    let _ = writeln!(text, "expected={:.3}", band.mean);
    let _ = writeln!(text, "normal_band=[{:.3},{:.3}]", band.normal_low, band.normal_high);
    let _ = writeln!(text, "poisson_band=[{},{}]", band.poisson_low, band.poisson_high);
    let _ = writeln!(text, "visible={}", census.visible());
    Ok(Verdict::new(census.c(2) as f64 <= band.normal_high, text))
}

pub fn semi_collisions(dir: &Path, machine_width: u8) -> Result<Verdict> {
    let flat = Published::load_flat(dir)?;
    let report = detect_semi_collisions(&flat, machine_width)?;
    let mut text = String::new();
    let _ = writeln!(text, "pairs={}", report.pairs);
    let _ = writeln!(text, "triplets_plus={}", report.triplets_plus);
    for (prefix, c, count) in &report.flagged {
        let _ = writeln!(text, "flagged prefix={prefix:0w$} candidate={c} rows={count}", w = usize::from(machine_width));
    }
    Ok(Verdict::new(report.flagged.is_empty(), text))
}

pub fn dispute(dir: &Path, receipt: &Path, row: usize) -> Result<Verdict> {
    let flat = Published::load_flat(dir)?;
    let registry = Published::load_registry(dir)?;
    let receipt = load_receipt(receipt, flat.width)?;
    let outcome = file_dispute(&receipt, &flat, row, &registry)?;
    let mut text = String::new();
    let claimed = receipt.rows[row];
    let _ = writeln!(text, "machine={} row={row} r={} candidate={}", receipt.machine, claimed.r, claimed.candidate);
    for l in &outcome.ledger_rows {
        let _ = writeln!(text, "ledger r={} candidate={}", l.r, l.candidate);
    }
    let class = match outcome.class {
        DisputeClass::RecordFound => "record-found",
        DisputeClass::SignatureValidMismatch => "signature-valid-mismatch",
        DisputeClass::SignatureValidConsistent => "signature-valid-consistent",
        DisputeClass::SignatureInvalid => "signature-invalid",
    };
    let _ = writeln!(text, "class={class}");
    Ok(Verdict::new(outcome.class == DisputeClass::RecordFound, text))
}

/// Winner's lead over the runner-up as a fraction of all votes.
pub fn reported_margin(totals: &[u64]) -> Result<f64> {
    let mut sorted = totals.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let all: u64 = sorted.iter().sum();
    if all == 0 {
        bail!("no votes to audit");
    }
    let second = sorted.get(1).copied().unwrap_or(0);
    Ok((sorted[0] - second) as f64 / all as f64)
}

pub fn rla(dir: &Path, alpha: f64, margin: Option<f64>, seed: u64, tolerance: u64) -> Result<Verdict> {
    let config = run_config(dir)?;
    let private = Private::load(dir)?;
    let n = config.num_candidates();
    let electronic = electronic_batch_tallies(&private.records, config.precincts.len(), n);
    let margin = match margin {
        Some(m) => m,
        None => {
            let totals: Vec<u64> = (0..n).map(|k| electronic.iter().map(|b| b[k]).sum()).collect();
            reported_margin(&totals)?
        }
    };
    let plan = plan_rla(margin, electronic.len(), alpha, seed)?.with_tolerance(tolerance);
    let outcome = run_rla(&private.ballots, &electronic, &plan)?;
    let mut certificate = format!("margin={margin}\n");
    certificate.push_str(&outcome.certificate(&plan));
    files::write(&dir.join(CERTIFICATE_FILE), &certificate)?;
    Ok(Verdict::new(outcome.decision == AuditDecision::Certify, certificate))
}

pub fn parse_scope(text: &str) -> Result<RecountScope> {
    if text == "national" {
        return Ok(RecountScope::National);
    }
    let set: BTreeSet<_> = parse_precinct_list(text)?.into_iter().collect();
    Ok(RecountScope::Precincts(set))
}

/// Hand count of the boxes in scope against the electronic record.
pub fn recount(dir: &Path, scope: &RecountScope) -> Result<Verdict> {
    let config = run_config(dir)?;
    let private = Private::load(dir)?;
    let n = config.num_candidates();
    if let RecountScope::Precincts(set) = scope {
        if let Some(p) = set.iter().find(|p| p.index() >= config.precincts.len()) {
            bail!("unknown precinct {p}");
        }
    }
    let electronic = electronic_batch_tallies(&private.records, config.precincts.len(), n);
    let tally = full_recount(&private.ballots, scope, n);
    let mut text = String::new();
    let mut differing = 0;
    for (p, manual) in &tally.per_precinct {
        let e = &electronic[p.index()];
        let same = manual == e;
        differing += usize::from(!same);
        let _ = writeln!(text, "precinct={p} manual={} electronic={} match={same}", join(manual), join(e));
    }
    let _ = writeln!(text, "total={}", join(&tally.total));
    let _ = writeln!(text, "differing_precincts={differing}");
    files::write(&dir.join(RECOUNT_FILE), &text)?;
    Ok(Verdict::new(differing == 0, text))
}

/// Rebuilds the ledger files from the private electronic record.
pub fn publish(dir: &Path) -> Result<Verdict> {
    let config = run_config(dir)?;
    let private = Private::load(dir)?;
    let written = publish_ledgers(dir, &config, &private.records)?;
    let header = manifest_header(dir)?;
    write_manifest(dir, &header)?;
    Ok(Verdict::new(true, format!("ledger_files={written}\n")))
}

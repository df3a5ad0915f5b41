//! Risk-limiting audits over ballot boxes, scoped recounts, and the
//! recount triggers fed by verification results.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::index::sample;
use thiserror::Error;

use crate::engine::BallotBox;
use crate::randomness::{stream, Domain};
use crate::stats::{collision_band, CollisionModel};
use crate::types::{PrecinctId, VoteRecord};
use crate::verification::{DisputeClass, DisputeOutcome};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AuditError {
    #[error("reported margin is zero: tie, full recount required")]
    Tie,
    #[error("invalid audit parameter: {0}")]
    Parameter(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RlaPlan {
    pub risk_limit: f64,
    pub batches: usize,
    pub sample_size: usize,
    pub seed: u64,
    /// Largest per-batch discrepancy accepted without escalation.
    pub tolerance: u64,
}

impl RlaPlan {
    /// Aggregate discrepancy above which the audit escalates.
    pub fn threshold(&self) -> u64 {
        self.tolerance * self.sample_size as u64
    }

    pub fn with_tolerance(mut self, tolerance: u64) -> Self {
        self.tolerance = tolerance;
        self
    }
}

/// Batches that must be corrupted to overturn a vote margin, assuming
/// equal batch sizes and fully flipped batches.
fn corrupt_batches(margin: f64, batches: usize) -> usize {
    ((margin / 2.0 * batches as f64).ceil() as usize).clamp(1, batches)
}

/// Probability that `n` draws without replacement from `batches` miss all
/// `bad` ones.
pub fn miss_probability(batches: usize, bad: usize, n: usize) -> f64 {
    (0..n)
        .map(|i| {
            if i >= batches {
                0.0
            } else {
                (batches.saturating_sub(bad + i)) as f64 / (batches - i) as f64
            }
        })
        .product()
}

/// Sample size for a batch-comparison audit. `margin` is the reported
/// vote margin as a fraction of ballots cast.
pub fn plan_rla(margin: f64, batches: usize, alpha: f64, seed: u64) -> Result<RlaPlan, AuditError> {
    if batches == 0 {
        return Err(AuditError::Parameter("no batches".into()));
    }
    if !(alpha > 0.0) {
        return Err(AuditError::Parameter(format!("risk limit {alpha} must be positive")));
    }
    if margin.is_nan() || margin < 0.0 {
        return Err(AuditError::Parameter(format!("margin {margin} must be non-negative")));
    }
    if margin == 0.0 {
        return Err(AuditError::Tie);
    }
    let sample_size = if alpha >= 1.0 || margin >= 1.0 {
        1
    } else {
        let bad = corrupt_batches(margin, batches);
        let mut miss = 1.0;
        let mut n = 0;
        while miss > alpha && n < batches {
            miss *= (batches - bad).saturating_sub(n) as f64 / (batches - n) as f64;
            n += 1;
        }
        n.max(1)
    };
    Ok(RlaPlan {
        risk_limit: alpha.min(1.0),
        batches,
        sample_size,
        seed,
        tolerance: 0,
    })
}

/// Electronic per-precinct counts, dummies excluded.
pub fn electronic_batch_tallies(records: &[VoteRecord], num_precincts: usize, num_candidates: usize) -> Vec<Vec<u64>> {
    let mut tallies = vec![vec![0u64; num_candidates]; num_precincts];
    for r in records.iter().filter(|r| !r.is_dummy) {
        tallies[r.precinct.index()][r.candidate.index()] += 1;
    }
    tallies
}

/// Hand count of a box with the committee's dummy ballots set aside.
pub fn manual_count(ballot_box: &BallotBox, num_candidates: usize) -> Vec<u64> {
    let mut counts = ballot_box.count(num_candidates);
    for (c, d) in counts.iter_mut().zip(&ballot_box.dummy_marks) {
        *c -= u64::from(*d);
    }
    counts
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AuditDecision {
    Certify,
    EscalateFullRecount,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuditOutcome {
    pub decision: AuditDecision,
    pub sampled: Vec<PrecinctId>,
    /// L1 distance per sampled batch, in sample order.
    pub discrepancies: Vec<u64>,
    pub max_discrepancy: u64,
    pub aggregate: u64,
    /// Sampled batches with no ballot box.
    pub missing_boxes: Vec<PrecinctId>,
}

impl AuditOutcome {
    pub fn certificate(&self, plan: &RlaPlan) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "risk_limit={}", plan.risk_limit);
        let _ = writeln!(out, "batches={}", plan.batches);
        let _ = writeln!(out, "sample_size={}", plan.sample_size);
        let _ = writeln!(out, "seed={}", plan.seed);
        let _ = writeln!(out, "tolerance={}", plan.tolerance);
        for (p, d) in self.sampled.iter().zip(&self.discrepancies) {
            let _ = writeln!(out, "batch={p},discrepancy={d}");
        }
        for p in &self.missing_boxes {
            let _ = writeln!(out, "missing={p}");
        }
        let _ = writeln!(out, "max_discrepancy={}", self.max_discrepancy);
        let decision = match self.decision {
            AuditDecision::Certify => "certify",
            AuditDecision::EscalateFullRecount => "escalate",
        };
        let _ = writeln!(out, "decision={decision}");
        out
    }
}

pub fn run_rla(boxes: &[BallotBox], electronic: &[Vec<u64>], plan: &RlaPlan) -> Result<AuditOutcome, AuditError> {
    if electronic.len() != plan.batches {
        return Err(AuditError::Parameter(format!(
            "plan covers {} batches, {} tallies given",
            plan.batches,
            electronic.len()
        )));
    }
    let by_precinct: BTreeMap<PrecinctId, &BallotBox> = boxes.iter().map(|b| (b.precinct, b)).collect();
    let mut rng = stream(plan.seed, Domain::Audit, 0);
    let picks = sample(&mut rng, plan.batches, plan.sample_size.min(plan.batches));
    let mut outcome = AuditOutcome {
        decision: AuditDecision::Certify,
        sampled: Vec::with_capacity(plan.sample_size),
        discrepancies: Vec::with_capacity(plan.sample_size),
        max_discrepancy: 0,
        aggregate: 0,
        missing_boxes: Vec::new(),
    };
    for i in picks.iter() {
        let precinct = PrecinctId(i as u32);
        let e = &electronic[i];
        let Some(b) = by_precinct.get(&precinct) else {
            outcome.missing_boxes.push(precinct);
            continue;
        };
        let d: u64 = manual_count(b, e.len()).iter().zip(e).map(|(m, e)| m.abs_diff(*e)).sum();
        outcome.sampled.push(precinct);
        outcome.discrepancies.push(d);
        outcome.max_discrepancy = outcome.max_discrepancy.max(d);
        outcome.aggregate += d;
    }
    if !outcome.missing_boxes.is_empty()
        || outcome.max_discrepancy > plan.tolerance
        || outcome.aggregate > plan.threshold()
    {
        outcome.decision = AuditDecision::EscalateFullRecount;
    }
    Ok(outcome)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RecountScope {
    National,
    Precincts(BTreeSet<PrecinctId>),
}

impl RecountScope {
    pub fn contains(&self, p: PrecinctId) -> bool {
        match self {
            RecountScope::National => true,
            RecountScope::Precincts(set) => set.contains(&p),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecountTally {
    pub per_precinct: BTreeMap<PrecinctId, Vec<u64>>,
    pub total: Vec<u64>,
}

pub fn full_recount(boxes: &[BallotBox], scope: &RecountScope, num_candidates: usize) -> RecountTally {
    let mut per_precinct = BTreeMap::new();
    let mut total = vec![0u64; num_candidates];
    for b in boxes.iter().filter(|b| scope.contains(b.precinct)) {
        let counts = manual_count(b, num_candidates);
        for (t, c) in total.iter_mut().zip(&counts) {
            *t += c;
        }
        per_precinct.insert(b.precinct, counts);
    }
    RecountTally { per_precinct, total }
}

/// Replace the electronic counts of recounted precincts. Nothing else is
/// touched.
pub fn apply_recount(electronic: &mut [Vec<u64>], recount: &RecountTally) {
    for (p, counts) in &recount.per_precinct {
        if let Some(slot) = electronic.get_mut(p.index()) {
            slot.clone_from(counts);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TriggerThresholds {
    /// Mismatch disputes in one precinct needed to recount it.
    pub disputes_per_precinct: usize,
    /// Multiplier on sigma for the national collision flag.
    pub census_z: f64,
}

impl Default for TriggerThresholds {
    fn default() -> Self {
        Self {
            disputes_per_precinct: 1,
            census_z: crate::stats::DEFAULT_BUDGET_Z,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TriggerDecision {
    pub precincts: BTreeSet<PrecinctId>,
    pub national_review: bool,
}

impl TriggerDecision {
    pub fn is_quiet(&self) -> bool {
        self.precincts.is_empty() && !self.national_review
    }

    pub fn scope(&self) -> Option<RecountScope> {
        if self.national_review {
            Some(RecountScope::National)
        } else if !self.precincts.is_empty() {
            Some(RecountScope::Precincts(self.precincts.clone()))
        } else {
            None
        }
    }
}

/// `census` is the observed C_2 together with the model it is judged
/// against.
pub fn recount_trigger(
    disputes: &[DisputeOutcome],
    anti_stuffing: &[(PrecinctId, i64)],
    census: Option<(u64, CollisionModel)>,
    thresholds: &TriggerThresholds,
) -> TriggerDecision {
    let mut per: BTreeMap<PrecinctId, usize> = BTreeMap::new();
    for d in disputes.iter().filter(|d| d.class == DisputeClass::SignatureValidMismatch) {
        *per.entry(d.receipt.machine.into()).or_default() += 1;
    }
    let mut decision = TriggerDecision::default();
    decision.precincts.extend(
        per.into_iter()
            .filter(|(_, n)| *n >= thresholds.disputes_per_precinct.max(1))
            .map(|(p, _)| p),
    );
    decision
        .precincts
        .extend(anti_stuffing.iter().filter(|(_, d)| *d != 0).map(|(p, _)| *p));
    if let Some((c2, model)) = census {
        let band = collision_band(&model, thresholds.census_z);
        decision.national_review = c2 as f64 > band.normal_high;
    }
    decision
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{CandidateId, ClusterId, MachineId, Pseudonym, Receipt};

    #[test]
    fn sample_size_matches_closed_form() {
        // 100 batches, 4% margin: 2 bad batches, miss = (100-n)(99-n)/9900.
        let plan = plan_rla(0.04, 100, 0.05, 1).unwrap();
        let oracle = (1..=100)
            .find(|&n| ((100 - n) * (99 - n)) as f64 / 9900.0 <= 0.05)
            .unwrap();
        assert_eq!(plan.sample_size, oracle);
        assert_eq!(plan.sample_size, 78);
        assert!(miss_probability(100, 2, 78) <= 0.05);
        assert!(miss_probability(100, 2, 77) > 0.05);
    }

    #[test]
    fn plan_edges() {
        assert_eq!(plan_rla(0.02, 400, 1.0, 0).unwrap().sample_size, 1);
        assert_eq!(plan_rla(1.0, 400, 0.05, 0).unwrap().sample_size, 1);
        assert_eq!(plan_rla(0.0, 400, 0.05, 0), Err(AuditError::Tie));
        assert!(plan_rla(0.1, 0, 0.05, 0).is_err());
        assert!(plan_rla(0.1, 10, 0.0, 0).is_err());
        let tiny = plan_rla(1e-9, 50, 0.01, 0).unwrap();
        assert!(tiny.sample_size >= 1 && tiny.sample_size <= 50);
    }

    fn boxes(counts: &[[u32; 2]]) -> Vec<BallotBox> {
        counts
            .iter()
            .enumerate()
            .map(|(i, c)| BallotBox {
                precinct: PrecinctId(i as u32),
                marks: std::iter::repeat_n(CandidateId(0), c[0] as usize)
                    .chain(std::iter::repeat_n(CandidateId(1), c[1] as usize))
                    .collect(),
                dummy_marks: vec![0, 0],
            })
            .collect()
    }

    #[test]
    fn audit_detects_and_certifies() {
        let b = boxes(&[[3, 2], [4, 1], [2, 2]]);
        let honest: Vec<Vec<u64>> = vec![vec![3, 2], vec![4, 1], vec![2, 2]];
        let plan = RlaPlan { risk_limit: 0.05, batches: 3, sample_size: 3, seed: 9, tolerance: 0 };
        let ok = run_rla(&b, &honest, &plan).unwrap();
        assert_eq!(ok.decision, AuditDecision::Certify);
        assert_eq!(ok.discrepancies, vec![0, 0, 0]);
        let mut bad = honest.clone();
        bad[1] = vec![3, 2];
        let out = run_rla(&b, &bad, &plan).unwrap();
        assert_eq!(out.decision, AuditDecision::EscalateFullRecount);
        assert_eq!(out.max_discrepancy, 2);
        let lenient = run_rla(&b, &bad, &plan.clone().with_tolerance(2)).unwrap();
        assert_eq!(lenient.decision, AuditDecision::Certify);
        let missing = run_rla(&b[..2], &honest, &plan).unwrap();
        assert_eq!(missing.missing_boxes, vec![PrecinctId(2)]);
        assert_eq!(missing.decision, AuditDecision::EscalateFullRecount);
        assert!(out.certificate(&plan).ends_with("decision=escalate\n"));
    }

    #[test]
    fn recount_is_contained() {
        let b = boxes(&[[3, 2], [4, 1], [2, 2]]);
        let mut electronic = vec![vec![9, 9], vec![0, 5], vec![1, 1]];
        let scope = RecountScope::Precincts([PrecinctId(1)].into());
        let tally = full_recount(&b, &scope, 2);
        assert_eq!(tally.total, vec![4, 1]);
        apply_recount(&mut electronic, &tally);
        assert_eq!(electronic, vec![vec![9, 9], vec![4, 1], vec![1, 1]]);
        assert_eq!(full_recount(&b, &RecountScope::National, 2).total, vec![9, 5]);
    }

    #[test]
    fn manual_count_drops_dummies() {
        let mut b = boxes(&[[3, 2]]).remove(0);
        b.dummy_marks = vec![1, 1];
        assert_eq!(manual_count(&b, 2), vec![2, 1]);
        let rec = |p: u32, c: u16, d: bool| VoteRecord {
            r: Pseudonym::new(1, 6).unwrap(),
            candidate: CandidateId(c),
            cluster: ClusterId(0),
            precinct: PrecinctId(p),
            is_dummy: d,
        };
        let t = electronic_batch_tallies(&[rec(0, 0, true), rec(0, 1, false), rec(1, 0, false)], 2, 2);
        assert_eq!(t, vec![vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn triggers() {
        let quiet = recount_trigger(&[], &[], None, &TriggerThresholds::default());
        assert!(quiet.is_quiet() && quiet.scope().is_none());
        let dispute = DisputeOutcome {
            class: DisputeClass::SignatureValidMismatch,
            receipt: Receipt { machine: MachineId(7), rows: vec![], signature: vec![] },
            row: Some(0),
            ledger_rows: vec![],
        };
        let d = recount_trigger(&[dispute.clone()], &[(PrecinctId(2), -3), (PrecinctId(3), 0)], None, &TriggerThresholds::default());
        assert_eq!(d.precincts, [PrecinctId(2), PrecinctId(7)].into());
        let strict = TriggerThresholds { disputes_per_precinct: 2, ..Default::default() };
        assert!(recount_trigger(&[dispute], &[], None, &strict).is_quiet());
        // Mean 50, sigma sqrt(50): mean + 5 sigma is over the 2.83 sigma band.
        let model = CollisionModel::new(1e7, 1e12).unwrap();
        let five_sigma = (50.0 + 5.0 * 50f64.sqrt()).round() as u64;
        assert!(recount_trigger(&[], &[], Some((five_sigma, model)), &TriggerThresholds::default()).national_review);
        assert!(!recount_trigger(&[], &[], Some((50, model)), &TriggerThresholds::default()).national_review);
    }
}

//! Attack scenarios driven through the engine's hooks, and what the
//! verification layer makes of them.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::audit::{electronic_batch_tallies, run_rla, AuditError, AuditOutcome, RlaPlan};
use crate::config::{ElectionConfig, RngSetting};
use crate::engine::{
    run_election, BoothCheck, CastOutcome, CastPlan, Election, ElectionHooks, EngineError, FetchSource,
    LogEvent, RawElectionOutput, RecordPolicy, SessionView, VoterArrival,
};
use crate::ledger::build_format_a;
use crate::randomness::{draw_pseudonym, stream, Domain, EntropySplit, RngMode};
use crate::types::{CandidateId, ClusterId, MachineId, PrecinctId, Pseudonym, VoteRecord};
use crate::verification::{
    anti_stuffing_check, count_collisions, file_dispute, locate_vote, AntiStuffing, DisputeOutcome,
    VerificationError,
};

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("attack parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error(transparent)]
    Verification(#[from] VerificationError),
}

/// How identifiable votes become when decoys stop being cluster-wide.
#[derive(Clone, Debug, PartialEq)]
pub struct DegradationMetrics {
    /// Most receipts within one precinct showing the same decoy pseudonym.
    pub max_shared_decoy: usize,
    pub mean_precinct_max: f64,
    pub tally: Vec<u64>,
    pub fetches: FetchCounts,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FetchCounts {
    pub cluster_wide: usize,
    pub local_only: usize,
    pub escalated: usize,
    pub compromised: usize,
}

pub fn degradation_metrics(output: &RawElectionOutput) -> DegradationMetrics {
    let mut per_precinct: HashMap<PrecinctId, HashMap<Pseudonym, usize>> = HashMap::new();
    for issued in &output.receipts {
        let counts = per_precinct.entry(issued.precinct).or_default();
        for row in issued.receipt.rows.iter().filter(|r| r.candidate != issued.choice) {
            *counts.entry(row.r).or_default() += 1;
        }
    }
    let maxima: Vec<usize> = per_precinct
        .values()
        .map(|m| m.values().copied().max().unwrap_or(0))
        .collect();
    let mut fetches = FetchCounts::default();
    for event in &output.log {
        if let LogEvent::DecoyFetch { source, .. } = event {
            match source {
                FetchSource::ClusterWide => fetches.cluster_wide += 1,
                FetchSource::LocalOnly => fetches.local_only += 1,
                FetchSource::Escalated => fetches.escalated += 1,
                FetchSource::Compromised(_) => fetches.compromised += 1,
            }
        }
    }
    let mut tally = vec![0u64; output.num_candidates()];
    for r in output.records.iter().filter(|r| !r.is_dummy) {
        tally[r.candidate.index()] += 1;
    }
    DegradationMetrics {
        max_shared_decoy: maxima.iter().copied().max().unwrap_or(0),
        mean_precinct_max: if maxima.is_empty() {
            0.0
        } else {
            maxima.iter().sum::<usize>() as f64 / maxima.len() as f64
        },
        tally,
        fetches,
    }
}

struct DosHooks {
    clusters: Vec<ClusterId>,
    from: f64,
    to: f64,
}

impl ElectionHooks for DosHooks {
    fn before_session(&mut self, election: &mut Election, _arrival: &VoterArrival, position: usize) {
        let day = election.config().num_voters().max(1) as f64;
        let t = position as f64 / day;
        let cut = t >= self.from && t < self.to;
        for &c in &self.clusters {
            election.set_partition(c, cut);
        }
    }
}

/// Partitions `clusters` during the fraction `window` of the day.
pub fn run_localized_dos(
    config: ElectionConfig,
    window: (f64, f64),
    clusters: &[ClusterId],
) -> Result<(RawElectionOutput, DegradationMetrics), AttackError> {
    if !(0.0..=1.0).contains(&window.0) || !(0.0..=1.0).contains(&window.1) || window.0 > window.1 {
        return Err(AttackError::Parameter(format!("window {window:?} outside the polling day")));
    }
    if let Some(c) = clusters.iter().find(|c| c.index() >= config.num_clusters()) {
        return Err(AttackError::Parameter(format!("unknown cluster {c}")));
    }
    let mut hooks = DosHooks {
        clusters: clusters.to_vec(),
        from: window.0,
        to: window.1,
    };
    let output = run_election(config, &mut hooks)?;
    let metrics = degradation_metrics(&output);
    Ok((output, metrics))
}

struct CompromiseHooks(Vec<MachineId>);

impl ElectionHooks for CompromiseHooks {
    fn before_session(&mut self, election: &mut Election, _arrival: &VoterArrival, position: usize) {
        if position == 0 {
            for &m in &self.0 {
                election.compromise_machine(m);
            }
        }
    }
}

/// Compromised machines hand their peers one constant decoy per candidate.
pub fn run_malicious_decoys(
    config: ElectionConfig,
    machines: &[MachineId],
) -> Result<(RawElectionOutput, DegradationMetrics), AttackError> {
    if let Some(m) = machines.iter().find(|m| m.index() >= config.precincts.len()) {
        return Err(AttackError::Parameter(format!("unknown machine {m}")));
    }
    let output = run_election(config, &mut CompromiseHooks(machines.to_vec()))?;
    let metrics = degradation_metrics(&output);
    Ok((output, metrics))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Alteration {
    Flip { to: CandidateId },
    Drop,
}

pub type BlindStrategy = Arc<dyn Fn(&[usize], usize, &mut dyn RngCore) -> Vec<usize> + Send + Sync>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum VerifierSelection {
    None,
    /// Every voter checks.
    All,
    /// Indices into the issued receipts.
    Receipts(Vec<usize>),
    /// Uniform among all voters.
    Uniform(usize),
    /// Uniform among the target candidate's voters outside the safe pool.
    UnknownActionable(usize),
}

#[derive(Clone)]
pub struct CentralAttack {
    pub target: CandidateId,
    pub alteration: Alteration,
    /// Votes altered (M).
    pub altered: usize,
    /// Votes the attacker knows will never be checked (K).
    pub safe: usize,
    pub manual_verifiers: VerifierSelection,
    /// Verifiers whose software shows them a consistent fake. They never
    /// catch anything.
    pub digital_verifiers: usize,
    /// Catches needed to call the attack detected.
    pub threshold: usize,
    /// Picks the blind alterations from the unknown pool. Uniform if unset.
    pub blind: Option<BlindStrategy>,
    pub audit: Option<RlaPlan>,
    pub seed: u64,
}

impl CentralAttack {
    pub fn new(target: CandidateId, alteration: Alteration, altered: usize, safe: usize) -> Self {
        Self {
            target,
            alteration,
            altered,
            safe,
            manual_verifiers: VerifierSelection::None,
            digital_verifiers: 0,
            threshold: 1,
            blind: None,
            audit: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DetectionReport {
    pub verifiers: usize,
    pub catches: usize,
    pub detected: bool,
    pub disputes: Vec<DisputeOutcome>,
    /// C_2 after the attack minus C_2 before.
    pub census_delta: i64,
    pub anti_stuffing: AntiStuffing,
    pub rla: Option<AuditOutcome>,
    /// Alterations made without knowing whether the voter checks.
    pub blind_alterations: usize,
    /// Set when the safe pool alone covers every alteration.
    pub safe_pool_covers_all: bool,
}

#[derive(Clone, Debug)]
pub struct AlteredElection {
    pub records: Vec<VoteRecord>,
    /// Indices into the original records.
    pub altered: Vec<usize>,
    pub report: DetectionReport,
}

fn c2(records: &[VoteRecord], width: u8, n: usize) -> u64 {
    count_collisions(&build_format_a(records, width, n)).c(2)
}

/// Post-close alteration on the central server, then verification by the
/// simulated verifier population.
pub fn run_central_flip_drop(output: &RawElectionOutput, attack: &CentralAttack) -> Result<AlteredElection, AttackError> {
    let n = output.num_candidates();
    let width = output.config.pseudonym_width;
    if attack.target.index() >= n {
        return Err(AttackError::Parameter(format!("unknown candidate {}", attack.target)));
    }
    if let Alteration::Flip { to } = attack.alteration {
        if to.index() >= n || to == attack.target {
            return Err(AttackError::Parameter(format!("cannot flip {} to {to}", attack.target)));
        }
    }
    let mut receipt_of = vec![None; output.records.len()];
    for (i, issued) in output.receipts.iter().enumerate() {
        if let Some(rec) = issued.record {
            receipt_of[rec] = Some(i);
        }
    }
    let actionable: Vec<usize> = output
        .records
        .iter()
        .enumerate()
        .filter(|(i, r)| !r.is_dummy && r.candidate == attack.target && receipt_of[*i].is_some())
        .map(|(i, _)| i)
        .collect();
    if attack.altered > actionable.len() {
        return Err(AttackError::Parameter(format!(
            "{} alterations requested, {} actionable votes",
            attack.altered,
            actionable.len()
        )));
    }

    let mut rng = stream(attack.seed, Domain::Attack, 0);
    let mut pool = actionable.clone();
    pool.shuffle(&mut rng);
    let safe_count = attack.safe.min(pool.len());
    let (safe, unknown) = pool.split_at(safe_count);
    let from_safe = attack.altered.min(safe_count);
    let blind_count = attack.altered - from_safe;
    if blind_count > unknown.len() {
        return Err(AttackError::Parameter("not enough unknown votes".into()));
    }
    let blind: Vec<usize> = match &attack.blind {
        Some(f) => f(unknown, blind_count, &mut rng),
        None => sample(&mut rng, unknown.len(), blind_count)
            .iter()
            .map(|i| unknown[i])
            .collect(),
    };
    let mut altered: Vec<usize> = safe[..from_safe].iter().copied().chain(blind.iter().copied()).collect();
    altered.sort_unstable();
    altered.dedup();

    let mut vrng = stream(attack.seed, Domain::Verifiers, 0);
    let manual: Vec<usize> = match &attack.manual_verifiers {
        VerifierSelection::None => Vec::new(),
        VerifierSelection::All => (0..output.receipts.len()).collect(),
        VerifierSelection::Receipts(v) => v.clone(),
        VerifierSelection::Uniform(k) => {
            sample(&mut vrng, output.receipts.len(), (*k).min(output.receipts.len())).into_vec()
        }
        VerifierSelection::UnknownActionable(k) => sample(&mut vrng, unknown.len(), (*k).min(unknown.len()))
            .iter()
            .map(|i| receipt_of[unknown[i]].expect("actionable votes have receipts"))
            .collect(),
    };

    let altered_set: HashSet<usize> = altered.iter().copied().collect();
    let records: Vec<VoteRecord> = output
        .records
        .iter()
        .enumerate()
        .filter_map(|(i, r)| {
            if !altered_set.contains(&i) {
                return Some(*r);
            }
            match attack.alteration {
                Alteration::Flip { to } => Some(VoteRecord { candidate: to, ..*r }),
                Alteration::Drop => None,
            }
        })
        .collect();

    let flat = build_format_a(&records, width, n);
    let registry = output.registry();
    let mut disputes = Vec::new();
    for &v in &manual {
        let issued = output
            .receipts
            .get(v)
            .ok_or_else(|| AttackError::Parameter(format!("no receipt {v}")))?;
        let found = locate_vote(&flat, issued.r).iter().any(|row| row.candidate == issued.choice);
        if !found {
            let receipt = output.signed_receipt(v);
            disputes.push(file_dispute(&receipt, &flat, issued.choice.index(), &registry)?);
        }
    }
    let catches = disputes.len();
    let rla = match &attack.audit {
        Some(plan) => {
            let tallies = electronic_batch_tallies(&records, output.config.precincts.len(), n);
            Some(run_rla(&output.ballot_boxes, &tallies, plan)?)
        }
        None => None,
    };
    let report = DetectionReport {
        verifiers: manual.len() + attack.digital_verifiers,
        catches,
        detected: catches >= attack.threshold.max(1),
        census_delta: count_collisions(&flat).c(2) as i64 - c2(&output.records, width, n) as i64,
        anti_stuffing: anti_stuffing_check(&output.rolls, &flat),
        disputes,
        rla,
        blind_alterations: blind_count,
        safe_pool_covers_all: attack.safe >= attack.altered,
    };
    Ok(AlteredElection {
        records,
        altered,
        report,
    })
}

/// The safe-vote-pool attack: K known-unchecked votes are altered first,
/// the rest blindly, and manual verifiers come from the unknown pool.
pub fn run_safe_vote_alteration(
    output: &RawElectionOutput,
    target: CandidateId,
    to: CandidateId,
    altered: usize,
    safe: usize,
    manual_verifiers: usize,
    threshold: usize,
    seed: u64,
) -> Result<AlteredElection, AttackError> {
    let mut attack = CentralAttack::new(target, Alteration::Flip { to }, altered, safe);
    attack.manual_verifiers = VerifierSelection::UnknownActionable(manual_verifiers);
    attack.threshold = threshold;
    attack.seed = seed;
    run_central_flip_drop(output, &attack)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HomogeneousAttack {
    pub precincts: Vec<PrecinctId>,
    /// Visible collisions the attacker is willing to publish (B).
    pub budget: u64,
    pub beneficiary: CandidateId,
}

#[derive(Clone, Debug)]
pub struct HomogeneousOutcome {
    pub attempts: u64,
    pub steals: u64,
    pub visible_collisions: u64,
    pub in_booth_challenges: u64,
    /// Attempts abandoned for lack of a pseudonym to reuse.
    pub skipped: u64,
    pub output: RawElectionOutput,
}

struct HomogeneousHooks {
    targets: HashMap<PrecinctId, CandidateId>,
    budget: u64,
    beneficiary: CandidateId,
    rng: ChaCha8Rng,
    reused: HashSet<Pseudonym>,
    current: Option<(Pseudonym, bool)>,
    attempts: u64,
    steals: u64,
    visible: u64,
    challenges: u64,
    skipped: u64,
}

impl ElectionHooks for HomogeneousHooks {
    fn plan(&mut self, election: &Election, view: &SessionView) -> CastPlan {
        let mut plan = CastPlan::honest(election.config());
        self.current = None;
        let Some(&predicted) = self.targets.get(&view.precinct) else {
            return plan;
        };
        if self.visible >= self.budget {
            return plan;
        }
        let entries = election.cluster_entries(view.cluster, predicted);
        // With a single entry the voter's own decoy row would need it too.
        let pick = (0..8).find_map(|_| {
            if entries.len() < 2 {
                return None;
            }
            let r = election.records()[entries[self.rng.random_range(0..entries.len())]].r;
            (!self.reused.contains(&r)).then_some(r)
        });
        match pick {
            Some(r) => {
                plan.rng = RngMode::Rigged(r);
                self.current = Some((r, false));
            }
            None => self.skipped += 1,
        }
        plan
    }

    fn record_policy(&mut self, _e: &Election, view: &SessionView, _plan: &CastPlan, choice: CandidateId) -> RecordPolicy {
        match &mut self.current {
            Some((_, absorbed)) => {
                self.attempts += 1;
                if self.targets[&view.precinct] == choice {
                    *absorbed = true;
                    RecordPolicy::Absorb
                } else {
                    RecordPolicy::Publish
                }
            }
            None => RecordPolicy::Publish,
        }
    }

    fn after_cast(&mut self, election: &mut Election, view: &SessionView, _outcome: &CastOutcome, check: BoothCheck) {
        let Some((r, absorbed)) = self.current.take() else {
            return;
        };
        if check == BoothCheck::Challenge {
            self.challenges += 1;
            return;
        }
        if absorbed {
            let elsewhere = election
                .config()
                .precincts_in(view.cluster)
                .find(|&p| p != view.precinct)
                .unwrap_or(view.precinct);
            let fresh = draw_pseudonym(&mut self.rng, election.config().pseudonym_width);
            election.inject_record(elsewhere, self.beneficiary, fresh);
            self.steals += 1;
        } else {
            self.reused.insert(r);
            self.visible += 1;
        }
    }
}

/// Forces pseudonym reuse in precincts whose votes the attacker can
/// predict. A correct guess is absorbed and re-injected for the
/// beneficiary, a wrong one publishes a visible collision.
pub fn run_homogeneous_collision_attack(
    config: ElectionConfig,
    attack: &HomogeneousAttack,
) -> Result<HomogeneousOutcome, AttackError> {
    let mut targets = HashMap::new();
    for &p in &attack.precincts {
        if p.index() >= config.precincts.len() {
            return Err(AttackError::Parameter(format!("unknown precinct {p}")));
        }
        let predicted = config.precinct(p).choice.most_likely();
        if predicted == attack.beneficiary {
            return Err(AttackError::Parameter(format!("precinct {p} already favors the beneficiary")));
        }
        targets.insert(p, predicted);
    }
    if attack.beneficiary.index() >= config.num_candidates() {
        return Err(AttackError::Parameter(format!("unknown candidate {}", attack.beneficiary)));
    }
    let mut hooks = HomogeneousHooks {
        targets,
        budget: attack.budget,
        beneficiary: attack.beneficiary,
        rng: stream(config.seed, Domain::Attack, 0),
        reused: HashSet::new(),
        current: None,
        attempts: 0,
        steals: 0,
        visible: 0,
        challenges: 0,
        skipped: 0,
    };
    let output = run_election(config, &mut hooks)?;
    Ok(HomogeneousOutcome {
        attempts: hooks.attempts,
        steals: hooks.steals,
        visible_collisions: hooks.visible,
        in_booth_challenges: hooks.challenges,
        skipped: hooks.skipped,
        output,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SemiCollisionAttack {
    pub precinct: PrecinctId,
    pub candidate: CandidateId,
    pub forced_machine_part: u64,
    /// Stop once this many votes for `candidate` carry the forced prefix.
    pub repeats: usize,
}

#[derive(Clone, Debug)]
pub struct SemiCollisionOutcome {
    pub forced_sessions: usize,
    pub hits: usize,
    pub split: EntropySplit,
    pub output: RawElectionOutput,
}

struct SemiHooks {
    attack: SemiCollisionAttack,
    split: EntropySplit,
    forcing: bool,
    forced: usize,
    hits: usize,
}

impl ElectionHooks for SemiHooks {
    fn plan(&mut self, election: &Election, view: &SessionView) -> CastPlan {
        let mut plan = CastPlan::honest(election.config());
        self.forcing = view.precinct == self.attack.precinct && self.hits < self.attack.repeats;
        if self.forcing {
            plan.rng = RngMode::RiggedEntropy {
                split: self.split,
                forced_machine_part: self.attack.forced_machine_part,
            };
            self.forced += 1;
        }
        plan
    }

    fn record_policy(&mut self, _e: &Election, _v: &SessionView, _p: &CastPlan, choice: CandidateId) -> RecordPolicy {
        if self.forcing && choice == self.attack.candidate {
            self.hits += 1;
        }
        RecordPolicy::Publish
    }
}

/// A rigged device under voter entropy repeats its machine part.
pub fn run_semi_collision_attack(
    config: ElectionConfig,
    attack: SemiCollisionAttack,
) -> Result<SemiCollisionOutcome, AttackError> {
    let RngSetting::VoterEntropy(split) = config.rng else {
        return Err(AttackError::Parameter("election does not use voter entropy".into()));
    };
    if attack.forced_machine_part >= 10u64.pow(u32::from(split.machine_width)) {
        return Err(AttackError::Parameter("forced machine part exceeds its width".into()));
    }
    if attack.precinct.index() >= config.precincts.len() {
        return Err(AttackError::Parameter(format!("unknown precinct {}", attack.precinct)));
    }
    let mut hooks = SemiHooks {
        attack,
        split,
        forcing: false,
        forced: 0,
        hits: 0,
    };
    let output = run_election(config, &mut hooks)?;
    Ok(SemiCollisionOutcome {
        forced_sessions: hooks.forced,
        hits: hooks.hits,
        split,
        output,
    })
}

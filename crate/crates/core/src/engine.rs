//! The election protocol: seeding, voter sessions, decoy selection, receipt
//! printing, in-booth checks, and poll close.
//!
//! An [`Election`] advances one session at a time and is fully determined
//! by its config seed. [`run_election`] drives a whole election day from a
//! generated voter schedule; adversaries plug in through [`ElectionHooks`].

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::config::{ChoiceModel, ElectionConfig, RngSetting, SeedingMode, SigningMode};
use crate::randomness::{
    combine_voter_entropy, draw_commitment, draw_pseudonym, draw_rigged, stream, Domain,
    RandomnessError, RngMode,
};
use crate::signing::{KeyRegistry, MachineKeys};
use crate::types::{
    CandidateId, ClusterId, MachineId, PrecinctId, Pseudonym, Receipt, ReceiptRow, SessionId,
    TypeError, VoteRecord, VoterId,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cluster {0} was already seeded")]
    AlreadySeeded(ClusterId),
    #[error("cluster {0} has not been seeded; polls are not open")]
    NotSeeded(ClusterId),
    #[error("voter {voter} already crossed off in precinct {precinct}")]
    DoubleVote { precinct: PrecinctId, voter: VoterId },
    #[error("machine {machine} is busy with session {busy}")]
    SessionConflict { machine: MachineId, busy: SessionId },
    #[error("unknown session {0}")]
    UnknownSession(SessionId),
    #[error("session {session} is {status}, expected {expected}")]
    BadSessionState {
        session: SessionId,
        status: SessionStatus,
        expected: &'static str,
    },
    #[error("no eligible decoy for candidate {0}")]
    DecoyStarvation(CandidateId),
    #[error("voter entropy digits are required in voter-entropy mode")]
    EntropyMissing,
    #[error("protocol violation: session {0} still open at poll close")]
    OpenAtClose(SessionId),
    #[error("polls already closed")]
    PollsClosed,
    #[error(transparent)]
    Randomness(#[from] RandomnessError),
    #[error(transparent)]
    Type(#[from] TypeError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SessionStatus {
    Open,
    Cast,
    Challenged,
    Nullified,
}

impl fmt::Display for SessionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SessionStatus::Open => "open",
            SessionStatus::Cast => "cast",
            SessionStatus::Challenged => "challenged",
            SessionStatus::Nullified => "nullified",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Session {
    pub id: SessionId,
    pub precinct: PrecinctId,
    pub voter: VoterId,
    pub status: SessionStatus,
    pub tick: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

/// Voter-side filter on which prior records may serve as decoys.
#[derive(Clone, Default)]
pub enum DecoyConstraint {
    #[default]
    None,
    /// Skip records cast during ticks `from..=to`.
    ExcludeTimeWindow { from: u64, to: u64 },
    /// Decoys for the listed candidates must have pseudonyms of that parity.
    RequireParity(Vec<(CandidateId, Parity)>),
    Custom(Arc<dyn Fn(&VoteRecord, u64) -> bool + Send + Sync>),
}

impl fmt::Debug for DecoyConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecoyConstraint::None => f.write_str("None"),
            DecoyConstraint::ExcludeTimeWindow { from, to } => {
                write!(f, "ExcludeTimeWindow({from}..={to})")
            }
            DecoyConstraint::RequireParity(p) => write!(f, "RequireParity({p:?})"),
            DecoyConstraint::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl DecoyConstraint {
    pub fn is_none(&self) -> bool {
        matches!(self, DecoyConstraint::None)
    }

    fn admits(&self, record: &VoteRecord, tick: u64) -> bool {
        match self {
            DecoyConstraint::None => true,
            DecoyConstraint::ExcludeTimeWindow { from, to } => tick < *from || tick > *to,
            DecoyConstraint::RequireParity(rules) => rules
                .iter()
                .filter(|(c, _)| *c == record.candidate)
                .all(|(_, parity)| match parity {
                    Parity::Even => record.r.is_even(),
                    Parity::Odd => !record.r.is_even(),
                }),
            DecoyConstraint::Custom(f) => f(record, tick),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecoyLocality {
    ClusterWide,
    LocalOnly,
}

/// A read-only view of the decoys available to one machine.
#[derive(Clone, Copy)]
pub struct DecoyPool<'a> {
    pub records: &'a [VoteRecord],
    pub ticks: &'a [u64],
    /// Record indices per candidate.
    pub by_candidate: &'a [Vec<usize>],
    pub locality: DecoyLocality,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecoyPick {
    pub candidate: CandidateId,
    pub record: usize,
    pub r: Pseudonym,
}

/// Picks one prior record per candidate other than `choice`, uniformly
/// among those the constraint admits, with all pseudonyms on the receipt
/// distinct.
pub fn select_decoys<R: Rng + ?Sized>(
    pool: &DecoyPool<'_>,
    choice: CandidateId,
    true_r: Pseudonym,
    constraint: &DecoyConstraint,
    rng: &mut R,
) -> Result<Vec<DecoyPick>, EngineError> {
    let mut used = vec![true_r];
    let mut picks = Vec::with_capacity(pool.by_candidate.len().saturating_sub(1));
    for (c, entries) in pool.by_candidate.iter().enumerate() {
        let candidate = CandidateId(c as u16);
        if candidate == choice {
            continue;
        }
        let pick = if constraint.is_none() {
            pick_unconstrained(pool, entries, &used, rng)
        } else {
            let eligible: Vec<usize> = entries
                .iter()
                .copied()
                .filter(|&i| {
                    constraint.admits(&pool.records[i], pool.ticks[i])
                        && !used.contains(&pool.records[i].r)
                })
                .collect();
            (!eligible.is_empty()).then(|| eligible[rng.random_range(0..eligible.len())])
        };
        let record = pick.ok_or(EngineError::DecoyStarvation(candidate))?;
        let r = pool.records[record].r;
        used.push(r);
        picks.push(DecoyPick {
            candidate,
            record,
            r,
        });
    }
    Ok(picks)
}

fn pick_unconstrained<R: Rng + ?Sized>(
    pool: &DecoyPool<'_>,
    entries: &[usize],
    used: &[Pseudonym],
    rng: &mut R,
) -> Option<usize> {
    if entries.is_empty() {
        return None;
    }
    // Rejection sampling stays uniform over the admissible entries.
    for _ in 0..32 {
        let i = entries[rng.random_range(0..entries.len())];
        if !used.contains(&pool.records[i].r) {
            return Some(i);
        }
    }
    let eligible: Vec<usize> = entries
        .iter()
        .copied()
        .filter(|&i| !used.contains(&pool.records[i].r))
        .collect();
    (!eligible.is_empty()).then(|| eligible[rng.random_range(0..eligible.len())])
}

/// What the in-booth machine is told to do for one session.
#[derive(Clone, Debug)]
pub struct CastPlan {
    pub rng: RngMode,
    pub constraint: DecoyConstraint,
    pub tamper: Tamper,
    /// Digits the voter adds in voter-entropy modes.
    pub voter_entropy: Option<Pseudonym>,
}

impl CastPlan {
    pub fn honest(config: &ElectionConfig) -> Self {
        Self {
            rng: match config.rng {
                RngSetting::Honest => RngMode::Honest,
                RngSetting::VoterEntropy(split) => RngMode::VoterEntropy(split),
            },
            constraint: DecoyConstraint::None,
            tamper: Tamper::None,
            voter_entropy: None,
        }
    }
}

/// In-booth cheating attempts by a compromised machine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Tamper {
    #[default]
    None,
    /// Print the true pseudonym next to another candidate and record that
    /// candidate.
    ShiftTrueR(CandidateId),
    /// Mark the paper ballot for another candidate and record it.
    MarkBallot(CandidateId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum RecordPolicy {
    #[default]
    Publish,
    /// Print the receipt and mark the ballot but append nothing to the
    /// electronic record.
    Absorb,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CastOutcome {
    pub session: SessionId,
    pub receipt: Receipt,
    pub record: Option<VoteRecord>,
    pub ballot: CandidateId,
    /// The pseudonym physically shown by the generator.
    pub displayed_r: Pseudonym,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoothCheck {
    Ok,
    Challenge,
}

/// The voter's check: the generator's pseudonym is printed on the chosen
/// candidate's row and the paper ballot is marked for that candidate.
pub fn booth_check(
    receipt: &Receipt,
    displayed_r: Pseudonym,
    ballot: CandidateId,
    choice: CandidateId,
) -> BoothCheck {
    if receipt.row_for(choice) == Some(displayed_r) && ballot == choice {
        BoothCheck::Ok
    } else {
        BoothCheck::Challenge
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BallotBox {
    pub precinct: PrecinctId,
    /// Marked ballots, shuffled at poll close.
    pub marks: Vec<CandidateId>,
    /// Dummy ballots the committee cast here, per candidate.
    pub dummy_marks: Vec<u32>,
}

impl BallotBox {
    /// Hand count per candidate, dummies included.
    pub fn count(&self, num_candidates: usize) -> Vec<u64> {
        let mut counts = vec![0u64; num_candidates];
        for m in &self.marks {
            counts[m.index()] += 1;
        }
        counts
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VoterRoll {
    pub precinct: PrecinctId,
    pub crossed_off: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FetchSource {
    ClusterWide,
    LocalOnly,
    /// Local fallback failed; decoys came from the cluster after all.
    Escalated,
    /// Served by a compromised peer machine.
    Compromised(MachineId),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LogEvent {
    Seeded {
        precinct: PrecinctId,
        candidate: CandidateId,
        r: Pseudonym,
    },
    SessionOpened {
        session: SessionId,
        precinct: PrecinctId,
        voter: VoterId,
        tick: u64,
    },
    /// Voter-entropy commitment, logged before the voter's digits exist.
    Committed {
        session: SessionId,
        machine_part: Pseudonym,
        committed_suffix: Pseudonym,
    },
    DecoyFetch {
        session: SessionId,
        candidate: CandidateId,
        source: FetchSource,
    },
    ConstraintDropped {
        session: SessionId,
    },
    Cast {
        session: SessionId,
        tick: u64,
    },
    Challenge {
        session: SessionId,
    },
    Nullified {
        session: SessionId,
        revote: SessionId,
    },
}

impl fmt::Display for LogEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogEvent::Seeded { precinct, candidate, r } => {
                write!(f, "seeded precinct={precinct} candidate={candidate} r={r}")
            }
            LogEvent::SessionOpened { session, precinct, voter, tick } => write!(
                f,
                "open session={session} precinct={precinct} voter={voter} tick={tick}"
            ),
            LogEvent::Committed { session, machine_part, committed_suffix } => write!(
                f,
                "commit session={session} machine={machine_part} suffix={committed_suffix}"
            ),
            LogEvent::DecoyFetch { session, candidate, source } => {
                let source = match source {
                    FetchSource::ClusterWide => "cluster".to_string(),
                    FetchSource::LocalOnly => "local".to_string(),
                    FetchSource::Escalated => "escalated".to_string(),
                    FetchSource::Compromised(m) => format!("peer-{m}"),
                };
                write!(f, "decoy session={session} candidate={candidate} source={source}")
            }
            LogEvent::ConstraintDropped { session } => {
                write!(f, "constraint-dropped session={session}")
            }
            LogEvent::Cast { session, tick } => write!(f, "cast session={session} tick={tick}"),
            LogEvent::Challenge { session } => write!(f, "challenge session={session}"),
            LogEvent::Nullified { session, revote } => {
                write!(f, "nullified session={session} revote={revote}")
            }
        }
    }
}

/// A confirmed receipt and the private facts behind it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IssuedReceipt {
    pub session: SessionId,
    pub voter: VoterId,
    pub precinct: PrecinctId,
    pub choice: CandidateId,
    pub r: Pseudonym,
    pub receipt: Receipt,
    /// Index into [`RawElectionOutput::records`], absent when absorbed.
    pub record: Option<usize>,
}

/// Everything that exists once polls close.
#[derive(Clone, Debug)]
pub struct RawElectionOutput {
    pub config: Arc<ElectionConfig>,
    /// The electronic record in cast order, dummies first.
    pub records: Vec<VoteRecord>,
    pub record_ticks: Vec<u64>,
    pub ballot_boxes: Vec<BallotBox>,
    pub rolls: Vec<VoterRoll>,
    pub log: Vec<LogEvent>,
    pub receipts: Vec<IssuedReceipt>,
    pub keys: MachineKeys,
}

impl RawElectionOutput {
    pub fn num_candidates(&self) -> usize {
        self.config.num_candidates()
    }

    pub fn registry(&self) -> KeyRegistry {
        self.keys.registry()
    }

    /// Per-candidate totals of what voters actually chose.
    pub fn ground_truth_tally(&self) -> Vec<u64> {
        let mut t = vec![0u64; self.num_candidates()];
        for r in &self.receipts {
            t[r.choice.index()] += 1;
        }
        t
    }

    pub fn ground_truth_for(&self, precinct: PrecinctId) -> Vec<u64> {
        let mut t = vec![0u64; self.num_candidates()];
        for r in self.receipts.iter().filter(|r| r.precinct == precinct) {
            t[r.choice.index()] += 1;
        }
        t
    }

    pub fn dummy_count(&self) -> usize {
        self.records.iter().filter(|r| r.is_dummy).count()
    }

    /// The receipt as the voter holds it, signed even when signing was
    /// deferred.
    pub fn signed_receipt(&self, index: usize) -> Receipt {
        let mut receipt = self.receipts[index].receipt.clone();
        if receipt.signature.is_empty() {
            self.keys
                .sign_in_place(&mut receipt, self.num_candidates())
                .expect("engine receipts are well formed");
        }
        receipt
    }
}

struct Pending {
    receipt: Receipt,
    displayed_r: Pseudonym,
    ballot: CandidateId,
    choice: CandidateId,
    record: Option<usize>,
}

struct SessionState {
    session: Session,
    confirmed: bool,
    pending: Option<Pending>,
}

pub struct Election {
    config: Arc<ElectionConfig>,
    keys: MachineKeys,
    records: Vec<VoteRecord>,
    ticks: Vec<u64>,
    live: Vec<bool>,
    cluster_pool: Vec<Vec<Vec<usize>>>,
    local_pool: Vec<Vec<Vec<usize>>>,
    partitioned: Vec<bool>,
    compromised: Vec<bool>,
    seeded: Vec<bool>,
    sessions: Vec<SessionState>,
    busy: Vec<Option<SessionId>>,
    roll_names: Vec<HashSet<VoterId>>,
    rolls: Vec<VoterRoll>,
    boxes: Vec<BallotBox>,
    log: Vec<LogEvent>,
    issued: Vec<IssuedReceipt>,
    clock: u64,
    closed: bool,
}

impl Election {
    pub fn new(config: ElectionConfig) -> Result<Self, EngineError> {
        config.validate().map_err(|e| EngineError::Config(e.to_string()))?;
        let n = config.num_candidates();
        let precincts = config.precincts.len();
        let clusters = config.num_clusters();
        let keys = MachineKeys::derive(config.seed, precincts);
        Ok(Self {
            keys,
            records: Vec::with_capacity(config.num_voters() as usize),
            ticks: Vec::with_capacity(config.num_voters() as usize),
            live: Vec::with_capacity(config.num_voters() as usize),
            cluster_pool: vec![vec![Vec::new(); n]; clusters],
            local_pool: vec![vec![Vec::new(); n]; precincts],
            partitioned: vec![false; clusters],
            compromised: vec![false; precincts],
            seeded: vec![false; clusters],
            sessions: Vec::new(),
            busy: vec![None; precincts],
            roll_names: vec![HashSet::new(); precincts],
            rolls: (0..precincts)
                .map(|p| VoterRoll {
                    precinct: PrecinctId(p as u32),
                    crossed_off: 0,
                })
                .collect(),
            boxes: (0..precincts)
                .map(|p| BallotBox {
                    precinct: PrecinctId(p as u32),
                    marks: Vec::new(),
                    dummy_marks: vec![0; n],
                })
                .collect(),
            log: Vec::new(),
            issued: Vec::new(),
            clock: 0,
            closed: false,
            config: Arc::new(config),
        })
    }

    pub fn config(&self) -> &ElectionConfig {
        &self.config
    }

    pub fn records(&self) -> &[VoteRecord] {
        &self.records
    }

    pub fn is_live(&self, record: usize) -> bool {
        self.live[record]
    }

    pub fn rolls(&self) -> &[VoterRoll] {
        &self.rolls
    }

    pub fn log(&self) -> &[LogEvent] {
        &self.log
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn session(&self, id: SessionId) -> Option<&Session> {
        self.sessions.get(id.0 as usize).map(|s| &s.session)
    }

    /// Cluster-wide decoy candidates for `candidate`.
    pub fn cluster_entries(&self, cluster: ClusterId, candidate: CandidateId) -> &[usize] {
        &self.cluster_pool[cluster.index()][candidate.index()]
    }

    pub fn decoy_pool(&self, precinct: PrecinctId) -> DecoyPool<'_> {
        let cluster = self.config.precinct(precinct).cluster;
        if self.partitioned[cluster.index()] {
            self.pool_view(precinct, DecoyLocality::LocalOnly)
        } else {
            self.pool_view(precinct, DecoyLocality::ClusterWide)
        }
    }

    fn pool_view(&self, precinct: PrecinctId, locality: DecoyLocality) -> DecoyPool<'_> {
        let by_candidate = match locality {
            DecoyLocality::ClusterWide => {
                &self.cluster_pool[self.config.precinct(precinct).cluster.index()]
            }
            DecoyLocality::LocalOnly => &self.local_pool[precinct.index()],
        };
        DecoyPool {
            records: &self.records,
            ticks: &self.ticks,
            by_candidate,
            locality,
        }
    }

    /// Cuts a cluster's machines off from each other; they fall back to
    /// their own local history for decoys.
    pub fn set_partition(&mut self, cluster: ClusterId, partitioned: bool) {
        self.partitioned[cluster.index()] = partitioned;
    }

    pub fn is_partitioned(&self, cluster: ClusterId) -> bool {
        self.partitioned[cluster.index()]
    }

    /// A compromised machine answers every decoy request from its peers
    /// with one constant record per candidate.
    pub fn compromise_machine(&mut self, machine: MachineId) {
        self.compromised[machine.index()] = true;
    }

    /// Casts the committee's dummy votes for a cluster before polls open.
    pub fn seed_decoy_pool(&mut self, cluster: ClusterId) -> Result<Vec<VoteRecord>, EngineError> {
        self.ensure_open()?;
        if cluster.index() >= self.seeded.len() {
            return Err(EngineError::Config(format!("unknown cluster {cluster}")));
        }
        if self.seeded[cluster.index()] {
            return Err(EngineError::AlreadySeeded(cluster));
        }
        if self.config.candidates.is_empty() {
            return Err(EngineError::Config("no candidates".into()));
        }
        let stations: Vec<PrecinctId> = match self.config.seeding {
            SeedingMode::ClusterStation => vec![self.config.seeding_station(cluster)],
            SeedingMode::EveryStation => self.config.precincts_in(cluster).collect(),
        };
        let width = self.config.pseudonym_width;
        let per = self.config.dummies_per_candidate;
        let mut rng = stream(self.config.seed, Domain::Session, u64::MAX - u64::from(cluster.0));
        let mut out = Vec::new();
        // The committee redraws a clash so the first voters have distinct decoys.
        let space = 10u64.saturating_pow(u32::from(width));
        let mut drawn = HashSet::new();
        for precinct in stations {
            for candidate in self.config.candidate_ids() {
                for _ in 0..per {
                    let mut r = draw_pseudonym(&mut rng, width);
                    while (drawn.len() as u64) < space && !drawn.insert(r) {
                        r = draw_pseudonym(&mut rng, width);
                    }
                    let record = VoteRecord {
                        r,
                        candidate,
                        cluster,
                        precinct,
                        is_dummy: true,
                    };
                    self.push_record(record, 0);
                    self.boxes[precinct.index()].marks.push(candidate);
                    self.boxes[precinct.index()].dummy_marks[candidate.index()] += 1;
                    self.log.push(LogEvent::Seeded {
                        precinct,
                        candidate,
                        r: record.r,
                    });
                    out.push(record);
                }
            }
        }
        self.seeded[cluster.index()] = true;
        Ok(out)
    }

    pub fn seed_all(&mut self) -> Result<usize, EngineError> {
        let mut total = 0;
        for c in 0..self.config.num_clusters() {
            total += self.seed_decoy_pool(ClusterId(c as u32))?.len();
        }
        Ok(total)
    }

    fn push_record(&mut self, record: VoteRecord, tick: u64) -> usize {
        let idx = self.records.len();
        self.records.push(record);
        self.ticks.push(tick);
        self.live.push(true);
        self.cluster_pool[record.cluster.index()][record.candidate.index()].push(idx);
        self.local_pool[record.precinct.index()][record.candidate.index()].push(idx);
        idx
    }

    fn withdraw_record(&mut self, idx: usize) {
        let record = self.records[idx];
        self.live[idx] = false;
        self.cluster_pool[record.cluster.index()][record.candidate.index()].retain(|&i| i != idx);
        self.local_pool[record.precinct.index()][record.candidate.index()].retain(|&i| i != idx);
    }

    /// Server-side insertion of a record no voter cast.
    pub fn inject_record(
        &mut self,
        precinct: PrecinctId,
        candidate: CandidateId,
        r: Pseudonym,
    ) -> usize {
        let cluster = self.config.precinct(precinct).cluster;
        let tick = self.clock;
        self.push_record(
            VoteRecord {
                r,
                candidate,
                cluster,
                precinct,
                is_dummy: false,
            },
            tick,
        )
    }

    fn ensure_open(&self) -> Result<(), EngineError> {
        if self.closed {
            Err(EngineError::PollsClosed)
        } else {
            Ok(())
        }
    }

    /// Crosses the voter off the roll and activates the precinct machine.
    pub fn open_session(&mut self, precinct: PrecinctId, voter: VoterId) -> Result<SessionId, EngineError> {
        self.ensure_open()?;
        if precinct.index() >= self.rolls.len() {
            return Err(EngineError::Config(format!("unknown precinct {precinct}")));
        }
        let cluster = self.config.precinct(precinct).cluster;
        if !self.seeded[cluster.index()] {
            return Err(EngineError::NotSeeded(cluster));
        }
        if let Some(busy) = self.busy[precinct.index()] {
            return Err(EngineError::SessionConflict {
                machine: precinct.into(),
                busy,
            });
        }
        if self.roll_names[precinct.index()].contains(&voter) {
            return Err(EngineError::DoubleVote { precinct, voter });
        }
        self.roll_names[precinct.index()].insert(voter);
        self.rolls[precinct.index()].crossed_off += 1;
        Ok(self.start_session(precinct, voter))
    }

    fn start_session(&mut self, precinct: PrecinctId, voter: VoterId) -> SessionId {
        self.clock += 1;
        let id = SessionId(self.sessions.len() as u64);
        self.sessions.push(SessionState {
            session: Session {
                id,
                precinct,
                voter,
                status: SessionStatus::Open,
                tick: self.clock,
            },
            confirmed: false,
            pending: None,
        });
        self.busy[precinct.index()] = Some(id);
        self.log.push(LogEvent::SessionOpened {
            session: id,
            precinct,
            voter,
            tick: self.clock,
        });
        id
    }

    fn state(&self, id: SessionId) -> Result<&SessionState, EngineError> {
        self.sessions.get(id.0 as usize).ok_or(EngineError::UnknownSession(id))
    }

    fn expect_status(&self, id: SessionId, status: SessionStatus, expected: &'static str) -> Result<(), EngineError> {
        let actual = self.state(id)?.session.status;
        if actual != status {
            return Err(EngineError::BadSessionState {
                session: id,
                status: actual,
                expected,
            });
        }
        Ok(())
    }

    /// Draws the pseudonym, picks decoys, prints the receipt, marks the
    /// ballot and (under [`RecordPolicy::Publish`]) appends the record.
    pub fn cast_vote(
        &mut self,
        session: SessionId,
        choice: CandidateId,
        plan: &CastPlan,
        policy: RecordPolicy,
    ) -> Result<CastOutcome, EngineError> {
        self.ensure_open()?;
        self.expect_status(session, SessionStatus::Open, "open")?;
        let n = self.config.num_candidates();
        if choice.index() >= n {
            return Err(EngineError::Config(format!("unknown candidate {choice}")));
        }
        let precinct = self.state(session)?.session.precinct;
        let cluster = self.config.precinct(precinct).cluster;
        let mut rng = stream(self.config.seed, Domain::Session, session.0);

        let mut displayed_r = self.draw_displayed(session, plan, &mut rng)?;
        let mut picks = self.fetch_decoys(session, precinct, choice, displayed_r, &plan.constraint, &mut rng);
        // An honest draw that equals the only decoy left for some candidate
        // is spun again; with voter entropy the machine commits afresh.
        let respin = matches!(plan.rng, RngMode::Honest | RngMode::VoterEntropy(_));
        let mut spins = 0;
        while matches!(picks, Err(EngineError::DecoyStarvation(_))) && respin && spins < 16 {
            displayed_r = self.draw_displayed(session, plan, &mut rng)?;
            picks = self.fetch_decoys(session, precinct, choice, displayed_r, &plan.constraint, &mut rng);
            spins += 1;
        }
        let picks = picks?;

        let mut rows: Vec<ReceiptRow> = (0..n)
            .map(|c| ReceiptRow {
                r: displayed_r,
                candidate: CandidateId(c as u16),
            })
            .collect();
        for pick in &picks {
            rows[pick.candidate.index()].r = pick.r;
        }
        let mut recorded = choice;
        let mut ballot = choice;
        match plan.tamper {
            Tamper::None => {}
            Tamper::ShiftTrueR(other) => {
                let a = rows[choice.index()].r;
                rows[choice.index()].r = rows[other.index()].r;
                rows[other.index()].r = a;
                recorded = other;
            }
            Tamper::MarkBallot(other) => {
                ballot = other;
                recorded = other;
            }
        }
        let mut receipt = Receipt {
            machine: precinct.into(),
            rows,
            signature: Vec::new(),
        };
        if self.config.signing == SigningMode::Eager {
            self.keys.sign_in_place(&mut receipt, n)?;
        }

        let record = VoteRecord {
            r: displayed_r,
            candidate: recorded,
            cluster,
            precinct,
            is_dummy: false,
        };
        let tick = self.state(session)?.session.tick;
        let record_index = match policy {
            RecordPolicy::Publish => Some(self.push_record(record, tick)),
            RecordPolicy::Absorb => None,
        };
        self.boxes[precinct.index()].marks.push(ballot);
        self.log.push(LogEvent::Cast { session, tick });

        let state = &mut self.sessions[session.0 as usize];
        state.session.status = SessionStatus::Cast;
        state.pending = Some(Pending {
            receipt: receipt.clone(),
            displayed_r,
            ballot,
            choice,
            record: record_index,
        });
        Ok(CastOutcome {
            session,
            receipt,
            record: record_index.map(|_| record),
            ballot,
            displayed_r,
        })
    }

    fn draw_displayed(&mut self, session: SessionId, plan: &CastPlan, rng: &mut impl Rng) -> Result<Pseudonym, EngineError> {
        let width = self.config.pseudonym_width;
        match plan.rng {
            RngMode::Honest => Ok(draw_pseudonym(rng, width)),
            RngMode::Rigged(forced) => Ok(draw_rigged(forced)),
            RngMode::VoterEntropy(split) | RngMode::RiggedEntropy { split, .. } => {
                let forced = match plan.rng {
                    RngMode::RiggedEntropy { forced_machine_part, .. } => Some(forced_machine_part),
                    _ => None,
                };
                let commitment = draw_commitment(rng, split, forced)?;
                self.log.push(LogEvent::Committed {
                    session,
                    machine_part: commitment.machine_part,
                    committed_suffix: commitment.committed_suffix,
                });
                let voter_part = plan.voter_entropy.ok_or(EngineError::EntropyMissing)?;
                Ok(combine_voter_entropy(commitment, voter_part)?)
            }
        }
    }

    fn fetch_decoys(
        &mut self,
        session: SessionId,
        precinct: PrecinctId,
        choice: CandidateId,
        true_r: Pseudonym,
        constraint: &DecoyConstraint,
        rng: &mut impl Rng,
    ) -> Result<Vec<DecoyPick>, EngineError> {
        let locality = self.decoy_pool(precinct).locality;
        let mut source = match locality {
            DecoyLocality::ClusterWide => FetchSource::ClusterWide,
            DecoyLocality::LocalOnly => FetchSource::LocalOnly,
        };
        let mut attempt = select_decoys(&self.pool_view(precinct, locality), choice, true_r, constraint, rng);
        if matches!(attempt, Err(EngineError::DecoyStarvation(_))) && !constraint.is_none() {
            self.log.push(LogEvent::ConstraintDropped { session });
            attempt = select_decoys(&self.pool_view(precinct, locality), choice, true_r, &DecoyConstraint::None, rng);
        }
        if matches!(attempt, Err(EngineError::DecoyStarvation(_))) && locality == DecoyLocality::LocalOnly {
            source = FetchSource::Escalated;
            attempt = select_decoys(
                &self.pool_view(precinct, DecoyLocality::ClusterWide),
                choice,
                true_r,
                &DecoyConstraint::None,
                rng,
            );
        }
        let mut picks = attempt?;

        let mut used: Vec<Pseudonym> = std::iter::once(true_r).chain(picks.iter().map(|p| p.r)).collect();
        for pick in &mut picks {
            let owner = self.records[pick.record].precinct;
            let mut pick_source = source;
            if owner != precinct && self.compromised[owner.index()] {
                if let Some(&constant) = self.local_pool[owner.index()][pick.candidate.index()].first() {
                    let r = self.records[constant].r;
                    if r == pick.r || !used.contains(&r) {
                        used.retain(|&u| u != pick.r);
                        used.push(r);
                        pick.record = constant;
                        pick.r = r;
                        pick_source = FetchSource::Compromised(owner.into());
                    }
                }
            }
            self.log.push(LogEvent::DecoyFetch {
                session,
                candidate: pick.candidate,
                source: pick_source,
            });
        }
        Ok(picks)
    }

    /// The voter compares the generator display, the receipt, and the
    /// paper ballot. A challenge withdraws the record and the ballot.
    pub fn in_booth_check(&mut self, session: SessionId) -> Result<BoothCheck, EngineError> {
        self.ensure_open()?;
        self.expect_status(session, SessionStatus::Cast, "cast")?;
        let state = &self.sessions[session.0 as usize];
        if state.confirmed {
            return Err(EngineError::BadSessionState {
                session,
                status: SessionStatus::Cast,
                expected: "awaiting confirmation",
            });
        }
        let pending = state.pending.as_ref().expect("cast session has a pending receipt");
        let check = booth_check(&pending.receipt, pending.displayed_r, pending.ballot, pending.choice);
        let precinct = state.session.precinct;
        match check {
            BoothCheck::Ok => {
                let state = &mut self.sessions[session.0 as usize];
                state.confirmed = true;
                let pending = state.pending.take().expect("checked above");
                self.issued.push(IssuedReceipt {
                    session,
                    voter: state.session.voter,
                    precinct,
                    choice: pending.choice,
                    r: pending.displayed_r,
                    receipt: pending.receipt,
                    record: pending.record,
                });
                self.busy[precinct.index()] = None;
            }
            BoothCheck::Challenge => {
                let state = &mut self.sessions[session.0 as usize];
                state.session.status = SessionStatus::Challenged;
                let pending = state.pending.take().expect("checked above");
                if let Some(idx) = pending.record {
                    self.withdraw_record(idx);
                }
                let marks = &mut self.boxes[precinct.index()].marks;
                if let Some(pos) = marks.iter().rposition(|&m| m == pending.ballot) {
                    marks.remove(pos);
                }
                self.log.push(LogEvent::Challenge { session });
            }
        }
        Ok(check)
    }

    /// Nullifies a challenged session and opens a fresh one for the same
    /// voter. The roll is not crossed again.
    pub fn revote(&mut self, session: SessionId) -> Result<SessionId, EngineError> {
        self.ensure_open()?;
        self.expect_status(session, SessionStatus::Challenged, "challenged")?;
        let (precinct, voter) = {
            let s = &mut self.sessions[session.0 as usize];
            s.session.status = SessionStatus::Nullified;
            (s.session.precinct, s.session.voter)
        };
        self.busy[precinct.index()] = None;
        let revote = self.start_session(precinct, voter);
        self.log.push(LogEvent::Nullified { session, revote });
        Ok(revote)
    }

    /// Ends the election day. Fails if any session is still in progress.
    pub fn close_polls(&mut self) -> Result<RawElectionOutput, EngineError> {
        self.ensure_open()?;
        for s in &self.sessions {
            let unfinished = match s.session.status {
                SessionStatus::Open | SessionStatus::Challenged => true,
                SessionStatus::Cast => !s.confirmed,
                SessionStatus::Nullified => false,
            };
            if unfinished {
                return Err(EngineError::OpenAtClose(s.session.id));
            }
        }
        self.closed = true;

        let mut remap = vec![usize::MAX; self.records.len()];
        let mut records = Vec::with_capacity(self.records.len());
        let mut record_ticks = Vec::with_capacity(self.records.len());
        for (i, rec) in self.records.iter().enumerate() {
            if self.live[i] {
                remap[i] = records.len();
                records.push(*rec);
                record_ticks.push(self.ticks[i]);
            }
        }
        let mut receipts = std::mem::take(&mut self.issued);
        for r in &mut receipts {
            r.record = r.record.map(|i| remap[i]);
        }
        let mut ballot_boxes = std::mem::take(&mut self.boxes);
        for b in &mut ballot_boxes {
            b.marks
                .shuffle(&mut stream(self.config.seed, Domain::BallotShuffle, u64::from(b.precinct.0)));
        }
        Ok(RawElectionOutput {
            config: Arc::clone(&self.config),
            records,
            record_ticks,
            ballot_boxes,
            rolls: self.rolls.clone(),
            log: std::mem::take(&mut self.log),
            receipts,
            keys: self.keys.clone(),
        })
    }
}

/// One voter's arrival at a polling station.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VoterArrival {
    pub voter: VoterId,
    pub precinct: PrecinctId,
    pub choice: CandidateId,
}

/// Arrival order and choices for the whole day. Choices come from a stream
/// separate from the machines' streams, so two runs with the same seed see
/// the same voters making the same choices whatever the machines do.
pub fn voter_schedule(config: &ElectionConfig) -> Vec<VoterArrival> {
    let mut choices: Vec<Vec<CandidateId>> = config
        .precincts
        .iter()
        .map(|p| {
            let mut rng = stream(config.seed, Domain::Choice, u64::from(p.id.0));
            match &p.choice {
                ChoiceModel::Preferences(w) => {
                    let dist = WeightedIndex::new(w).expect("validated weights");
                    (0..p.voters).map(|_| CandidateId(dist.sample(&mut rng) as u16)).collect()
                }
                ChoiceModel::Counts(counts) => {
                    let mut v: Vec<CandidateId> = counts
                        .iter()
                        .enumerate()
                        .flat_map(|(c, &k)| std::iter::repeat_n(CandidateId(c as u16), k as usize))
                        .collect();
                    v.shuffle(&mut rng);
                    v
                }
            }
        })
        .collect();
    for c in &mut choices {
        c.reverse();
    }
    let mut order: Vec<PrecinctId> = config
        .precincts
        .iter()
        .flat_map(|p| std::iter::repeat_n(p.id, p.voters as usize))
        .collect();
    order.shuffle(&mut stream(config.seed, Domain::Arrival, 0));
    order
        .into_iter()
        .enumerate()
        .map(|(i, precinct)| VoterArrival {
            voter: VoterId(i as u64),
            precinct,
            choice: choices[precinct.index()].pop().expect("one choice per voter"),
        })
        .collect()
}

/// What hooks see before the voter chooses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SessionView {
    pub session: SessionId,
    pub voter: VoterId,
    pub precinct: PrecinctId,
    pub cluster: ClusterId,
    pub tick: u64,
    /// Position in the day's arrival order.
    pub position: usize,
    pub day_length: usize,
}

/// Extension points for adversaries and experiments. Every method has an
/// honest default.
pub trait ElectionHooks {
    fn before_session(&mut self, _election: &mut Election, _arrival: &VoterArrival, _position: usize) {}

    /// Decided before the voter's choice is known.
    fn plan(&mut self, election: &Election, _view: &SessionView) -> CastPlan {
        CastPlan::honest(election.config())
    }

    /// Decided once the machine sees the choice.
    fn record_policy(
        &mut self,
        _election: &Election,
        _view: &SessionView,
        _plan: &CastPlan,
        _choice: CandidateId,
    ) -> RecordPolicy {
        RecordPolicy::Publish
    }

    fn after_cast(
        &mut self,
        _election: &mut Election,
        _view: &SessionView,
        _outcome: &CastOutcome,
        _check: BoothCheck,
    ) {
    }
}

pub struct HonestHooks;

impl ElectionHooks for HonestHooks {}

/// Runs seeding, every voter in the schedule, and poll close. A challenged
/// session is re-voted once with an honest plan, as in the presence of a
/// committee member.
pub fn run_election<H: ElectionHooks + ?Sized>(
    config: ElectionConfig,
    hooks: &mut H,
) -> Result<RawElectionOutput, EngineError> {
    let schedule = voter_schedule(&config);
    let mut election = Election::new(config)?;
    election.seed_all()?;
    let day_length = schedule.len();
    for (position, arrival) in schedule.iter().enumerate() {
        hooks.before_session(&mut election, arrival, position);
        let session = election.open_session(arrival.precinct, arrival.voter)?;
        let view = SessionView {
            session,
            voter: arrival.voter,
            precinct: arrival.precinct,
            cluster: election.config().precinct(arrival.precinct).cluster,
            tick: election.clock(),
            position,
            day_length,
        };
        let mut plan = hooks.plan(&election, &view);
        fill_voter_entropy(&election, &mut plan, arrival.voter);
        let policy = hooks.record_policy(&election, &view, &plan, arrival.choice);
        let outcome = election.cast_vote(session, arrival.choice, &plan, policy)?;
        let check = election.in_booth_check(session)?;
        hooks.after_cast(&mut election, &view, &outcome, check);
        if check == BoothCheck::Challenge {
            let revote = election.revote(session)?;
            let mut honest = CastPlan::honest(election.config());
            honest.constraint = plan.constraint.clone();
            fill_voter_entropy(&election, &mut honest, arrival.voter);
            election.cast_vote(revote, arrival.choice, &honest, RecordPolicy::Publish)?;
            election.in_booth_check(revote)?;
        }
    }
    election.close_polls()
}

fn fill_voter_entropy(election: &Election, plan: &mut CastPlan, voter: VoterId) {
    let split = match plan.rng {
        RngMode::VoterEntropy(split) | RngMode::RiggedEntropy { split, .. } => split,
        _ => return,
    };
    if plan.voter_entropy.is_none() {
        let mut rng = stream(election.config().seed, Domain::VoterEntropy, voter.0);
        plan.voter_entropy = Some(draw_pseudonym(&mut rng, split.voter_width));
    }
}

/// An honest election from start to finish.
pub fn simulate(config: ElectionConfig) -> Result<RawElectionOutput, EngineError> {
    run_election(config, &mut HonestHooks)
}

//! Reproducible experiment runs: one config, one seed, one output directory.

use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use sfv_core::adversary::{
    degradation_metrics, run_central_flip_drop, run_homogeneous_collision_attack, run_localized_dos,
    run_malicious_decoys, run_semi_collision_attack, Alteration, CentralAttack, HomogeneousAttack,
    SemiCollisionAttack, VerifierSelection,
};
use sfv_core::config::{ConfigDocument, RngSetting};
use sfv_core::ledger::{build_format_a, build_format_b, serialize_flat, Hierarchy};
use sfv_core::randomness::trial_seed;
use sfv_core::stats::{
    catch_probability, collision_band, detection_probability, expected_collisions, steal_capacity, CollisionModel,
    DEFAULT_BUDGET_Z,
};
use sfv_core::verification::{anti_stuffing_check, count_collisions, detect_semi_collisions, digital_tally};
use sfv_core::{
    simulate, AntiStuffing, CandidateId, ChoiceModel, ClusterId, ElectionConfig, MachineId, PrecinctId,
    RawElectionOutput, SigningMode, VoteRecord,
};

use crate::files::{
    self, serialize_ballots, serialize_records, serialize_rolls, write, BALLOTS_FILE, CHOICES_FILE, CONFIG_FILE,
    FLAT_FILE, KEYS_FILE, MANIFEST_FILE, PRIVATE, PUBLISHED, RECORDS_FILE, ROLLS_FILE,
};
use crate::summary::{Analytic, TrialTable};

pub const REPORT_FILE: &str = "report.txt";
pub const TRIALS_FILE: &str = "trials.csv";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    Honest,
    /// Decoy fetches cut off from the rest of the cluster for a window.
    Dos,
    MaliciousDecoys,
    /// Post-close flip or drop on the central server.
    Central,
    Homogeneous,
    SemiCollision,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::Honest,
        Scenario::Dos,
        Scenario::MaliciousDecoys,
        Scenario::Central,
        Scenario::Homogeneous,
        Scenario::SemiCollision,
    ];
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Honest => "honest",
            Scenario::Dos => "dos",
            Scenario::MaliciousDecoys => "malicious-decoys",
            Scenario::Central => "central",
            Scenario::Homogeneous => "homogeneous",
            Scenario::SemiCollision => "semi-collision",
        })
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.to_string() == s)
            .ok_or_else(|| {
                let names: Vec<String> = Scenario::ALL.iter().map(|s| s.to_string()).collect();
                format!("unknown scenario `{s}`; expected one of {}", names.join(", "))
            })
    }
}

/// Knobs for the attack scenarios. Each can also be set in an `[attack]`
/// section of the config file.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackParams {
    /// Partition window as fractions of the polling day.
    pub window: (f64, f64),
    pub clusters: Vec<ClusterId>,
    pub machines: Vec<MachineId>,
    pub alteration: Alteration,
    pub target: CandidateId,
    pub altered: usize,
    pub safe: usize,
    pub verifiers: usize,
    pub threshold: usize,
    pub budget: u64,
    pub beneficiary: CandidateId,
    /// Attacked precincts; empty means all of them.
    pub precincts: Vec<PrecinctId>,
    pub precinct: PrecinctId,
    /// Candidate whose votes get the forced prefix; the precinct favourite if unset.
    pub candidate: Option<CandidateId>,
    pub forced_machine_part: u64,
    pub repeats: usize,
}

impl Default for AttackParams {
    fn default() -> Self {
        Self {
            window: (0.0, 1.0),
            clusters: vec![ClusterId(0)],
            machines: vec![MachineId(0)],
            alteration: Alteration::Flip { to: CandidateId(1) },
            target: CandidateId(0),
            altered: 20,
            safe: 0,
            verifiers: 100,
            threshold: 1,
            budget: 19,
            beneficiary: CandidateId(1),
            precincts: Vec::new(),
            precinct: PrecinctId(0),
            candidate: None,
            forced_machine_part: 0,
            repeats: 3,
        }
    }
}

impl AttackParams {
    pub fn apply_document(&mut self, doc: &ConfigDocument) -> Result<()> {
        for sec in doc.extra_sections() {
            if sec.name != "attack" {
                bail!("config line {}: unknown section [{}]", sec.line, sec.name);
            }
            let mut to = None;
            for e in &sec.entries {
                match e.key.as_str() {
                    "window" => {
                        let w: Vec<f64> = e.parse_list()?;
                        let [a, b] = w[..] else { return Err(e.error("window needs two fractions").into()) };
                        self.window = (a, b);
                    }
                    "clusters" => self.clusters = e.parse_list::<u32>()?.into_iter().map(ClusterId).collect(),
                    "machines" => self.machines = e.parse_list::<u32>()?.into_iter().map(MachineId).collect(),
                    "alteration" => {
                        self.alteration = match e.value.as_str() {
                            "flip" => Alteration::Flip { to: CandidateId(1) },
                            "drop" => Alteration::Drop,
                            _ => return Err(e.error("alteration must be `flip` or `drop`").into()),
                        }
                    }
                    "to" => to = Some(CandidateId(e.parse()?)),
                    "target" => self.target = CandidateId(e.parse()?),
                    "altered" => self.altered = e.parse()?,
                    "safe" => self.safe = e.parse()?,
                    "verifiers" => self.verifiers = e.parse()?,
                    "threshold" => self.threshold = e.parse()?,
                    "budget" => self.budget = e.parse()?,
                    "beneficiary" => self.beneficiary = CandidateId(e.parse()?),
                    "precincts" => self.precincts = e.parse_list::<u32>()?.into_iter().map(PrecinctId).collect(),
                    "precinct" => self.precinct = PrecinctId(e.parse()?),
                    "candidate" => self.candidate = Some(CandidateId(e.parse()?)),
                    "forced_machine_part" => self.forced_machine_part = e.parse()?,
                    "repeats" => self.repeats = e.parse()?,
                    _ => return Err(e.unknown_key().into()),
                }
            }
            if let (Some(to), Alteration::Flip { .. }) = (to, self.alteration) {
                self.alteration = Alteration::Flip { to };
            }
        }
        Ok(())
    }
}

/// One reproducible experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub config: PathBuf,
    pub scenario: Scenario,
    pub trials: u64,
    /// Replaces the config's seed when set.
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    /// Worker threads; does not affect any output byte.
    pub jobs: Option<usize>,
    /// Used instead of the config's `[attack]` section when set.
    pub overrides: Option<AttackParams>,
}

impl ExperimentSpec {
    pub fn honest(config: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            config: config.into(),
            scenario: Scenario::Honest,
            trials: 1,
            seed: None,
            out_dir: out_dir.into(),
            jobs: None,
            overrides: None,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(j) => Ok(rayon::ThreadPoolBuilder::new().num_threads(j).build()?.install(f)),
    }
}

/// Runs the experiment and fills `spec.out_dir` with ledgers, private
/// records, the report, and a manifest.
pub fn run_pipeline(spec: &ExperimentSpec) -> Result<PathBuf> {
    let text = files::read(&spec.config)?;
    let (mut config, doc) =
        ElectionConfig::parse(&text).map_err(|e| anyhow!("{}: {e}", spec.config.display()))?;
    let mut params = AttackParams::default();
    params
        .apply_document(&doc)
        .with_context(|| format!("{}", spec.config.display()))?;
    if let Some(p) = &spec.overrides {
        params = p.clone();
    }
    if let Some(seed) = spec.seed {
        config.seed = seed;
    }
    if spec.trials == 0 {
        bail!("trials must be at least 1");
    }
    let dir = spec.out_dir.clone();
    prepare_dir(&dir)?;
    write(&dir.join(CONFIG_FILE), &config.to_text())?;

    let mut report = format!("scenario={}\nseed={}\ntrials={}\n\n", spec.scenario, config.seed, spec.trials);
    if spec.scenario == Scenario::Honest {
        let output = simulate(config.clone())?;
        write_election(&dir, &output)?;
        report.push_str(&honest_summary(&output));
    }
    if spec.scenario != Scenario::Honest || spec.trials > 1 {
        let table = with_jobs(spec.jobs, || run_trials(&config, spec.scenario, &params, spec.trials))??;
        write(&dir.join(TRIALS_FILE), &table.to_csv())?;
        report.push_str(&table.summary_text());
    }
    write(&dir.join(REPORT_FILE), &report)?;
    write_manifest(&dir, &[
        format!("seed={}", config.seed),
        format!("scenario={}", spec.scenario),
        format!("trials={}", spec.trials),
        format!("config_sha256={}", sha256_hex(text.as_bytes())),
    ])?;
    Ok(dir)
}

/// Refuses to clobber a directory that does not hold an earlier run.
fn prepare_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        let empty = fs::read_dir(dir)?.next().is_none();
        if !empty && !dir.join(MANIFEST_FILE).exists() {
            bail!("{} is not empty and holds no previous run", dir.display());
        }
        for sub in [PUBLISHED, PRIVATE] {
            let p = dir.join(sub);
            if p.exists() {
                fs::remove_dir_all(&p)?;
            }
        }
        for f in [MANIFEST_FILE, CONFIG_FILE, REPORT_FILE, TRIALS_FILE] {
            let p = dir.join(f);
            if p.exists() {
                fs::remove_file(&p)?;
            }
        }
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Writes both ledger formats for `records` into `<dir>/published`.
pub fn publish_ledgers(dir: &Path, config: &ElectionConfig, records: &[VoteRecord]) -> Result<usize> {
    let (n, width) = (config.num_candidates(), config.pseudonym_width);
    let out = dir.join(PUBLISHED);
    write(&out.join(FLAT_FILE), &serialize_flat(&build_format_a(records, width, n)))?;
    let tree = build_format_b(records, &Hierarchy::from_config(config), width, n)?;
    let files = tree.files();
    for (name, text) in &files {
        write(&out.join(name), text)?;
    }
    Ok(files.len() + 1)
}

pub fn write_election(dir: &Path, output: &RawElectionOutput) -> Result<()> {
    publish_ledgers(dir, &output.config, &output.records)?;
    let published = dir.join(PUBLISHED);
    write(&published.join(KEYS_FILE), &output.registry().to_text())?;
    write(&published.join(ROLLS_FILE), &serialize_rolls(&output.rolls))?;

    let private = dir.join(PRIVATE);
    write(&private.join(RECORDS_FILE), &serialize_records(&output.records))?;
    write(&private.join(BALLOTS_FILE), &serialize_ballots(&output.ballot_boxes))?;
    let mut log = String::new();
    for event in &output.log {
        let _ = writeln!(log, "{event}");
    }
    write(&private.join("log.txt"), &log)?;
    let mut choices = String::from("receipt,precinct,row,r\n");
    for (i, issued) in output.receipts.iter().enumerate() {
        let _ = writeln!(choices, "{i},{},{},{}", issued.precinct, issued.choice.index(), issued.r);
        write(&files::receipt_path(dir, i), &output.signed_receipt(i).to_file_text())?;
    }
    write(&private.join(CHOICES_FILE), &choices)?;
    Ok(())
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            walk(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// `header` lines, then `file <sha256>  <relative path>` for every file in
/// the directory except the manifest itself.
pub fn write_manifest(dir: &Path, header: &[String]) -> Result<()> {
    let mut paths = Vec::new();
    walk(dir, &mut paths)?;
    let mut rel: Vec<(String, PathBuf)> = paths
        .into_iter()
        .filter_map(|p| {
            let r = p.strip_prefix(dir).ok()?.to_string_lossy().replace('\\', "/");
            (r != MANIFEST_FILE).then_some((r, p))
        })
        .collect();
    rel.sort();
    let mut text = String::new();
    for h in header {
        let _ = writeln!(text, "{h}");
    }
    for (r, p) in rel {
        let bytes = fs::read(&p).with_context(|| format!("reading {}", p.display()))?;
        let _ = writeln!(text, "file {}  {r}", sha256_hex(&bytes));
    }
    write(&dir.join(MANIFEST_FILE), &text)
}

/// Header lines of an existing manifest.
pub fn manifest_header(dir: &Path) -> Result<Vec<String>> {
    Ok(files::read(&dir.join(MANIFEST_FILE))?
        .lines()
        .filter(|l| !l.starts_with("file "))
        .map(str::to_string)
        .collect())
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn honest_summary(output: &RawElectionOutput) -> String {
    let (n, width) = (output.num_candidates(), output.config.pseudonym_width);
    let flat = build_format_a(&output.records, width, n);
    let truth = output.ground_truth_tally();
    let digital = digital_tally(&flat).ok();
    let census = count_collisions(&flat);
    let band = collision_band(&CollisionModel::for_width(flat.rows.len() as u64, width), DEFAULT_BUDGET_Z);
    let mut out = String::new();
    let _ = writeln!(out, "voters={}", output.receipts.len());
    let _ = writeln!(out, "ledger_rows={}", flat.rows.len());
    let _ = writeln!(out, "dummies={}", join(&flat.dummies));
    let _ = writeln!(out, "ground_truth={}", join(&truth));
    let _ = writeln!(out, "digital_tally={}", digital.as_deref().map_or("negative".into(), join));
    let _ = writeln!(out, "tally_matches={}", digital.as_ref() == Some(&truth));
    let _ = writeln!(out, "anti_stuffing={}", anti_stuffing_check(&output.rolls, &flat) == AntiStuffing::Ok);
    let _ = writeln!(out, "c2={} expected={:.3} normal_band=[{:.2},{:.2}]", census.c(2), band.mean, band.normal_low, band.normal_high);
    let _ = writeln!(out, "visible_collisions={}", census.visible());
    out.push('\n');
    out
}

fn precinct_favourite_share(config: &ElectionConfig, precinct: PrecinctId) -> Result<(CandidateId, f64)> {
    let p = config
        .precincts
        .get(precinct.index())
        .ok_or_else(|| anyhow!("unknown precinct {precinct}"))?;
    let best = p.choice.most_likely();
    let share = match &p.choice {
        ChoiceModel::Preferences(w) => w[best.index()] / w.iter().sum::<f64>(),
        ChoiceModel::Counts(c) => f64::from(c[best.index()]) / f64::from(c.iter().sum::<u32>().max(1)),
    };
    Ok((best, share))
}

/// Trials never publish receipts, so signatures are left for on-demand
/// signing, which yields the same bytes.
fn trial_config(config: &ElectionConfig, master: u64, t: u64) -> ElectionConfig {
    let mut cfg = config.clone();
    cfg.seed = trial_seed(master, t);
    cfg.signing = SigningMode::Deferred;
    cfg
}

fn par_trials<T: Send>(trials: u64, f: impl Fn(u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..trials).into_par_iter().map(f).collect()
}

/// Per-trial results for `scenario`, in trial order.
pub fn run_trials(config: &ElectionConfig, scenario: Scenario, params: &AttackParams, trials: u64) -> Result<TrialTable> {
    let master = config.seed;
    let (n, width) = (config.num_candidates(), config.pseudonym_width);
    let rows_of = |records: &[VoteRecord]| build_format_a(records, width, n);
    match scenario {
        Scenario::Honest => {
            let mut table = TrialTable::new(&["c2", "visible", "tally_ok", "anti_stuffing_ok"]);
            let results = par_trials(trials, |t| {
                let out = simulate(trial_config(config, master, t))?;
                let flat = rows_of(&out.records);
                let census = count_collisions(&flat);
                let tally_ok = digital_tally(&flat).ok() == Some(out.ground_truth_tally());
                let anti = anti_stuffing_check(&out.rolls, &flat) == AntiStuffing::Ok;
                Ok((vec![census.c(2) as f64, census.visible() as f64, f64::from(u8::from(tally_ok)), f64::from(u8::from(anti))], flat.rows.len()))
            })?;
            let rows = results.first().map_or(0, |r| r.1);
            let natural = expected_collisions(&CollisionModel::for_width(rows as u64, width), 2);
            table.rows = results.into_iter().map(|r| r.0).collect();
            table.compare("c2", Analytic { mean: natural, variance: natural });
            table.compare("tally_ok", Analytic::exact(1.0));
            table.compare("anti_stuffing_ok", Analytic::exact(1.0));
            Ok(table)
        }
        Scenario::Dos => {
            let mut table = TrialTable::new(&["baseline_max_shared", "cut_max_shared", "cut_local_only", "cut_escalated", "tally_equal"]);
            table.rows = par_trials(trials, |t| {
                let cfg = trial_config(config, master, t);
                let (_, base) = run_localized_dos(cfg.clone(), (0.0, 0.0), &params.clusters)?;
                let (_, cut) = run_localized_dos(cfg, params.window, &params.clusters)?;
                Ok(vec![
                    base.max_shared_decoy as f64,
                    cut.max_shared_decoy as f64,
                    cut.fetches.local_only as f64,
                    cut.fetches.escalated as f64,
                    f64::from(u8::from(base.tally == cut.tally)),
                ])
            })?;
            table.compare("tally_equal", Analytic::exact(1.0));
            Ok(table)
        }
        Scenario::MaliciousDecoys => {
            let mut table = TrialTable::new(&["compromised_fetches", "baseline_max_shared", "max_shared", "tally_equal"]);
            table.rows = par_trials(trials, |t| {
                let cfg = trial_config(config, master, t);
                let base = degradation_metrics(&simulate(cfg.clone())?);
                let (_, m) = run_malicious_decoys(cfg, &params.machines)?;
                Ok(vec![
                    m.fetches.compromised as f64,
                    base.max_shared_decoy as f64,
                    m.max_shared_decoy as f64,
                    f64::from(u8::from(base.tally == m.tally)),
                ])
            })?;
            table.compare("tally_equal", Analytic::exact(1.0));
            Ok(table)
        }
        Scenario::Central => {
            let mut table = TrialTable::new(&["catches", "detected", "census_delta", "anti_stuffing_delta", "disputes"]);
            let v = params.verifiers;
            let results = par_trials(trials, |t| {
                let cfg = trial_config(config, master, t);
                let seed = cfg.seed;
                let out = simulate(cfg)?;
                let a = out
                    .ground_truth_tally()
                    .get(params.target.index())
                    .copied()
                    .ok_or_else(|| anyhow!("unknown candidate {}", params.target))?;
                let p = catch_probability(params.altered as u64, params.safe as u64, a)?;
                let mut attack = CentralAttack::new(params.target, params.alteration, params.altered, params.safe);
                attack.manual_verifiers = VerifierSelection::UnknownActionable(v);
                attack.threshold = params.threshold;
                attack.seed = seed;
                let r = run_central_flip_drop(&out, &attack)?.report;
                let anti = match r.anti_stuffing {
                    AntiStuffing::Ok => 0,
                    AntiStuffing::Mismatch(d) => d,
                };
                let row = vec![
                    r.catches as f64,
                    f64::from(u8::from(r.detected)),
                    r.census_delta as f64,
                    anti as f64,
                    r.disputes.len() as f64,
                ];
                Ok((row, p))
            })?;
            let k = results.len() as f64;
            let catches = results.iter().map(|r| v as f64 * r.1).sum::<f64>() / k;
            let catch_var = results.iter().map(|r| v as f64 * r.1 * (1.0 - r.1)).sum::<f64>() / k;
            let detect = results
                .iter()
                .map(|r| detection_probability(v as u64, r.1, params.threshold as u64))
                .sum::<f64>()
                / k;
            table.rows = results.into_iter().map(|r| r.0).collect();
            table.compare("catches", Analytic { mean: catches, variance: catch_var });
            table.compare("detected", Analytic::bernoulli(detect));
            Ok(table)
        }
        Scenario::Homogeneous => {
            let precincts: Vec<PrecinctId> = if params.precincts.is_empty() {
                config.precincts.iter().map(|p| p.id).collect()
            } else {
                params.precincts.clone()
            };
            let first = *precincts.first().ok_or_else(|| anyhow!("no precincts to attack"))?;
            let (_, p) = precinct_favourite_share(config, first)?;
            let b = params.budget;
            let capacity = steal_capacity(b, p)?;
            let attack = HomogeneousAttack { precincts, budget: b, beneficiary: params.beneficiary };
            let mut table = TrialTable::new(&["attempts", "steals", "visible", "skipped", "challenges", "c2"]);
            table.rows = par_trials(trials, |t| {
                let out = run_homogeneous_collision_attack(trial_config(config, master, t), &attack)?;
                let census = count_collisions(&rows_of(&out.output.records));
                Ok(vec![
                    out.attempts as f64,
                    out.steals as f64,
                    out.visible_collisions as f64,
                    out.skipped as f64,
                    out.in_booth_challenges as f64,
                    census.c(2) as f64,
                ])
            })?;
            let nb_var = b as f64 * p / (1.0 - p).powi(2);
            let natural = expected_collisions(&CollisionModel::for_width(config.num_voters(), width), 2);
            table.compare("attempts", Analytic { mean: capacity.attempts, variance: nb_var });
            table.compare("steals", Analytic { mean: capacity.expected_steals, variance: nb_var });
            table.compare("challenges", Analytic::exact(0.0));
            table.compare("c2", Analytic { mean: natural + b as f64, variance: natural });
            Ok(table)
        }
        Scenario::SemiCollision => {
            let RngSetting::VoterEntropy(split) = config.rng else {
                bail!("semi-collision needs `rng = voter-entropy` in the config");
            };
            let candidate = match params.candidate {
                Some(c) => c,
                None => precinct_favourite_share(config, params.precinct)?.0,
            };
            let attack = SemiCollisionAttack {
                precinct: params.precinct,
                candidate,
                forced_machine_part: params.forced_machine_part,
                repeats: params.repeats,
            };
            let mut table = TrialTable::new(&["forced_sessions", "hits", "triplets", "flagged"]);
            table.rows = par_trials(trials, |t| {
                let out = run_semi_collision_attack(trial_config(config, master, t), attack)?;
                let report = detect_semi_collisions(&rows_of(&out.output.records), split.machine_width)?;
                let flagged = report
                    .flagged
                    .iter()
                    .any(|&(prefix, c, _)| prefix == attack.forced_machine_part && c == candidate);
                Ok(vec![
                    out.forced_sessions as f64,
                    out.hits as f64,
                    report.triplets_plus as f64,
                    f64::from(u8::from(flagged)),
                ])
            })?;
            table.compare("flagged", Analytic::exact(1.0));
            Ok(table)
        }
    }
}

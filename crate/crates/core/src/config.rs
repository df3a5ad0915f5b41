//! Election configuration and its text file format.
//!
//! The file is a sequence of `[section]` headers followed by `key = value`
//! lines. `#` starts a comment. Recognised sections:
//!
//! ```text
//! [election]              seed, pseudonym_width, dummies_per_candidate,
//!                         cluster_target_size, seeding, rng, machine_width,
//!                         signing
//! [candidates]            <id> = <display name>
//! [layout]                generated hierarchy: precincts, voters_per_precinct,
//!                         precincts_per_cluster, fan_out, preferences | counts
//! [precinct.<id>]         cluster, voters, preferences | counts
//! [cluster.<id>]          super
//! [super.<id>]            ultra
//! ```
//!
//! `[layout]` and explicit `[precinct.*]` sections are mutually exclusive.
//! Any other section is kept verbatim in [`ConfigDocument`] for callers
//! (the CLI reads `[attack]` from it). Unknown keys are rejected.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::randomness::EntropySplit;
use crate::types::{
    Candidate, CandidateId, ClusterId, PrecinctId, SuperId, UltraId, DEFAULT_PSEUDONYM_WIDTH,
    MAX_PSEUDONYM_WIDTH,
};

pub const DEFAULT_CLUSTER_TARGET_SIZE: u32 = 5000;
pub const DEFAULT_FAN_OUT: u32 = 10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// 1-based line in the config file, or 0 when the problem is global.
    pub line: usize,
    pub message: String,
}

impl ConfigError {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }

    fn global(message: impl Into<String>) -> Self {
        Self::new(0, message)
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "config: {}", self.message)
        } else {
            write!(f, "config line {}: {}", self.line, self.message)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SeedingMode {
    /// One station per cluster (the first precinct) casts the dummies.
    #[default]
    ClusterStation,
    /// Every station casts its own dummies, so each machine always has
    /// local decoys for every candidate.
    EveryStation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum RngSetting {
    #[default]
    Honest,
    VoterEntropy(EntropySplit),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SigningMode {
    /// Sign every receipt at the moment it is printed.
    #[default]
    Eager,
    /// Leave receipts unsigned during the run; signatures are produced on
    /// demand from the machine keys. Ed25519 is deterministic, so the bytes
    /// are identical to eager signing.
    Deferred,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ChoiceModel {
    /// Each voter independently picks a candidate with these weights.
    Preferences(Vec<f64>),
    /// Exactly these many votes per candidate, in random order.
    Counts(Vec<u32>),
}

impl ChoiceModel {
    /// Candidate an observer who knows the precinct would predict.
    pub fn most_likely(&self) -> CandidateId {
        let idx = match self {
            ChoiceModel::Preferences(w) => argmax(w.iter().copied()),
            ChoiceModel::Counts(c) => argmax(c.iter().map(|&x| f64::from(x))),
        };
        CandidateId(idx as u16)
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrecinctConfig {
    pub id: PrecinctId,
    pub cluster: ClusterId,
    pub voters: u32,
    pub choice: ChoiceModel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ElectionConfig {
    pub seed: u64,
    pub pseudonym_width: u8,
    pub candidates: Vec<Candidate>,
    pub precincts: Vec<PrecinctConfig>,
    /// Super-cluster of each cluster, indexed by cluster id.
    pub cluster_parent: Vec<SuperId>,
    /// Ultra-cluster of each super-cluster, indexed by super id.
    pub super_parent: Vec<UltraId>,
    pub dummies_per_candidate: u32,
    pub seeding: SeedingMode,
    pub cluster_target_size: u32,
    pub rng: RngSetting,
    pub signing: SigningMode,
}

/// Shorthand for a regular hierarchy.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub candidates: usize,
    pub precincts: u32,
    pub voters_per_precinct: u32,
    /// Defaults to `cluster_target_size / voters_per_precinct`.
    pub precincts_per_cluster: Option<u32>,
    pub fan_out: u32,
    pub choice: ChoiceModel,
}

impl Layout {
    pub fn uniform(candidates: usize, precincts: u32, voters_per_precinct: u32) -> Self {
        Self {
            candidates,
            precincts,
            voters_per_precinct,
            precincts_per_cluster: None,
            fan_out: DEFAULT_FAN_OUT,
            choice: ChoiceModel::Preferences(vec![1.0; candidates]),
        }
    }
}

impl ElectionConfig {
    /// Builds a regular hierarchy: precincts are packed into clusters of
    /// `precincts_per_cluster`, clusters into supers and supers into ultras
    /// `fan_out` at a time.
    pub fn from_layout(layout: &Layout, seed: u64) -> Result<Self, ConfigError> {
        Self::from_layout_with(layout, seed, DEFAULT_CLUSTER_TARGET_SIZE)
    }

    fn from_layout_with(
        layout: &Layout,
        seed: u64,
        cluster_target_size: u32,
    ) -> Result<Self, ConfigError> {
        if layout.precincts == 0 {
            return Err(ConfigError::global("layout needs at least one precinct"));
        }
        if layout.fan_out == 0 {
            return Err(ConfigError::global("fan_out must be positive"));
        }
        let per_cluster = layout
            .precincts_per_cluster
            .unwrap_or_else(|| (cluster_target_size / layout.voters_per_precinct.max(1)).max(1));
        if per_cluster == 0 {
            return Err(ConfigError::global("precincts_per_cluster must be positive"));
        }
        let clusters = layout.precincts.div_ceil(per_cluster);
        let supers = clusters.div_ceil(layout.fan_out);
        let precincts = (0..layout.precincts)
            .map(|p| PrecinctConfig {
                id: PrecinctId(p),
                cluster: ClusterId(p / per_cluster),
                voters: layout.voters_per_precinct,
                choice: layout.choice.clone(),
            })
            .collect();
        let config = ElectionConfig {
            seed,
            pseudonym_width: DEFAULT_PSEUDONYM_WIDTH,
            candidates: default_candidates(layout.candidates),
            precincts,
            cluster_parent: (0..clusters).map(|c| SuperId(c / layout.fan_out)).collect(),
            super_parent: (0..supers).map(|s| UltraId(s / layout.fan_out)).collect(),
            dummies_per_candidate: 1,
            seeding: SeedingMode::default(),
            cluster_target_size,
            rng: RngSetting::Honest,
            signing: SigningMode::Eager,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn num_candidates(&self) -> usize {
        self.candidates.len()
    }

    pub fn num_voters(&self) -> u64 {
        self.precincts.iter().map(|p| u64::from(p.voters)).sum()
    }

    pub fn num_clusters(&self) -> usize {
        self.cluster_parent.len()
    }

    pub fn num_supers(&self) -> usize {
        self.super_parent.len()
    }

    pub fn num_ultras(&self) -> usize {
        self.super_parent
            .iter()
            .map(|u| u.index() + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn precinct(&self, id: PrecinctId) -> &PrecinctConfig {
        &self.precincts[id.index()]
    }

    pub fn precincts_in(&self, cluster: ClusterId) -> impl Iterator<Item = PrecinctId> + '_ {
        self.precincts
            .iter()
            .filter(move |p| p.cluster == cluster)
            .map(|p| p.id)
    }

    /// The station that casts the dummies of a cluster in
    /// [`SeedingMode::ClusterStation`] mode.
    pub fn seeding_station(&self, cluster: ClusterId) -> PrecinctId {
        self.precincts_in(cluster)
            .next()
            .expect("validated: every cluster has a precinct")
    }

    pub fn candidate_ids(&self) -> impl Iterator<Item = CandidateId> {
        (0..self.candidates.len() as u16).map(CandidateId)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.pseudonym_width == 0 || self.pseudonym_width > MAX_PSEUDONYM_WIDTH {
            return Err(ConfigError::global(format!(
                "pseudonym_width must be in 1..={MAX_PSEUDONYM_WIDTH}"
            )));
        }
        if self.candidates.is_empty() {
            return Err(ConfigError::global("at least one candidate is required"));
        }
        if self.candidates.len() > usize::from(u16::MAX) {
            return Err(ConfigError::global("too many candidates"));
        }
        for (i, c) in self.candidates.iter().enumerate() {
            if c.id.index() != i {
                return Err(ConfigError::global(format!(
                    "candidate ids must be dense 0..n-1; found {} at position {i}",
                    c.id
                )));
            }
        }
        if self.dummies_per_candidate == 0 {
            return Err(ConfigError::global(
                "dummies_per_candidate must be at least 1",
            ));
        }
        if self.precincts.is_empty() {
            return Err(ConfigError::global("at least one precinct is required"));
        }
        let n = self.candidates.len();
        let mut clusters_used = vec![false; self.cluster_parent.len()];
        for (i, p) in self.precincts.iter().enumerate() {
            if p.id.index() != i {
                return Err(ConfigError::global(format!(
                    "precinct ids must be dense 0..n-1; found {} at position {i}",
                    p.id
                )));
            }
            let slot = clusters_used.get_mut(p.cluster.index()).ok_or_else(|| {
                ConfigError::global(format!(
                    "precinct {} references unknown cluster {}",
                    p.id, p.cluster
                ))
            })?;
            *slot = true;
            match &p.choice {
                ChoiceModel::Preferences(w) => {
                    if w.len() != n
                        || w.iter().any(|x| !x.is_finite() || *x < 0.0)
                        || w.iter().sum::<f64>() <= 0.0
                    {
                        return Err(ConfigError::global(format!(
                            "precinct {}: preferences need {n} non-negative weights with a positive sum",
                            p.id
                        )));
                    }
                }
                ChoiceModel::Counts(c) => {
                    if c.len() != n || c.iter().map(|&x| u64::from(x)).sum::<u64>() != u64::from(p.voters) {
                        return Err(ConfigError::global(format!(
                            "precinct {}: counts need {n} entries summing to voters ({})",
                            p.id, p.voters
                        )));
                    }
                }
            }
        }
        if let Some(c) = clusters_used.iter().position(|used| !used) {
            return Err(ConfigError::global(format!(
                "cluster {c} has no polling station"
            )));
        }
        let mut supers_used = vec![false; self.super_parent.len()];
        for (c, s) in self.cluster_parent.iter().enumerate() {
            let slot = supers_used.get_mut(s.index()).ok_or_else(|| {
                ConfigError::global(format!("cluster {c} references unknown super-cluster {s}"))
            })?;
            *slot = true;
        }
        if let Some(s) = supers_used.iter().position(|used| !used) {
            return Err(ConfigError::global(format!(
                "super-cluster {s} has no clusters"
            )));
        }
        let ultras: BTreeSet<u32> = self.super_parent.iter().map(|u| u.0).collect();
        if ultras.iter().copied().ne(0..ultras.len() as u32) {
            return Err(ConfigError::global("ultra-cluster ids must be dense 0..n-1"));
        }
        if let RngSetting::VoterEntropy(split) = self.rng {
            if split.width() != self.pseudonym_width {
                return Err(ConfigError::global(
                    "machine_width + voter width must equal pseudonym_width",
                ));
            }
        }
        Ok(())
    }

    /// Parses a config file; unrecognised sections are returned in the
    /// document for the caller to interpret.
    pub fn parse(text: &str) -> Result<(Self, ConfigDocument), ConfigError> {
        let doc = ConfigDocument::parse(text)?;
        let config = Self::from_document(&doc)?;
        Ok((config, doc))
    }

    pub fn from_document(doc: &ConfigDocument) -> Result<Self, ConfigError> {
        let mut seed = 0u64;
        let mut width = DEFAULT_PSEUDONYM_WIDTH;
        let mut dummies = 1u32;
        let mut target = DEFAULT_CLUSTER_TARGET_SIZE;
        let mut seeding = SeedingMode::default();
        let mut rng_name: Option<(String, usize)> = None;
        let mut machine_width: Option<(u8, usize)> = None;
        let mut signing = SigningMode::default();

        let election = doc.section("election");
        if let Some(sec) = election {
            for e in &sec.entries {
                match e.key.as_str() {
                    "seed" => seed = e.parse()?,
                    "pseudonym_width" => width = e.parse()?,
                    "dummies_per_candidate" => dummies = e.parse()?,
                    "cluster_target_size" => target = e.parse()?,
                    "seeding" => {
                        seeding = match e.value.as_str() {
                            "cluster" => SeedingMode::ClusterStation,
                            "every-station" => SeedingMode::EveryStation,
                            _ => return Err(e.error("seeding must be `cluster` or `every-station`")),
                        }
                    }
                    "rng" => rng_name = Some((e.value.clone(), e.line)),
                    "machine_width" => machine_width = Some((e.parse()?, e.line)),
                    "signing" => {
                        signing = match e.value.as_str() {
                            "eager" => SigningMode::Eager,
                            "deferred" => SigningMode::Deferred,
                            _ => return Err(e.error("signing must be `eager` or `deferred`")),
                        }
                    }
                    _ => return Err(e.unknown_key()),
                }
            }
        }
        if width == 0 || width > MAX_PSEUDONYM_WIDTH {
            return Err(ConfigError::new(
                election.map_or(0, |s| s.line),
                format!("pseudonym_width must be in 1..={MAX_PSEUDONYM_WIDTH}"),
            ));
        }
        let rng = match rng_name {
            None => {
                if let Some((_, line)) = machine_width {
                    return Err(ConfigError::new(line, "machine_width requires rng = voter-entropy"));
                }
                RngSetting::Honest
            }
            Some((name, line)) => match name.as_str() {
                "honest" => RngSetting::Honest,
                "voter-entropy" => {
                    let split = match machine_width {
                        Some((mw, mline)) => EntropySplit::new(mw, width.saturating_sub(mw), width)
                            .map_err(|e| ConfigError::new(mline, e.to_string()))?,
                        None => EntropySplit::default_for(width)
                            .map_err(|e| ConfigError::new(line, e.to_string()))?,
                    };
                    RngSetting::VoterEntropy(split)
                }
                _ => return Err(ConfigError::new(line, "rng must be `honest` or `voter-entropy`")),
            },
        };

        let candidates = match doc.section("candidates") {
            None => return Err(ConfigError::global("missing [candidates] section")),
            Some(sec) => {
                let mut out = Vec::new();
                for (i, e) in sec.entries.iter().enumerate() {
                    let id: u16 = e
                        .key
                        .parse()
                        .map_err(|_| e.error("candidate keys must be numeric ids"))?;
                    if usize::from(id) != i {
                        return Err(e.error(format!("candidate ids must be listed densely from 0; expected {i}")));
                    }
                    out.push(Candidate {
                        id: CandidateId(id),
                        display_name: e.value.clone(),
                    });
                }
                if out.is_empty() {
                    return Err(ConfigError::new(sec.line, "no candidates listed"));
                }
                out
            }
        };
        let n = candidates.len();

        let layout_sec = doc.section("layout");
        let explicit: Vec<&Section> = doc.sections_with_prefix("precinct.").collect();
        let mut config = match (layout_sec, explicit.is_empty()) {
            (Some(sec), true) => {
                let mut layout = Layout::uniform(n, 0, 0);
                for e in &sec.entries {
                    match e.key.as_str() {
                        "precincts" => layout.precincts = e.parse()?,
                        "voters_per_precinct" => layout.voters_per_precinct = e.parse()?,
                        "precincts_per_cluster" => layout.precincts_per_cluster = Some(e.parse()?),
                        "fan_out" => layout.fan_out = e.parse()?,
                        "preferences" => layout.choice = ChoiceModel::Preferences(e.parse_list()?),
                        "counts" => layout.choice = ChoiceModel::Counts(e.parse_list()?),
                        _ => return Err(e.unknown_key()),
                    }
                }
                let mut cfg = ElectionConfig::from_layout_with(&layout, seed, target)
                    .map_err(|err| ConfigError::new(sec.line, err.message))?;
                cfg.candidates = candidates;
                cfg
            }
            (Some(sec), false) => {
                return Err(ConfigError::new(
                    sec.line,
                    "[layout] cannot be combined with [precinct.*] sections",
                ))
            }
            (None, true) => return Err(ConfigError::global("no [layout] or [precinct.*] sections")),
            (None, false) => {
                let mut precincts = Vec::new();
                for (i, sec) in explicit.iter().enumerate() {
                    let id: u32 = sec.name["precinct.".len()..]
                        .parse()
                        .map_err(|_| ConfigError::new(sec.line, "precinct ids must be numeric"))?;
                    if id as usize != i {
                        return Err(ConfigError::new(sec.line, format!("precincts must be listed densely from 0; expected {i}")));
                    }
                    let mut cluster = None;
                    let mut voters = None;
                    let mut choice = ChoiceModel::Preferences(vec![1.0; n]);
                    for e in &sec.entries {
                        match e.key.as_str() {
                            "cluster" => cluster = Some(ClusterId(e.parse()?)),
                            "voters" => voters = Some(e.parse()?),
                            "preferences" => choice = ChoiceModel::Preferences(e.parse_list()?),
                            "counts" => choice = ChoiceModel::Counts(e.parse_list()?),
                            _ => return Err(e.unknown_key()),
                        }
                    }
                    if let ChoiceModel::Counts(c) = &choice {
                        if voters.is_none() {
                            voters = Some(c.iter().sum());
                        }
                    }
                    let precinct = PrecinctConfig {
                        id: PrecinctId(id),
                        cluster: cluster.ok_or_else(|| ConfigError::new(sec.line, "missing key `cluster`"))?,
                        voters: voters.ok_or_else(|| ConfigError::new(sec.line, "missing key `voters`"))?,
                        choice,
                    };
                    check_choice(&precinct, n).map_err(|m| ConfigError::new(sec.line, m))?;
                    precincts.push(precinct);
                }
                let cluster_parent = parse_parent_sections(doc, "cluster.", "super")?
                    .into_iter()
                    .map(SuperId)
                    .collect();
                let super_parent = parse_parent_sections(doc, "super.", "ultra")?
                    .into_iter()
                    .map(UltraId)
                    .collect();
                ElectionConfig {
                    seed,
                    pseudonym_width: width,
                    candidates,
                    precincts,
                    cluster_parent,
                    super_parent,
                    dummies_per_candidate: dummies,
                    seeding,
                    cluster_target_size: target,
                    rng,
                    signing,
                }
            }
        };
        config.seed = seed;
        config.pseudonym_width = width;
        config.dummies_per_candidate = dummies;
        config.seeding = seeding;
        config.cluster_target_size = target;
        config.rng = rng;
        config.signing = signing;
        config.validate()?;
        Ok(config)
    }

    /// Serialises to the explicit (section-per-node) form. Parsing the
    /// output yields an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::from("[election]\n");
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!("pseudonym_width = {}\n", self.pseudonym_width));
        out.push_str(&format!("dummies_per_candidate = {}\n", self.dummies_per_candidate));
        out.push_str(&format!("cluster_target_size = {}\n", self.cluster_target_size));
        out.push_str(match self.seeding {
            SeedingMode::ClusterStation => "seeding = cluster\n",
            SeedingMode::EveryStation => "seeding = every-station\n",
        });
        match self.rng {
            RngSetting::Honest => out.push_str("rng = honest\n"),
            RngSetting::VoterEntropy(split) => {
                out.push_str("rng = voter-entropy\n");
                out.push_str(&format!("machine_width = {}\n", split.machine_width));
            }
        }
        out.push_str(match self.signing {
            SigningMode::Eager => "signing = eager\n",
            SigningMode::Deferred => "signing = deferred\n",
        });
        out.push_str("\n[candidates]\n");
        for c in &self.candidates {
            out.push_str(&format!("{} = {}\n", c.id, c.display_name));
        }
        for p in &self.precincts {
            out.push_str(&format!("\n[precinct.{}]\ncluster = {}\nvoters = {}\n", p.id, p.cluster, p.voters));
            match &p.choice {
                ChoiceModel::Preferences(w) => out.push_str(&format!("preferences = {}\n", join(w))),
                ChoiceModel::Counts(c) => out.push_str(&format!("counts = {}\n", join(c))),
            }
        }
        for (c, s) in self.cluster_parent.iter().enumerate() {
            out.push_str(&format!("\n[cluster.{c}]\nsuper = {s}\n"));
        }
        for (s, u) in self.super_parent.iter().enumerate() {
            out.push_str(&format!("\n[super.{s}]\nultra = {u}\n"));
        }
        out
    }
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn check_choice(p: &PrecinctConfig, n: usize) -> Result<(), String> {
    match &p.choice {
        ChoiceModel::Preferences(w) if w.len() != n => {
            Err(format!("preferences need {n} weights, found {}", w.len()))
        }
        ChoiceModel::Counts(c) if c.len() != n => {
            Err(format!("counts need {n} entries, found {}", c.len()))
        }
        ChoiceModel::Counts(c) if c.iter().map(|&x| u64::from(x)).sum::<u64>() != u64::from(p.voters) => {
            Err("counts must sum to voters".into())
        }
        _ => Ok(()),
    }
}

fn parse_parent_sections(doc: &ConfigDocument, prefix: &str, key: &str) -> Result<Vec<u32>, ConfigError> {
    let mut parents = Vec::new();
    for (i, sec) in doc.sections_with_prefix(prefix).enumerate() {
        let id: u32 = sec.name[prefix.len()..]
            .parse()
            .map_err(|_| ConfigError::new(sec.line, "section ids must be numeric"))?;
        if id as usize != i {
            return Err(ConfigError::new(sec.line, format!("sections must be listed densely from 0; expected {i}")));
        }
        let mut parent = None;
        for e in &sec.entries {
            if e.key == key {
                parent = Some(e.parse()?);
            } else {
                return Err(e.unknown_key());
            }
        }
        parents.push(parent.ok_or_else(|| ConfigError::new(sec.line, format!("missing key `{key}`")))?);
    }
    if parents.is_empty() {
        return Err(ConfigError::global(format!("no [{prefix}*] sections")));
    }
    Ok(parents)
}

pub fn default_candidates(n: usize) -> Vec<Candidate> {
    (0..n)
        .map(|i| Candidate {
            id: CandidateId(i as u16),
            display_name: candidate_name(i),
        })
        .collect()
}

fn candidate_name(i: usize) -> String {
    let letter = (b'A' + (i % 26) as u8) as char;
    if i < 26 {
        letter.to_string()
    } else {
        format!("{letter}{}", i / 26)
    }
}

/// A `key = value` line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

impl Entry {
    pub fn parse<T: std::str::FromStr>(&self) -> Result<T, ConfigError> {
        self.value
            .parse()
            .map_err(|_| self.error(format!("invalid value {:?} for `{}`", self.value, self.key)))
    }

    pub fn parse_list<T: std::str::FromStr>(&self) -> Result<Vec<T>, ConfigError> {
        self.value
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| self.error(format!("invalid list item {:?} for `{}`", s.trim(), self.key)))
            })
            .collect()
    }

    pub fn error(&self, message: impl Into<String>) -> ConfigError {
        ConfigError::new(self.line, message)
    }

    pub fn unknown_key(&self) -> ConfigError {
        self.error(format!("unknown key `{}`", self.key))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }
}

/// The raw section/entry structure of a config file.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConfigDocument {
    pub sections: Vec<Section>,
}

impl ConfigDocument {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut sections: Vec<Section> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::new(line, "unterminated section header"))?
                    .trim();
                if name.is_empty() {
                    return Err(ConfigError::new(line, "empty section name"));
                }
                if sections.iter().any(|s| s.name == name) {
                    return Err(ConfigError::new(line, format!("duplicate section [{name}]")));
                }
                sections.push(Section {
                    name: name.to_string(),
                    line,
                    entries: Vec::new(),
                });
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| ConfigError::new(line, "expected `key = value`"))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::new(line, "empty key"));
            }
            let section = sections
                .last_mut()
                .ok_or_else(|| ConfigError::new(line, "entry outside of any section"))?;
            if section.entries.iter().any(|e| e.key == key) {
                return Err(ConfigError::new(line, format!("duplicate key `{key}`")));
            }
            section.entries.push(Entry {
                key: key.to_string(),
                value: value.trim().to_string(),
                line,
            });
        }
        Ok(Self { sections })
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn sections_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a Section> + 'a {
        self.sections.iter().filter(move |s| s.name.starts_with(prefix))
    }

    /// Sections the election config itself does not consume.
    pub fn extra_sections(&self) -> impl Iterator<Item = &Section> {
        self.sections.iter().filter(|s| {
            !matches!(s.name.as_str(), "election" | "candidates" | "layout")
                && !s.name.starts_with("precinct.")
                && !s.name.starts_with("cluster.")
                && !s.name.starts_with("super.")
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "\
[election]
seed = 9
pseudonym_width = 6
dummies_per_candidate = 2
seeding = every-station

[candidates]
0 = Alice
1 = Bob

[precinct.0]
cluster = 0
voters = 10
preferences = 0.9, 0.1

[precinct.1]
cluster = 1
counts = 3,4

[cluster.0]
super = 0

[cluster.1]
super = 0

[super.0]
ultra = 0

[attack]
budget = 4
";

    #[test]
    fn parses_explicit_sections() {
        let (cfg, doc) = ElectionConfig::parse(SMALL).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.pseudonym_width, 6);
        assert_eq!(cfg.num_voters(), 17);
        assert_eq!(cfg.num_clusters(), 2);
        assert_eq!(cfg.seeding, SeedingMode::EveryStation);
        assert_eq!(cfg.precincts[1].choice, ChoiceModel::Counts(vec![3, 4]));
        assert_eq!(cfg.precincts[0].choice.most_likely(), CandidateId(0));
        let extra: Vec<_> = doc.extra_sections().map(|s| s.name.as_str()).collect();
        assert_eq!(extra, vec!["attack"]);
    }

    #[test]
    fn text_round_trip() {
        let (cfg, _) = ElectionConfig::parse(SMALL).unwrap();
        let (again, _) = ElectionConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn layout_builds_regular_hierarchy() {
        let mut layout = Layout::uniform(3, 250, 20);
        layout.precincts_per_cluster = Some(2);
        let cfg = ElectionConfig::from_layout(&layout, 1).unwrap();
        assert_eq!(cfg.num_clusters(), 125);
        assert_eq!(cfg.num_supers(), 13);
        assert_eq!(cfg.num_ultras(), 2);
        assert_eq!(cfg.cluster_parent[19], SuperId(1));
        // Default cluster sizing packs 5000 voters per cluster.
        let cfg = ElectionConfig::from_layout(&Layout::uniform(2, 40, 500), 1).unwrap();
        assert_eq!(cfg.num_clusters(), 4);
    }

    #[test]
    fn layout_section() {
        let text = "[candidates]\n0 = A\n1 = B\n[layout]\nprecincts = 8\nvoters_per_precinct = 5\nprecincts_per_cluster = 2\npreferences = 3,1\n";
        let (cfg, _) = ElectionConfig::parse(text).unwrap();
        assert_eq!(cfg.num_clusters(), 4);
        assert_eq!(cfg.num_voters(), 40);
        assert_eq!(cfg.candidates[1].display_name, "B");
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = ElectionConfig::parse("[election]\nseed = x\n").unwrap_err();
        assert_eq!(err.line, 2);
        let err = ElectionConfig::parse("[election]\nbogus = 1\n").unwrap_err();
        assert_eq!(err.line, 2);
        assert!(err.message.contains("unknown key"));
        let err = ConfigDocument::parse("seed = 1\n").unwrap_err();
        assert_eq!(err.line, 1);
        let err = ConfigDocument::parse("[a]\nx=1\nx=2\n").unwrap_err();
        assert_eq!(err.line, 3);
        let bad_counts = SMALL.replace("counts = 3,4", "counts = 3,5\nvoters = 7");
        let err = ElectionConfig::parse(&bad_counts).unwrap_err();
        assert_eq!(err.line, 16);
    }

    #[test]
    fn rejects_structural_problems() {
        let mut cfg = ElectionConfig::from_layout(&Layout::uniform(2, 4, 10), 0).unwrap();
        cfg.dummies_per_candidate = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = ElectionConfig::from_layout(&Layout::uniform(2, 4, 10), 0).unwrap();
        cfg.candidates.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = ElectionConfig::from_layout(&Layout::uniform(2, 4, 10), 0).unwrap();
        cfg.cluster_parent.push(SuperId(0));
        assert!(cfg.validate().unwrap_err().message.contains("no polling station"));
        let mut cfg = ElectionConfig::from_layout(&Layout::uniform(2, 4, 10), 0).unwrap();
        cfg.precincts[0].cluster = ClusterId(99);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn voter_entropy_setting() {
        let text = "[election]\nrng = voter-entropy\n[candidates]\n0=A\n[layout]\nprecincts=1\nvoters_per_precinct=3\n";
        let (cfg, _) = ElectionConfig::parse(text).unwrap();
        assert_eq!(cfg.rng, RngSetting::VoterEntropy(EntropySplit { machine_width: 10, voter_width: 2 }));
        let text = text.replace("rng = voter-entropy", "rng = voter-entropy\nmachine_width = 12");
        assert_eq!(ElectionConfig::parse(&text).unwrap_err().line, 3);
    }
}

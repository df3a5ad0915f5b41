//! The public ledger: one flat national file sorted by pseudonym, and a
//! tree of per-cluster files with serial numbers plus aggregate files for
//! every tier above them.
//!
//! Every file is line-oriented text. Header lines start with `#` and carry
//! `key=value` metadata in a fixed order; data lines are comma separated.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::config::ElectionConfig;
use crate::types::{CandidateId, ClusterId, Pseudonym, SuperId, UltraId, VoteRecord};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("line {line}: serial gap at row {row}, expected {expected} found {found}")]
    SerialGap {
        line: usize,
        row: usize,
        expected: u64,
        found: u64,
    },
    #[error("line {line}: rows out of order")]
    Unsorted { line: usize },
    #[error("line {line}: bad dummy metadata: {message}")]
    BadDummyMetadata { line: usize, message: String },
    #[error("header says {declared} rows, file has {actual}")]
    RowCountMismatch { declared: u64, actual: u64 },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: unknown header key `{key}`")]
    UnknownHeaderKey { line: usize, key: String },
    #[error("missing header key `{0}`")]
    MissingHeaderKey(String),
    #[error("record from cluster {0} has no place in the hierarchy")]
    OrphanCluster(ClusterId),
}

impl LedgerError {
    pub fn line(&self) -> Option<usize> {
        match self {
            LedgerError::SerialGap { line, .. }
            | LedgerError::Unsorted { line }
            | LedgerError::BadDummyMetadata { line, .. }
            | LedgerError::Malformed { line, .. }
            | LedgerError::UnknownHeaderKey { line, .. } => Some(*line),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LedgerRow {
    pub r: Pseudonym,
    pub candidate: CandidateId,
}

/// Format A.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlatLedger {
    pub width: u8,
    pub num_candidates: usize,
    /// Sorted by pseudonym, ties by candidate.
    pub rows: Vec<LedgerRow>,
    /// National dummy votes per candidate.
    pub dummies: Vec<u64>,
}

impl FlatLedger {
    /// Raw occurrences per candidate, dummies included.
    pub fn occurrences(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.num_candidates];
        for row in &self.rows {
            counts[row.candidate.index()] += 1;
        }
        counts
    }

    pub fn total_dummies(&self) -> u64 {
        self.dummies.iter().sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClusterRow {
    pub serial: u64,
    pub r: Pseudonym,
    pub candidate: CandidateId,
}

/// Format B base tier: one cluster, grouped by candidate then sorted by
/// pseudonym, serials 1..N.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterFile {
    pub cluster: ClusterId,
    pub width: u8,
    pub num_candidates: usize,
    pub rows: Vec<ClusterRow>,
    pub dummies: Vec<u64>,
}

impl ClusterFile {
    pub fn file_name(&self) -> String {
        format!("cluster-{}.csv", self.cluster)
    }

    /// Net totals by direct count, for comparison with the manual formula.
    pub fn counted_totals(&self) -> Vec<i64> {
        let mut t: Vec<i64> = self.dummies.iter().map(|&d| -(d as i64)).collect();
        for row in &self.rows {
            t[row.candidate.index()] += 1;
        }
        t
    }

    /// Rows of one candidate's block (empty if absent).
    pub fn block(&self, candidate: CandidateId) -> &[ClusterRow] {
        let start = self.rows.partition_point(|r| r.candidate < candidate);
        let end = self.rows.partition_point(|r| r.candidate <= candidate);
        &self.rows[start..end.max(start)]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeId {
    Cluster(ClusterId),
    Super(SuperId),
    Ultra(UltraId),
    National,
}

impl NodeId {
    pub fn depth(self) -> usize {
        match self {
            NodeId::National => 0,
            NodeId::Ultra(_) => 1,
            NodeId::Super(_) => 2,
            NodeId::Cluster(_) => 3,
        }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Cluster(c) => write!(f, "cluster-{c}"),
            NodeId::Super(s) => write!(f, "super-{s}"),
            NodeId::Ultra(u) => write!(f, "ultra-{u}"),
            NodeId::National => f.write_str("national"),
        }
    }
}

impl FromStr for NodeId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "national" {
            return Ok(NodeId::National);
        }
        let (kind, id) = s.split_once('-').ok_or_else(|| format!("bad node id `{s}`"))?;
        let id: u32 = id.parse().map_err(|_| format!("bad node id `{s}`"))?;
        match kind {
            "cluster" => Ok(NodeId::Cluster(ClusterId(id))),
            "super" => Ok(NodeId::Super(SuperId(id))),
            "ultra" => Ok(NodeId::Ultra(UltraId(id))),
            _ => Err(format!("bad node id `{s}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Level {
    Super,
    Ultra,
    National,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Super => "super",
            Level::Ultra => "ultra",
            Level::National => "national",
        })
    }
}

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "super" => Ok(Level::Super),
            "ultra" => Ok(Level::Ultra),
            "national" => Ok(Level::National),
            _ => Err(format!("unknown level `{s}`")),
        }
    }
}

/// Net per-candidate totals of a node and of each of its children.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AggregateFile {
    pub level: Level,
    pub node: NodeId,
    pub num_candidates: usize,
    pub children: Vec<(NodeId, Vec<i64>)>,
    pub totals: Vec<i64>,
}

impl AggregateFile {
    pub fn file_name(&self) -> String {
        match self.node {
            NodeId::National => "national.agg.csv".to_string(),
            other => format!("{other}.agg.csv"),
        }
    }

    fn new(level: Level, node: NodeId, num_candidates: usize, children: Vec<(NodeId, Vec<i64>)>) -> Self {
        let mut totals = vec![0i64; num_candidates];
        for (_, t) in &children {
            for (acc, v) in totals.iter_mut().zip(t) {
                *acc += v;
            }
        }
        Self {
            level,
            node,
            num_candidates,
            children,
            totals,
        }
    }
}

/// Parent maps for the aggregation tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hierarchy {
    pub cluster_parent: Vec<SuperId>,
    pub super_parent: Vec<UltraId>,
}

impl Hierarchy {
    pub fn from_config(config: &ElectionConfig) -> Self {
        Self {
            cluster_parent: config.cluster_parent.clone(),
            super_parent: config.super_parent.clone(),
        }
    }

    pub fn num_ultras(&self) -> usize {
        self.super_parent.iter().map(|u| u.index() + 1).max().unwrap_or(0)
    }
}

/// Format B.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HierarchicalLedger {
    pub clusters: Vec<ClusterFile>,
    pub supers: Vec<AggregateFile>,
    pub ultras: Vec<AggregateFile>,
    pub national: AggregateFile,
}

impl HierarchicalLedger {
    pub fn aggregates(&self) -> impl Iterator<Item = &AggregateFile> {
        self.supers.iter().chain(&self.ultras).chain(std::iter::once(&self.national))
    }

    pub fn files(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = self
            .clusters
            .iter()
            .map(|c| (c.file_name(), serialize_cluster(c)))
            .collect();
        out.extend(self.aggregates().map(|a| (a.file_name(), serialize_aggregate(a))));
        out
    }
}

fn dummy_counts(records: &[VoteRecord], num_candidates: usize) -> Vec<u64> {
    let mut d = vec![0u64; num_candidates];
    for r in records.iter().filter(|r| r.is_dummy) {
        d[r.candidate.index()] += 1;
    }
    d
}

pub fn build_format_a(records: &[VoteRecord], width: u8, num_candidates: usize) -> FlatLedger {
    let mut rows: Vec<LedgerRow> = records
        .iter()
        .map(|r| LedgerRow {
            r: r.r,
            candidate: r.candidate,
        })
        .collect();
    rows.sort_unstable();
    FlatLedger {
        width,
        num_candidates,
        rows,
        dummies: dummy_counts(records, num_candidates),
    }
}

pub fn build_format_b(
    records: &[VoteRecord],
    hierarchy: &Hierarchy,
    width: u8,
    num_candidates: usize,
) -> Result<HierarchicalLedger, LedgerError> {
    let clusters_n = hierarchy.cluster_parent.len();
    let mut per_cluster: Vec<Vec<VoteRecord>> = vec![Vec::new(); clusters_n];
    for r in records {
        per_cluster
            .get_mut(r.cluster.index())
            .ok_or(LedgerError::OrphanCluster(r.cluster))?
            .push(*r);
    }
    let clusters: Vec<ClusterFile> = per_cluster
        .iter()
        .enumerate()
        .map(|(c, recs)| {
            let mut keyed: Vec<(CandidateId, Pseudonym)> = recs.iter().map(|r| (r.candidate, r.r)).collect();
            keyed.sort_unstable();
            ClusterFile {
                cluster: ClusterId(c as u32),
                width,
                num_candidates,
                rows: keyed
                    .into_iter()
                    .enumerate()
                    .map(|(i, (candidate, r))| ClusterRow {
                        serial: i as u64 + 1,
                        r,
                        candidate,
                    })
                    .collect(),
                dummies: dummy_counts(recs, num_candidates),
            }
        })
        .collect();

    let supers_n = hierarchy.super_parent.len();
    let supers: Vec<AggregateFile> = (0..supers_n)
        .map(|s| {
            let children = clusters
                .iter()
                .filter(|c| hierarchy.cluster_parent[c.cluster.index()].index() == s)
                .map(|c| (NodeId::Cluster(c.cluster), c.counted_totals()))
                .collect();
            AggregateFile::new(Level::Super, NodeId::Super(SuperId(s as u32)), num_candidates, children)
        })
        .collect();
    let ultras: Vec<AggregateFile> = (0..hierarchy.num_ultras())
        .map(|u| {
            let children = supers
                .iter()
                .enumerate()
                .filter(|(s, _)| hierarchy.super_parent[*s].index() == u)
                .map(|(_, f)| (f.node, f.totals.clone()))
                .collect();
            AggregateFile::new(Level::Ultra, NodeId::Ultra(UltraId(u as u32)), num_candidates, children)
        })
        .collect();
    let national = AggregateFile::new(
        Level::National,
        NodeId::National,
        num_candidates,
        ultras.iter().map(|u| (u.node, u.totals.clone())).collect(),
    );
    Ok(HierarchicalLedger {
        clusters,
        supers,
        ultras,
        national,
    })
}

/// Any single published file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LedgerFile {
    Flat(FlatLedger),
    Cluster(ClusterFile),
    Aggregate(AggregateFile),
}

pub fn serialize_ledger(file: &LedgerFile) -> String {
    match file {
        LedgerFile::Flat(f) => serialize_flat(f),
        LedgerFile::Cluster(c) => serialize_cluster(c),
        LedgerFile::Aggregate(a) => serialize_aggregate(a),
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

pub fn serialize_flat(f: &FlatLedger) -> String {
    let mut out = format!(
        "# format=flat\n# width={}\n# candidates={}\n# rows={}\n# dummies={}\n",
        f.width,
        f.num_candidates,
        f.rows.len(),
        join(&f.dummies)
    );
    for row in &f.rows {
        out.push_str(&format!("{},{}\n", row.r, row.candidate));
    }
    out
}

pub fn serialize_cluster(c: &ClusterFile) -> String {
    let mut out = format!(
        "# format=cluster\n# cluster={}\n# width={}\n# candidates={}\n# rows={}\n# dummies={}\n",
        c.cluster,
        c.width,
        c.num_candidates,
        c.rows.len(),
        join(&c.dummies)
    );
    for row in &c.rows {
        out.push_str(&format!("{},{},{}\n", row.serial, row.r, row.candidate));
    }
    out
}

pub fn serialize_aggregate(a: &AggregateFile) -> String {
    let mut out = format!(
        "# format=aggregate\n# level={}\n# node={}\n# candidates={}\n# children={}\n",
        a.level,
        a.node,
        a.num_candidates,
        a.children.len()
    );
    for (child, totals) in &a.children {
        out.push_str(&format!("{child},{}\n", join(totals)));
    }
    out.push_str(&format!("total,{}\n", join(&a.totals)));
    out
}

struct Header<'a> {
    values: Vec<(&'a str, &'a str, usize)>,
    data: Vec<(usize, &'a str)>,
}

impl<'a> Header<'a> {
    fn split(text: &'a str, expected: &[&str]) -> Result<Self, LedgerError> {
        let mut values = Vec::new();
        let mut data = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if let Some(h) = line.strip_prefix('#') {
                if !data.is_empty() {
                    return Err(LedgerError::Malformed {
                        line: line_no,
                        message: "header line after data".into(),
                    });
                }
                let (k, v) = h.trim().split_once('=').ok_or_else(|| LedgerError::Malformed {
                    line: line_no,
                    message: "header must be key=value".into(),
                })?;
                if !expected.contains(&k) {
                    return Err(LedgerError::UnknownHeaderKey {
                        line: line_no,
                        key: k.to_string(),
                    });
                }
                if values.iter().any(|(seen, _, _)| *seen == k) {
                    return Err(LedgerError::Malformed {
                        line: line_no,
                        message: format!("duplicate header key `{k}`"),
                    });
                }
                values.push((k, v, line_no));
            } else if line.is_empty() {
                return Err(LedgerError::Malformed {
                    line: line_no,
                    message: "empty line".into(),
                });
            } else {
                data.push((line_no, line));
            }
        }
        for key in expected {
            if !values.iter().any(|(k, _, _)| k == key) {
                return Err(LedgerError::MissingHeaderKey(key.to_string()));
            }
        }
        Ok(Self { values, data })
    }

    fn raw(&self, key: &str) -> (&'a str, usize) {
        let (_, v, line) = self.values.iter().find(|(k, _, _)| *k == key).expect("checked in split");
        (v, *line)
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<T, LedgerError> {
        let (v, line) = self.raw(key);
        v.parse().map_err(|_| LedgerError::Malformed {
            line,
            message: format!("bad value for `{key}`"),
        })
    }

    fn dummies(&self, num_candidates: usize) -> Result<Vec<u64>, LedgerError> {
        let (v, line) = self.raw("dummies");
        let bad = |message: String| LedgerError::BadDummyMetadata { line, message };
        let parsed: Vec<u64> = if v.is_empty() {
            Vec::new()
        } else {
            v.split(',')
                .map(|d| d.parse().map_err(|_| bad(format!("`{d}` is not a count"))))
                .collect::<Result<_, _>>()?
        };
        if parsed.len() != num_candidates {
            return Err(bad(format!("{} entries for {num_candidates} candidates", parsed.len())));
        }
        Ok(parsed)
    }

    fn check_rows(&self) -> Result<(), LedgerError> {
        let declared: u64 = self.get("rows")?;
        let actual = self.data.len() as u64;
        if declared != actual {
            return Err(LedgerError::RowCountMismatch { declared, actual });
        }
        Ok(())
    }
}

fn malformed(line: usize, message: impl Into<String>) -> LedgerError {
    LedgerError::Malformed {
        line,
        message: message.into(),
    }
}

fn parse_candidate(text: &str, num_candidates: usize, line: usize) -> Result<CandidateId, LedgerError> {
    let c: CandidateId = text.parse().map_err(|_| malformed(line, "bad candidate id"))?;
    if c.index() >= num_candidates {
        return Err(malformed(line, format!("candidate {c} out of range")));
    }
    Ok(c)
}

fn parse_r(text: &str, width: u8, line: usize) -> Result<Pseudonym, LedgerError> {
    Pseudonym::parse(text, width).map_err(|e| malformed(line, e.to_string()))
}

fn check_width(width: u8, line: usize) -> Result<u8, LedgerError> {
    Pseudonym::new(0, width).map_err(|e| malformed(line, e.to_string()))?;
    Ok(width)
}

pub fn parse_flat(text: &str) -> Result<FlatLedger, LedgerError> {
    let h = Header::split(text, &["format", "width", "candidates", "rows", "dummies"])?;
    expect_format(&h, "flat")?;
    let width = check_width(h.get("width")?, h.raw("width").1)?;
    let num_candidates: usize = h.get("candidates")?;
    let dummies = h.dummies(num_candidates)?;
    h.check_rows()?;
    let mut rows = Vec::with_capacity(h.data.len());
    for &(line, text) in &h.data {
        let (r, c) = text.split_once(',').ok_or_else(|| malformed(line, "expected r,candidate"))?;
        let row = LedgerRow {
            r: parse_r(r, width, line)?,
            candidate: parse_candidate(c, num_candidates, line)?,
        };
        if rows.last().is_some_and(|prev: &LedgerRow| *prev > row) {
            return Err(LedgerError::Unsorted { line });
        }
        rows.push(row);
    }
    Ok(FlatLedger {
        width,
        num_candidates,
        rows,
        dummies,
    })
}

fn expect_format(h: &Header<'_>, format: &str) -> Result<(), LedgerError> {
    let (v, line) = h.raw("format");
    if v != format {
        return Err(malformed(line, format!("expected format={format}")));
    }
    Ok(())
}

const CLUSTER_KEYS: [&str; 6] = ["format", "cluster", "width", "candidates", "rows", "dummies"];

/// Strict parse: serials must run 1..N without gaps and rows must be
/// grouped and sorted.
pub fn parse_cluster(text: &str) -> Result<ClusterFile, LedgerError> {
    let file = parse_cluster_unchecked(text)?;
    let h = Header::split(text, &CLUSTER_KEYS)?;
    h.check_rows()?;
    for (i, (row, &(line, _))) in file.rows.iter().zip(&h.data).enumerate() {
        let expected = i as u64 + 1;
        if row.serial != expected {
            return Err(LedgerError::SerialGap {
                line,
                row: i + 1,
                expected,
                found: row.serial,
            });
        }
        if i > 0 {
            let prev = &file.rows[i - 1];
            if (prev.candidate, prev.r) > (row.candidate, row.r) {
                return Err(LedgerError::Unsorted { line });
            }
        }
    }
    Ok(file)
}

/// Lenient parse that accepts serial gaps, disorder and a wrong row count,
/// so that the manual procedure can be run over a tampered file and report
/// what it finds.
pub fn parse_cluster_unchecked(text: &str) -> Result<ClusterFile, LedgerError> {
    let h = Header::split(text, &CLUSTER_KEYS)?;
    expect_format(&h, "cluster")?;
    let cluster: ClusterId = h.get("cluster")?;
    let width = check_width(h.get("width")?, h.raw("width").1)?;
    let num_candidates: usize = h.get("candidates")?;
    let dummies = h.dummies(num_candidates)?;
    let _: u64 = h.get("rows")?;
    let mut rows = Vec::with_capacity(h.data.len());
    for &(line, text) in &h.data {
        let mut parts = text.split(',');
        let (Some(s), Some(r), Some(c), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(malformed(line, "expected serial,r,candidate"));
        };
        rows.push(ClusterRow {
            serial: s.parse().map_err(|_| malformed(line, "bad serial"))?,
            r: parse_r(r, width, line)?,
            candidate: parse_candidate(c, num_candidates, line)?,
        });
    }
    Ok(ClusterFile {
        cluster,
        width,
        num_candidates,
        rows,
        dummies,
    })
}

/// Structural parse only; whether the totals add up is for the verifier.
pub fn parse_aggregate(text: &str) -> Result<AggregateFile, LedgerError> {
    let h = Header::split(text, &["format", "level", "node", "candidates", "children"])?;
    expect_format(&h, "aggregate")?;
    let level: Level = h.get("level")?;
    let node: NodeId = h.get("node")?;
    let num_candidates: usize = h.get("candidates")?;
    let declared: u64 = h.get("children")?;
    let expected_node = match (level, node) {
        (Level::Super, NodeId::Super(_)) | (Level::Ultra, NodeId::Ultra(_)) | (Level::National, NodeId::National) => true,
        _ => false,
    };
    if !expected_node {
        return Err(malformed(h.raw("node").1, "node does not match level"));
    }
    let parse_totals = |fields: &[&str], line: usize| -> Result<Vec<i64>, LedgerError> {
        if fields.len() != num_candidates {
            return Err(malformed(line, format!("expected {num_candidates} totals")));
        }
        fields
            .iter()
            .map(|f| f.parse().map_err(|_| malformed(line, "bad total")))
            .collect()
    };
    let Some((&(total_line, total_text), child_lines)) = h.data.split_last() else {
        return Err(malformed(0, "missing total line"));
    };
    if child_lines.len() as u64 != declared {
        return Err(LedgerError::RowCountMismatch {
            declared,
            actual: child_lines.len() as u64,
        });
    }
    let mut children = Vec::with_capacity(child_lines.len());
    for &(line, text) in child_lines {
        let fields: Vec<&str> = text.split(',').collect();
        let child: NodeId = fields[0].parse().map_err(|e: String| malformed(line, e))?;
        if child.depth() != node.depth() + 1 {
            return Err(malformed(line, format!("{child} cannot be a child of {node}")));
        }
        children.push((child, parse_totals(&fields[1..], line)?));
    }
    let fields: Vec<&str> = total_text.split(',').collect();
    if fields[0] != "total" {
        return Err(malformed(total_line, "last line must be the total"));
    }
    Ok(AggregateFile {
        level,
        node,
        num_candidates,
        children,
        totals: parse_totals(&fields[1..], total_line)?,
    })
}

/// Parses any ledger file, dispatching on its `format` header.
pub fn parse_ledger(text: &str) -> Result<LedgerFile, LedgerError> {
    let first = text.lines().next().unwrap_or_default();
    match first.trim_start_matches('#').trim() {
        "format=flat" => parse_flat(text).map(LedgerFile::Flat),
        "format=cluster" => parse_cluster(text).map(LedgerFile::Cluster),
        "format=aggregate" => parse_aggregate(text).map(LedgerFile::Aggregate),
        _ => Err(malformed(1, "first line must declare the format")),
    }
}

//! Citizen-side and committee-side checks over the published files.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::engine::VoterRoll;
use crate::ledger::{AggregateFile, ClusterFile, ClusterRow, FlatLedger, LedgerRow, NodeId};
use crate::signing::{KeyError, KeyRegistry};
use crate::types::{CandidateId, ClusterId, PrecinctId, Pseudonym, Receipt, VoteRecord};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VerificationError {
    #[error("ledger inconsistency: candidate {candidate} has total {total}")]
    NegativeTotal { candidate: CandidateId, total: i64 },
    #[error("incomplete evidence: no file for {0}")]
    IncompleteEvidence(NodeId),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("receipt has {rows} rows, row {row} requested")]
    BadRow { row: usize, rows: usize },
    #[error(transparent)]
    Key(#[from] KeyError),
}

/// All rows carrying pseudonym `r`, by binary search.
pub fn locate_vote(flat: &FlatLedger, r: Pseudonym) -> &[LedgerRow] {
    let start = flat.rows.partition_point(|row| row.r < r);
    let end = flat.rows.partition_point(|row| row.r <= r);
    &flat.rows[start..end]
}

/// Occurrences per candidate minus the published dummies.
pub fn digital_tally(flat: &FlatLedger) -> Result<Vec<u64>, VerificationError> {
    flat.occurrences()
        .iter()
        .zip(&flat.dummies)
        .enumerate()
        .map(|(c, (&o, &d))| {
            let total = o as i64 - d as i64;
            if total < 0 {
                Err(VerificationError::NegativeTotal {
                    candidate: CandidateId(c as u16),
                    total,
                })
            } else {
                Ok(total as u64)
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SerialGap {
    /// 1-based row position where the sequence broke.
    pub position: usize,
    pub expected: u64,
    pub found: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterCheckReport {
    pub cluster: ClusterId,
    pub serial_gap: Option<SerialGap>,
    /// A candidate whose rows are not one contiguous block.
    pub split_block: Option<CandidateId>,
    pub totals: Vec<i64>,
    pub dummies: Vec<u64>,
    pub pass: bool,
}

/// The by-hand procedure: scan serials for gaps, then for each candidate
/// block take `last - first + 1 - dummies`.
pub fn verify_cluster_manual(file: &ClusterFile) -> ClusterCheckReport {
    let serial_gap = file.rows.iter().enumerate().find_map(|(i, row)| {
        let expected = i as u64 + 1;
        (row.serial != expected).then_some(SerialGap {
            position: i + 1,
            expected,
            found: row.serial,
        })
    });
    let mut split_block = None;
    let mut totals = Vec::with_capacity(file.num_candidates);
    for c in 0..file.num_candidates {
        let candidate = CandidateId(c as u16);
        let positions: Vec<usize> = file
            .rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.candidate == candidate)
            .map(|(i, _)| i)
            .collect();
        let span = match (positions.first(), positions.last()) {
            (Some(&first), Some(&last)) => {
                if last - first + 1 != positions.len() && split_block.is_none() {
                    split_block = Some(candidate);
                }
                file.rows[last].serial as i64 - file.rows[first].serial as i64 + 1
            }
            _ => 0,
        };
        totals.push(span - file.dummies[c] as i64);
    }
    let pass = serial_gap.is_none() && split_block.is_none() && totals.iter().all(|&t| t >= 0);
    ClusterCheckReport {
        cluster: file.cluster,
        serial_gap,
        split_block,
        totals,
        dummies: file.dummies.clone(),
        pass,
    }
}

/// Binary search within one candidate's block.
pub fn locate_in_cluster(file: &ClusterFile, r: Pseudonym, candidate: CandidateId) -> Option<&ClusterRow> {
    let block = file.block(candidate);
    block
        .binary_search_by(|row| row.r.cmp(&r))
        .ok()
        .map(|i| &block[i])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scope {
    Full,
    /// Drill down from the national file to one node.
    Path(NodeId),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeCheck {
    pub node: NodeId,
    /// The node's own checks: its total is the sum of its entries and each
    /// entry matches the child's own file.
    pub own_ok: bool,
    /// False if any check at or below this node failed.
    pub subtree_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HierarchyReport {
    pub nodes: Vec<NodeCheck>,
    /// Child entries read while checking.
    pub entries_touched: usize,
    pub pass: bool,
}

impl HierarchyReport {
    pub fn node(&self, id: NodeId) -> Option<&NodeCheck> {
        self.nodes.iter().find(|n| n.node == id)
    }
}

pub fn verify_hierarchy(
    aggregates: &[AggregateFile],
    clusters: &[ClusterCheckReport],
    scope: Scope,
) -> Result<HierarchyReport, VerificationError> {
    let by_node: HashMap<NodeId, &AggregateFile> = aggregates.iter().map(|a| (a.node, a)).collect();
    let reports: HashMap<NodeId, &ClusterCheckReport> =
        clusters.iter().map(|c| (NodeId::Cluster(c.cluster), c)).collect();
    let own_totals = |id: NodeId| -> Result<(Vec<i64>, bool), VerificationError> {
        match id {
            NodeId::Cluster(_) => reports
                .get(&id)
                .map(|r| (r.totals.clone(), r.pass))
                .ok_or(VerificationError::IncompleteEvidence(id)),
            _ => by_node
                .get(&id)
                .map(|a| (a.totals.clone(), true))
                .ok_or(VerificationError::IncompleteEvidence(id)),
        }
    };

    // Nodes to check, root first, with the child to follow on a path.
    let root = *by_node
        .get(&NodeId::National)
        .ok_or(VerificationError::IncompleteEvidence(NodeId::National))?;
    let mut order: Vec<(&AggregateFile, Option<NodeId>)> = Vec::new();
    match scope {
        Scope::Full => {
            let mut queue = vec![root];
            while let Some(a) = queue.pop() {
                order.push((a, None));
                for (child, _) in &a.children {
                    if !matches!(child, NodeId::Cluster(_)) {
                        queue.push(by_node.get(child).ok_or(VerificationError::IncompleteEvidence(*child))?);
                    }
                }
            }
        }
        Scope::Path(target) => {
            let mut chain = vec![target];
            let mut cur = target;
            while cur != NodeId::National {
                let parent = aggregates
                    .iter()
                    .find(|a| a.children.iter().any(|(c, _)| *c == cur))
                    .ok_or(VerificationError::IncompleteEvidence(cur))?;
                cur = parent.node;
                chain.push(cur);
            }
            chain.reverse();
            for (i, node) in chain.iter().enumerate() {
                if let Some(a) = by_node.get(node) {
                    order.push((a, chain.get(i + 1).copied()));
                }
            }
            if let NodeId::Cluster(_) = target {
                own_totals(target)?;
            }
        }
    }

    let mut checks: BTreeMap<NodeId, NodeCheck> = BTreeMap::new();
    let mut entries_touched = 0;
    for (agg, follow) in &order {
        let mut sum = vec![0i64; agg.num_candidates];
        let mut ok = true;
        for (child, entry) in &agg.children {
            entries_touched += 1;
            for (s, v) in sum.iter_mut().zip(entry) {
                *s += v;
            }
            if follow.is_none() || *follow == Some(*child) {
                let (actual, child_pass) = own_totals(*child)?;
                if actual != *entry {
                    ok = false;
                }
                if let NodeId::Cluster(_) = child {
                    checks.insert(*child, NodeCheck { node: *child, own_ok: child_pass, subtree_ok: child_pass });
                }
            }
        }
        if sum != agg.totals {
            ok = false;
        }
        checks.insert(agg.node, NodeCheck { node: agg.node, own_ok: ok, subtree_ok: ok });
    }
    // Propagate failures upward, deepest nodes first.
    let mut ids: Vec<NodeId> = checks.keys().copied().collect();
    ids.sort_by_key(|n| std::cmp::Reverse(n.depth()));
    for id in ids {
        if checks[&id].subtree_ok {
            continue;
        }
        if let Some(parent) = aggregates.iter().find(|a| a.children.iter().any(|(c, _)| *c == id)) {
            if let Some(p) = checks.get_mut(&parent.node) {
                p.subtree_ok = false;
            }
        }
    }
    let mut nodes: Vec<NodeCheck> = checks.into_values().collect();
    nodes.sort_by_key(|n| (n.node.depth(), n.node));
    let pass = nodes.iter().all(|n| n.subtree_ok);
    Ok(HierarchyReport {
        nodes,
        entries_touched,
        pass,
    })
}

pub fn verify_receipt_signature(
    receipt: &Receipt,
    registry: &KeyRegistry,
    num_candidates: usize,
) -> Result<bool, KeyError> {
    registry.verify(receipt, num_candidates)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AntiStuffing {
    Ok,
    /// Ledger votes minus crossed-off names.
    Mismatch(i64),
}

pub fn anti_stuffing_check(rolls: &[VoterRoll], flat: &FlatLedger) -> AntiStuffing {
    let names: u64 = rolls.iter().map(|r| r.crossed_off).sum();
    let delta = flat.rows.len() as i64 - flat.total_dummies() as i64 - names as i64;
    if delta == 0 {
        AntiStuffing::Ok
    } else {
        AntiStuffing::Mismatch(delta)
    }
}

/// Per-precinct comparison against the electronic records, for the
/// committee. Returns only mismatching precincts.
pub fn anti_stuffing_by_precinct(rolls: &[VoterRoll], records: &[VoteRecord]) -> Vec<(PrecinctId, i64)> {
    let mut votes: HashMap<PrecinctId, i64> = HashMap::new();
    for r in records.iter().filter(|r| !r.is_dummy) {
        *votes.entry(r.precinct).or_default() += 1;
    }
    rolls
        .iter()
        .filter_map(|roll| {
            let delta = votes.get(&roll.precinct).copied().unwrap_or(0) - roll.crossed_off as i64;
            (delta != 0).then_some((roll.precinct, delta))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DisputeClass {
    RecordFound,
    /// Valid signature, but the ledger lacks the receipt's pairing.
    SignatureValidMismatch,
    SignatureValidConsistent,
    SignatureInvalid,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DisputeOutcome {
    pub class: DisputeClass,
    pub receipt: Receipt,
    pub row: Option<usize>,
    pub ledger_rows: Vec<LedgerRow>,
}

fn signature_ok(receipt: &Receipt, registry: &KeyRegistry, n: usize) -> bool {
    registry.verify(receipt, n).unwrap_or(false)
}

/// A voter contests the row they privately know to be their vote.
pub fn file_dispute(
    receipt: &Receipt,
    flat: &FlatLedger,
    row: usize,
    registry: &KeyRegistry,
) -> Result<DisputeOutcome, VerificationError> {
    let claimed = receipt.rows.get(row).ok_or(VerificationError::BadRow {
        row,
        rows: receipt.rows.len(),
    })?;
    let ledger_rows = locate_vote(flat, claimed.r).to_vec();
    let found = ledger_rows.iter().any(|l| l.candidate == claimed.candidate);
    let class = if found {
        DisputeClass::RecordFound
    } else if signature_ok(receipt, registry, flat.num_candidates) {
        DisputeClass::SignatureValidMismatch
    } else {
        DisputeClass::SignatureInvalid
    };
    Ok(DisputeOutcome {
        class,
        receipt: receipt.clone(),
        row: Some(row),
        ledger_rows,
    })
}

/// Whole-receipt check without a designated row: every row should be on
/// the ledger, since decoys are real prior votes.
pub fn assess_receipt(receipt: &Receipt, flat: &FlatLedger, registry: &KeyRegistry) -> DisputeOutcome {
    let mut ledger_rows = Vec::new();
    let mut all_found = true;
    for row in &receipt.rows {
        let hits = locate_vote(flat, row.r);
        all_found &= hits.iter().any(|l| l.candidate == row.candidate);
        ledger_rows.extend_from_slice(hits);
    }
    let class = match (signature_ok(receipt, registry, flat.num_candidates), all_found) {
        (false, _) => DisputeClass::SignatureInvalid,
        (true, true) => DisputeClass::SignatureValidConsistent,
        (true, false) => DisputeClass::SignatureValidMismatch,
    };
    DisputeOutcome {
        class,
        receipt: receipt.clone(),
        row: None,
        ledger_rows,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CollisionCensus {
    /// k -> number of pseudonyms appearing exactly k times.
    pub counts: BTreeMap<usize, u64>,
    /// Pseudonyms appearing more than once, with their candidates.
    pub colliding: Vec<(Pseudonym, Vec<CandidateId>)>,
}

impl CollisionCensus {
    pub fn c(&self, k: usize) -> u64 {
        self.counts.get(&k).copied().unwrap_or(0)
    }

    /// Collisions pairing different candidates.
    pub fn visible(&self) -> usize {
        self.colliding
            .iter()
            .filter(|(_, cs)| cs.iter().any(|c| *c != cs[0]))
            .count()
    }
}

pub fn count_collisions(flat: &FlatLedger) -> CollisionCensus {
    let mut census = CollisionCensus::default();
    for group in flat.rows.chunk_by(|a, b| a.r == b.r) {
        *census.counts.entry(group.len()).or_default() += 1;
        if group.len() > 1 {
            census
                .colliding
                .push((group[0].r, group.iter().map(|g| g.candidate).collect()));
        }
    }
    census
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SemiCollisionReport {
    pub pairs: u64,
    pub triplets_plus: u64,
    /// Machine parts shared by three or more rows of one candidate.
    pub flagged: Vec<(u64, CandidateId, usize)>,
}

pub fn detect_semi_collisions(flat: &FlatLedger, machine_width: u8) -> Result<SemiCollisionReport, VerificationError> {
    if machine_width == 0 || machine_width >= flat.width {
        return Err(VerificationError::Config(format!(
            "machine width {machine_width} must lie in 1..{}",
            flat.width
        )));
    }
    let mut report = SemiCollisionReport::default();
    for group in flat
        .rows
        .chunk_by(|a, b| a.r.prefix(machine_width) == b.r.prefix(machine_width))
    {
        match group.len() {
            0 | 1 => {}
            2 => report.pairs += 1,
            _ => {
                report.triplets_plus += 1;
                let mut per: BTreeMap<CandidateId, usize> = BTreeMap::new();
                for row in group {
                    *per.entry(row.candidate).or_default() += 1;
                }
                for (c, k) in per.into_iter().filter(|(_, k)| *k >= 3) {
                    report.flagged.push((group[0].r.prefix(machine_width), c, k));
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::{AggregateFile, Level};
    use crate::signing::MachineKeys;
    use crate::types::{MachineId, ReceiptRow};

    fn row(v: u64, c: u16) -> LedgerRow {
        LedgerRow { r: Pseudonym::new(v, 6).unwrap(), candidate: CandidateId(c) }
    }

    fn flat(rows: Vec<LedgerRow>, dummies: Vec<u64>) -> FlatLedger {
        FlatLedger { width: 6, num_candidates: dummies.len(), rows, dummies }
    }

    #[test]
    fn locate_and_census_by_hand() {
        let f = flat(vec![row(5, 0), row(5, 1), row(9, 1)], vec![0, 0]);
        assert_eq!(locate_vote(&f, Pseudonym::new(5, 6).unwrap()).len(), 2);
        assert!(locate_vote(&f, Pseudonym::new(6, 6).unwrap()).is_empty());
        let census = count_collisions(&f);
        assert_eq!((census.c(1), census.c(2)), (1, 1));
        assert_eq!(census.visible(), 1);
        let total: u64 = census.counts.iter().map(|(k, n)| *k as u64 * n).sum();
        assert_eq!(total, 3);
    }

    #[test]
    fn tally_subtracts_dummies() {
        let f = flat(vec![row(1, 0), row(2, 0), row(3, 0), row(4, 0), row(5, 0), row(6, 1)], vec![1, 1]);
        assert_eq!(digital_tally(&f).unwrap(), vec![4, 0]);
        let only_dummies = flat(vec![row(1, 0), row(2, 1), row(3, 2)], vec![1, 1, 1]);
        assert_eq!(digital_tally(&only_dummies).unwrap(), vec![0, 0, 0]);
        let bad = flat(vec![row(1, 0)], vec![1, 1]);
        assert!(matches!(digital_tally(&bad), Err(VerificationError::NegativeTotal { .. })));
    }

    fn cluster(serials: &[u64], cands: &[u16], dummies: Vec<u64>) -> ClusterFile {
        ClusterFile {
            cluster: ClusterId(0),
            width: 6,
            num_candidates: dummies.len(),
            rows: serials
                .iter()
                .zip(cands)
                .enumerate()
                .map(|(i, (&s, &c))| ClusterRow { serial: s, r: Pseudonym::new(i as u64, 6).unwrap(), candidate: CandidateId(c) })
                .collect(),
            dummies,
        }
    }

    #[test]
    fn manual_formula_matches_direct_count() {
        let f = cluster(&[1, 2, 3, 4, 5, 6, 7, 8], &[0, 0, 0, 0, 0, 0, 1, 1], vec![1, 1]);
        let report = verify_cluster_manual(&f);
        assert!(report.pass);
        assert_eq!(report.totals, vec![5, 1]);
        assert_eq!(report.totals, f.counted_totals());
        let gap = verify_cluster_manual(&cluster(&[1, 2, 4], &[0, 0, 0], vec![0]));
        assert!(!gap.pass);
        assert_eq!(gap.serial_gap.unwrap().position, 3);
        let empty = verify_cluster_manual(&cluster(&[1], &[0], vec![0, 1]));
        assert_eq!(empty.totals, vec![1, -1]);
        assert!(!empty.pass);
        let split = verify_cluster_manual(&cluster(&[1, 2, 3], &[0, 1, 0], vec![0, 0]));
        assert_eq!(split.split_block, Some(CandidateId(0)));
    }

    fn tree() -> (Vec<AggregateFile>, Vec<ClusterCheckReport>) {
        let report = |c: u32, t: Vec<i64>| ClusterCheckReport {
            cluster: ClusterId(c),
            serial_gap: None,
            split_block: None,
            totals: t,
            dummies: vec![1, 1],
            pass: true,
        };
        let reports: Vec<_> = (0..4).map(|c| report(c, vec![c as i64, 1])).collect();
        let sup = |s: u32, cs: [u32; 2]| {
            let children: Vec<(NodeId, Vec<i64>)> = cs.iter().map(|&c| (NodeId::Cluster(ClusterId(c)), vec![c as i64, 1])).collect();
            let totals = vec![children.iter().map(|c| c.1[0]).sum(), 2];
            AggregateFile { level: Level::Super, node: NodeId::Super(crate::types::SuperId(s)), num_candidates: 2, children, totals }
        };
        let s0 = sup(0, [0, 1]);
        let s1 = sup(1, [2, 3]);
        let ultra = AggregateFile {
            level: Level::Ultra,
            node: NodeId::Ultra(crate::types::UltraId(0)),
            num_candidates: 2,
            children: vec![(s0.node, s0.totals.clone()), (s1.node, s1.totals.clone())],
            totals: vec![6, 4],
        };
        let national = AggregateFile {
            level: Level::National,
            node: NodeId::National,
            num_candidates: 2,
            children: vec![(ultra.node, ultra.totals.clone())],
            totals: vec![6, 4],
        };
        (vec![s0, s1, ultra, national], reports)
    }

    #[test]
    fn hierarchy_full_and_path() {
        let (aggs, reports) = tree();
        let full = verify_hierarchy(&aggs, &reports, Scope::Full).unwrap();
        assert!(full.pass);
        let path = verify_hierarchy(&aggs, &reports, Scope::Path(NodeId::Cluster(ClusterId(3)))).unwrap();
        assert!(path.pass);
        // national: 1 entry, ultra: 2, super-1: 2.
        assert_eq!(path.entries_touched, 5);
        assert_eq!(
            verify_hierarchy(&aggs[1..], &reports, Scope::Full),
            Err(VerificationError::IncompleteEvidence(NodeId::Super(crate::types::SuperId(0))))
        );
    }

    #[test]
    fn inflated_cluster_fails_its_chain() {
        let (aggs, mut reports) = tree();
        reports[2].totals[0] += 1;
        let full = verify_hierarchy(&aggs, &reports, Scope::Full).unwrap();
        assert!(!full.pass);
        let s1 = full.node(NodeId::Super(crate::types::SuperId(1))).unwrap();
        assert!(!s1.own_ok && !s1.subtree_ok);
        assert!(!full.node(NodeId::Ultra(crate::types::UltraId(0))).unwrap().subtree_ok);
        assert!(!full.node(NodeId::National).unwrap().subtree_ok);
        assert!(full.node(NodeId::Super(crate::types::SuperId(0))).unwrap().subtree_ok);
    }

    fn signed_receipt(keys: &MachineKeys) -> Receipt {
        let mut r = Receipt {
            machine: MachineId(0),
            rows: vec![
                ReceiptRow { r: Pseudonym::new(5, 6).unwrap(), candidate: CandidateId(0) },
                ReceiptRow { r: Pseudonym::new(9, 6).unwrap(), candidate: CandidateId(1) },
            ],
            signature: vec![],
        };
        keys.sign_in_place(&mut r, 2).unwrap();
        r
    }

    #[test]
    fn dispute_classes() {
        let keys = MachineKeys::derive(1, 1);
        let reg = keys.registry();
        let receipt = signed_receipt(&keys);
        let f = flat(vec![row(5, 0), row(9, 1)], vec![0, 0]);
        assert_eq!(file_dispute(&receipt, &f, 1, &reg).unwrap().class, DisputeClass::RecordFound);
        assert_eq!(assess_receipt(&receipt, &f, &reg).class, DisputeClass::SignatureValidConsistent);
        let flipped = flat(vec![row(5, 0), row(9, 0)], vec![0, 0]);
        assert_eq!(file_dispute(&receipt, &flipped, 1, &reg).unwrap().class, DisputeClass::SignatureValidMismatch);
        let mut forged = receipt.clone();
        forged.signature = vec![7; 64];
        assert_eq!(file_dispute(&forged, &flipped, 1, &reg).unwrap().class, DisputeClass::SignatureInvalid);
        assert!(file_dispute(&receipt, &f, 2, &reg).is_err());
        assert!(verify_receipt_signature(&receipt, &reg, 2).unwrap());
    }

    #[test]
    fn anti_stuffing_deltas() {
        let rolls = [VoterRoll { precinct: PrecinctId(0), crossed_off: 2 }];
        let base = |n: usize| flat((0..n as u64).map(|v| row(v, 0)).collect(), vec![1]);
        assert_eq!(anti_stuffing_check(&rolls, &base(3)), AntiStuffing::Ok);
        assert_eq!(anti_stuffing_check(&rolls, &base(13)), AntiStuffing::Mismatch(10));
        assert_eq!(anti_stuffing_check(&rolls, &base(1)), AntiStuffing::Mismatch(-2));
        let records: Vec<VoteRecord> = (0..3)
            .map(|i| VoteRecord { r: Pseudonym::new(i, 6).unwrap(), candidate: CandidateId(0), cluster: ClusterId(0), precinct: PrecinctId(0), is_dummy: i == 0 })
            .collect();
        assert!(anti_stuffing_by_precinct(&rolls, &records).is_empty());
        assert_eq!(anti_stuffing_by_precinct(&rolls, &records[..2]), vec![(PrecinctId(0), -1)]);
    }

    #[test]
    fn semi_collisions_by_hand() {
        let f = FlatLedger {
            width: 4,
            num_candidates: 1,
            rows: [1201, 1277, 3488].iter().map(|&v| LedgerRow { r: Pseudonym::new(v, 4).unwrap(), candidate: CandidateId(0) }).collect(),
            dummies: vec![0],
        };
        let report = detect_semi_collisions(&f, 2).unwrap();
        assert_eq!((report.pairs, report.triplets_plus), (1, 0));
        assert!(detect_semi_collisions(&f, 4).is_err());
        let mut g = f.clone();
        g.rows.insert(2, LedgerRow { r: Pseudonym::new(1299, 4).unwrap(), candidate: CandidateId(0) });
        let report = detect_semi_collisions(&g, 2).unwrap();
        assert_eq!(report.flagged, vec![(12, CandidateId(0), 3)]);
    }

    #[test]
    fn cluster_lookup() {
        let f = cluster(&[1, 2, 3], &[0, 1, 1], vec![0, 0]);
        assert!(locate_in_cluster(&f, Pseudonym::new(2, 6).unwrap(), CandidateId(1)).is_some());
        assert!(locate_in_cluster(&f, Pseudonym::new(2, 6).unwrap(), CandidateId(0)).is_none());
    }
}

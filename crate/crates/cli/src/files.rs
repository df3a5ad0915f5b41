//! On-disk layout of a run directory and the private record formats.
//!
//! ```text
//! <dir>/manifest.txt
//! <dir>/config.txt
//! <dir>/report.txt
//! <dir>/published/   national.flat.csv, cluster-*.csv, *.agg.csv, keys.txt, rolls.csv
//! <dir>/private/     records.csv, ballots.txt, choices.csv, log.txt, receipts/<i>.txt
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use sfv_core::engine::{BallotBox, VoterRoll};
use sfv_core::ledger::{
    parse_aggregate, parse_cluster_unchecked, parse_flat, AggregateFile, ClusterFile, FlatLedger,
};
use sfv_core::signing::KeyRegistry;
use sfv_core::{CandidateId, ClusterId, ElectionConfig, PrecinctId, Pseudonym, Receipt, VoteRecord};

pub const PUBLISHED: &str = "published";
pub const PRIVATE: &str = "private";
pub const FLAT_FILE: &str = "national.flat.csv";
pub const KEYS_FILE: &str = "keys.txt";
pub const ROLLS_FILE: &str = "rolls.csv";
pub const RECORDS_FILE: &str = "records.csv";
pub const BALLOTS_FILE: &str = "ballots.txt";
pub const CHOICES_FILE: &str = "choices.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const CONFIG_FILE: &str = "config.txt";

pub fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn load_config(path: &Path) -> Result<(ElectionConfig, String)> {
    let text = read(path)?;
    let (config, _) = ElectionConfig::parse(&text).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    Ok((config, text))
}

pub fn serialize_records(records: &[VoteRecord]) -> String {
    let mut out = String::from("precinct,cluster,r,candidate,dummy\n");
    for r in records {
        let _ = writeln!(out, "{},{},{},{},{}", r.precinct, r.cluster, r.r, r.candidate, u8::from(r.is_dummy));
    }
    out
}

pub fn parse_records(text: &str) -> Result<Vec<VoteRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "precinct,cluster,r,candidate,dummy")) => {}
        _ => bail!("records line 1: expected header `precinct,cluster,r,candidate,dummy`"),
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let bad = || anyhow!("records line {}: malformed row `{line}`", i + 1);
            let f: Vec<&str> = line.split(',').collect();
            let [p, c, r, cand, dummy] = f[..] else { return Err(bad()) };
            Ok(VoteRecord {
                precinct: p.parse().map_err(|_| bad())?,
                cluster: c.parse().map_err(|_| bad())?,
                r: Pseudonym::parse(r, r.len() as u8).map_err(|_| bad())?,
                candidate: cand.parse().map_err(|_| bad())?,
                is_dummy: match dummy {
                    "0" => false,
                    "1" => true,
                    _ => return Err(bad()),
                },
            })
        })
        .collect()
}

fn join<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

pub fn serialize_ballots(boxes: &[BallotBox]) -> String {
    let mut out = String::new();
    for b in boxes {
        let _ = writeln!(
            out,
            "precinct={} dummies={} ballots={}",
            b.precinct,
            join(&b.dummy_marks),
            join(&b.marks)
        );
    }
    out
}

pub fn parse_ballots(text: &str) -> Result<Vec<BallotBox>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let bad = |what: &str| anyhow!("ballots line {}: {what}", i + 1);
            let mut fields = line.split(' ');
            let mut take = |key: &str| {
                fields
                    .next()
                    .and_then(|f| f.strip_prefix(key))
                    .and_then(|f| f.strip_prefix('='))
                    .ok_or_else(|| bad(&format!("expected `{key}=`")))
            };
            let precinct = take("precinct")?.parse().map_err(|_| bad("bad precinct id"))?;
            let list = |s: &str| -> Result<Vec<u32>> {
                if s.is_empty() {
                    return Ok(Vec::new());
                }
                s.split(';').map(|x| x.parse().map_err(|_| bad("bad number"))).collect()
            };
            let dummy_marks = list(take("dummies")?)?;
            let marks = list(take("ballots")?)?
                .into_iter()
                .map(|c| u16::try_from(c).map(CandidateId).map_err(|_| bad("bad candidate")))
                .collect::<Result<_>>()?;
            Ok(BallotBox { precinct, marks, dummy_marks })
        })
        .collect()
}

pub fn serialize_rolls(rolls: &[VoterRoll]) -> String {
    let mut out = String::from("precinct,crossed_off\n");
    for r in rolls {
        let _ = writeln!(out, "{},{}", r.precinct, r.crossed_off);
    }
    out
}

pub fn parse_rolls(text: &str) -> Result<Vec<VoterRoll>> {
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, l)| l) != Some("precinct,crossed_off") {
        bail!("rolls line 1: expected header `precinct,crossed_off`");
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let bad = || anyhow!("rolls line {}: malformed row `{line}`", i + 1);
            let (p, n) = line.split_once(',').ok_or_else(bad)?;
            Ok(VoterRoll {
                precinct: p.parse().map_err(|_| bad())?,
                crossed_off: n.parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

pub fn receipt_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(PRIVATE).join("receipts").join(format!("{index:06}.txt"))
}

/// Everything a member of the public can download.
pub struct Published {
    pub flat: FlatLedger,
    pub clusters: Vec<(PathBuf, ClusterFile)>,
    pub aggregates: Vec<AggregateFile>,
    pub registry: KeyRegistry,
    pub rolls: Vec<VoterRoll>,
}

impl Published {
    pub fn dir(root: &Path) -> PathBuf {
        root.join(PUBLISHED)
    }

    pub fn load_flat(root: &Path) -> Result<FlatLedger> {
        let path = Self::dir(root).join(FLAT_FILE);
        parse_flat(&read(&path)?).map_err(|e| anyhow!("{}: {e}", path.display()))
    }

    pub fn load_registry(root: &Path) -> Result<KeyRegistry> {
        let path = Self::dir(root).join(KEYS_FILE);
        KeyRegistry::parse(&read(&path)?).map_err(|e| anyhow!("{}: {e}", path.display()))
    }

    pub fn load(root: &Path) -> Result<Self> {
        let dir = Self::dir(root);
        let mut names: Vec<String> = fs::read_dir(&dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().into_string().ok())
            .collect();
        names.sort();
        let mut clusters = Vec::new();
        let mut aggregates = Vec::new();
        for name in names {
            let path = dir.join(&name);
            if name.ends_with(".agg.csv") {
                let agg = parse_aggregate(&read(&path)?).map_err(|e| anyhow!("{}: {e}", path.display()))?;
                aggregates.push(agg);
            } else if name.starts_with("cluster-") && name.ends_with(".csv") {
                let file = parse_cluster_unchecked(&read(&path)?).map_err(|e| anyhow!("{}: {e}", path.display()))?;
                clusters.push((path, file));
            }
        }
        clusters.sort_by_key(|(_, c)| c.cluster);
        let rolls_path = dir.join(ROLLS_FILE);
        Ok(Self {
            flat: Self::load_flat(root)?,
            clusters,
            aggregates,
            registry: Self::load_registry(root)?,
            rolls: parse_rolls(&read(&rolls_path)?).map_err(|e| anyhow!("{}: {e}", rolls_path.display()))?,
        })
    }

    pub fn cluster(&self, id: ClusterId) -> Option<&ClusterFile> {
        self.clusters.iter().map(|(_, c)| c).find(|c| c.cluster == id)
    }
}

/// The election authority's side: electronic records and physical ballots.
pub struct Private {
    pub records: Vec<VoteRecord>,
    pub ballots: Vec<BallotBox>,
}

impl Private {
    pub fn load(root: &Path) -> Result<Self> {
        let dir = root.join(PRIVATE);
        Ok(Self {
            records: parse_records(&read(&dir.join(RECORDS_FILE))?)?,
            ballots: parse_ballots(&read(&dir.join(BALLOTS_FILE))?)?,
        })
    }

    pub fn num_precincts(&self) -> usize {
        self.ballots.iter().map(|b| b.precinct.index() + 1).max().unwrap_or(0)
    }
}

pub fn load_receipt(path: &Path, width: u8) -> Result<Receipt> {
    Receipt::parse_file(&read(path)?, width).map_err(|e| anyhow!("{}: {e}", path.display()))
}

pub fn parse_precinct_list(text: &str) -> Result<Vec<PrecinctId>> {
    text.split(',')
        .map(|s| s.trim().parse().map_err(|_| anyhow!("bad precinct id `{s}`")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_round_trip() {
        let width = 6;
        let records = vec![
            VoteRecord {
                r: Pseudonym::new(42, width).unwrap(),
                candidate: CandidateId(1),
                cluster: ClusterId(0),
                precinct: PrecinctId(3),
                is_dummy: true,
            },
            VoteRecord {
                r: Pseudonym::new(999_999, width).unwrap(),
                candidate: CandidateId(0),
                cluster: ClusterId(2),
                precinct: PrecinctId(7),
                is_dummy: false,
            },
        ];
        let text = serialize_records(&records);
        assert_eq!(parse_records(&text).unwrap(), records);
        assert!(parse_records("precinct,cluster,r,candidate,dummy\n1,2,3\n").is_err());
    }

    #[test]
    fn ballots_round_trip_with_empty_box() {
        let boxes = vec![
            BallotBox { precinct: PrecinctId(0), marks: vec![CandidateId(1), CandidateId(0)], dummy_marks: vec![1, 0] },
            BallotBox { precinct: PrecinctId(1), marks: vec![], dummy_marks: vec![0, 0] },
        ];
        assert_eq!(parse_ballots(&serialize_ballots(&boxes)).unwrap(), boxes);
        assert!(parse_ballots("precinct=0 ballots=1\n").is_err());
    }

    #[test]
    fn rolls_round_trip() {
        let rolls = vec![VoterRoll { precinct: PrecinctId(0), crossed_off: 12 }];
        assert_eq!(parse_rolls(&serialize_rolls(&rolls)).unwrap(), rolls);
        assert!(parse_rolls("0,12\n").is_err());
    }
}

//! Domain types shared by every part of the simulator: pseudonyms,
//! candidates, ledger records, receipts, and their canonical encodings.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Default pseudonym width: a 12-digit number, sample space 10^12.
pub const DEFAULT_PSEUDONYM_WIDTH: u8 = 12;

/// Widest pseudonym that still fits in a `u64` (10^18 < 2^63).
pub const MAX_PSEUDONYM_WIDTH: u8 = 18;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TypeError {
    #[error("pseudonym width {0} outside 1..={MAX_PSEUDONYM_WIDTH}")]
    BadWidth(u8),
    #[error("pseudonym value {value} does not fit in {width} digits")]
    OutOfRange { value: u64, width: u8 },
    #[error("pseudonym text {text:?} is not exactly {width} decimal digits")]
    BadText { text: String, width: u8 },
    #[error("malformed receipt: {0}")]
    MalformedReceipt(String),
}

/// 10^width, the size of the pseudonym sample space.
pub fn space_size(width: u8) -> u64 {
    10u64.pow(u32::from(width))
}

/// A fixed-width decimal pseudonym `r`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Pseudonym {
    value: u64,
    width: u8,
}

impl Pseudonym {
    pub fn new(value: u64, width: u8) -> Result<Self, TypeError> {
        if width == 0 || width > MAX_PSEUDONYM_WIDTH {
            return Err(TypeError::BadWidth(width));
        }
        if value >= space_size(width) {
            return Err(TypeError::OutOfRange { value, width });
        }
        Ok(Self { value, width })
    }

    pub fn value(self) -> u64 {
        self.value
    }

    pub fn width(self) -> u8 {
        self.width
    }

    /// Parses the canonical zero-padded form. The text must be exactly
    /// `width` ASCII digits.
    pub fn parse(text: &str, width: u8) -> Result<Self, TypeError> {
        if width == 0 || width > MAX_PSEUDONYM_WIDTH {
            return Err(TypeError::BadWidth(width));
        }
        let bad = || TypeError::BadText {
            text: text.to_string(),
            width,
        };
        if text.len() != usize::from(width) || !text.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let value = text.parse::<u64>().map_err(|_| bad())?;
        Self::new(value, width)
    }

    /// The leading `digits` digits as an integer.
    pub fn prefix(self, digits: u8) -> u64 {
        debug_assert!(digits <= self.width);
        self.value / space_size(self.width - digits)
    }

    /// The trailing `digits` digits as an integer.
    pub fn suffix(self, digits: u8) -> u64 {
        debug_assert!(digits <= self.width);
        self.value % space_size(digits)
    }

    pub fn is_even(self) -> bool {
        self.value % 2 == 0
    }
}

impl fmt::Display for Pseudonym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:0width$}", self.value, width = usize::from(self.width))
    }
}

/// Canonical text form of a pseudonym: exactly `width` zero-padded digits.
pub fn format_pseudonym(p: Pseudonym) -> String {
    p.to_string()
}

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident, $inner:ty) => {
        $(#[$meta])*
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
        pub struct $name(pub $inner);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.fmt(f)
            }
        }

        impl FromStr for $name {
            type Err = std::num::ParseIntError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                s.parse::<$inner>().map($name)
            }
        }
    };
}

id_type!(
    /// Dense candidate index; canonical receipt order is ascending id.
    CandidateId,
    u16
);
id_type!(PrecinctId, u32);
id_type!(ClusterId, u32);
id_type!(SuperId, u32);
id_type!(UltraId, u32);
id_type!(
    /// Each precinct runs exactly one voting machine, which shares its id.
    MachineId,
    u32
);
id_type!(SessionId, u64);
id_type!(VoterId, u64);

impl From<PrecinctId> for MachineId {
    fn from(p: PrecinctId) -> Self {
        MachineId(p.0)
    }
}

impl From<MachineId> for PrecinctId {
    fn from(m: MachineId) -> Self {
        PrecinctId(m.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Candidate {
    pub id: CandidateId,
    pub display_name: String,
}

/// One row of the raw electronic record: what the central server holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct VoteRecord {
    pub r: Pseudonym,
    pub candidate: CandidateId,
    pub cluster: ClusterId,
    pub precinct: PrecinctId,
    pub is_dummy: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ReceiptRow {
    pub r: Pseudonym,
    pub candidate: CandidateId,
}

/// A printed receipt: one `(r, C)` row per candidate, in canonical order,
/// plus the issuing machine and its signature over [`Receipt::canonical_bytes`].
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Receipt {
    pub machine: MachineId,
    pub rows: Vec<ReceiptRow>,
    pub signature: Vec<u8>,
}

impl Receipt {
    /// Checks row count, canonical candidate order, and pairwise-distinct
    /// pseudonyms.
    pub fn validate(&self, num_candidates: usize) -> Result<(), TypeError> {
        if self.rows.len() != num_candidates {
            return Err(TypeError::MalformedReceipt(format!(
                "expected {num_candidates} rows, found {}",
                self.rows.len()
            )));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.candidate.index() != i {
                return Err(TypeError::MalformedReceipt(format!(
                    "row {i} carries candidate {}",
                    row.candidate
                )));
            }
        }
        let mut seen = HashSet::with_capacity(self.rows.len());
        if !self.rows.iter().all(|row| seen.insert(row.r)) {
            return Err(TypeError::MalformedReceipt(
                "pseudonyms on a receipt must be distinct".into(),
            ));
        }
        Ok(())
    }

    /// The signed payload: a `machine=<id>` line followed by one
    /// `<candidate>,<pseudonym>` line per row.
    pub fn canonical_bytes(&self, num_candidates: usize) -> Result<Vec<u8>, TypeError> {
        if self.rows.len() != num_candidates {
            return Err(TypeError::MalformedReceipt(format!(
                "expected {num_candidates} rows, found {}",
                self.rows.len()
            )));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.candidate.index() != i {
                return Err(TypeError::MalformedReceipt(format!("row {i} missing")));
            }
        }
        Ok(self.canonical_text().into_bytes())
    }

    fn canonical_text(&self) -> String {
        let mut out = format!("machine={}\n", self.machine);
        for row in &self.rows {
            out.push_str(&format!("{},{}\n", row.candidate, row.r));
        }
        out
    }

    /// Inverse of [`Receipt::canonical_bytes`]; returns an unsigned receipt.
    pub fn decode_canonical(bytes: &[u8], width: u8) -> Result<Receipt, TypeError> {
        let text = std::str::from_utf8(bytes)
            .map_err(|_| TypeError::MalformedReceipt("not UTF-8".into()))?;
        let mut lines = text.lines();
        let machine = lines
            .next()
            .and_then(|l| l.strip_prefix("machine="))
            .and_then(|v| v.parse::<MachineId>().ok())
            .ok_or_else(|| TypeError::MalformedReceipt("missing machine line".into()))?;
        let mut rows = Vec::new();
        for line in lines {
            let (c, r) = line
                .split_once(',')
                .ok_or_else(|| TypeError::MalformedReceipt(format!("bad row {line:?}")))?;
            let candidate = c
                .parse::<CandidateId>()
                .map_err(|_| TypeError::MalformedReceipt(format!("bad candidate {c:?}")))?;
            rows.push(ReceiptRow {
                r: Pseudonym::parse(r, width)?,
                candidate,
            });
        }
        Ok(Receipt {
            machine,
            rows,
            signature: Vec::new(),
        })
    }

    /// File form handed to voters: the canonical block plus a
    /// `signature=<hex>` trailer.
    pub fn to_file_text(&self) -> String {
        let mut out = self.canonical_text();
        out.push_str(&format!("signature={}\n", hex::encode(&self.signature)));
        out
    }

    pub fn parse_file(text: &str, width: u8) -> Result<Receipt, TypeError> {
        let body = text.trim_end_matches('\n');
        let (head, sig_line) = body
            .rsplit_once('\n')
            .ok_or_else(|| TypeError::MalformedReceipt("truncated receipt file".into()))?;
        let sig_hex = sig_line
            .strip_prefix("signature=")
            .ok_or_else(|| TypeError::MalformedReceipt("missing signature line".into()))?;
        let signature = hex::decode(sig_hex)
            .map_err(|_| TypeError::MalformedReceipt("signature is not hex".into()))?;
        let mut receipt = Receipt::decode_canonical(head.as_bytes(), width)?;
        receipt.signature = signature;
        Ok(receipt)
    }

    /// Pseudonym printed on the row of `candidate`.
    pub fn row_for(&self, candidate: CandidateId) -> Option<Pseudonym> {
        self.rows.get(candidate.index()).map(|row| row.r)
    }
}

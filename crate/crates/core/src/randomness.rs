//! Models of the in-booth mechanical number generator.
//!
//! The device is a uniform source over `[0, 10^width)`. A rigged device
//! outputs whatever the operator forces. With voter-injected entropy the
//! machine commits to the full pseudonym first; the voter then adds a digit
//! string to the committed suffix, digit by digit, mod 10.
//!
//! Every stochastic component of a simulation draws from its own ChaCha
//! stream, keyed by `(master seed, domain, index)`, so runs are reproducible
//! from the master seed and unrelated components never share state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::types::{space_size, Pseudonym, TypeError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RandomnessError {
    #[error("entropy split {machine}+{voter} does not match pseudonym width {width}")]
    SplitMismatch { machine: u8, voter: u8, width: u8 },
    #[error("voter part has width {got}, expected {expected}")]
    VoterWidth { got: u8, expected: u8 },
    #[error(transparent)]
    Type(#[from] TypeError),
}

/// Independent purposes a stream can be drawn for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Session = 1,
    Choice = 2,
    Arrival = 3,
    MachineKeys = 4,
    VoterEntropy = 5,
    Attack = 6,
    Audit = 7,
    Verifiers = 8,
    Trial = 9,
    BallotShuffle = 10,
}

/// A deterministic stream for `(master, domain, index)`.
pub fn stream(master: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master.to_le_bytes());
    key[8..16].copy_from_slice(&(domain as u64).to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Seed for the `trial`-th run of a Monte-Carlo experiment.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    stream(master, Domain::Trial, trial).random()
}

/// How the machine part / voter part of a pseudonym are split.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EntropySplit {
    pub machine_width: u8,
    pub voter_width: u8,
}

impl EntropySplit {
    pub fn new(machine_width: u8, voter_width: u8, width: u8) -> Result<Self, RandomnessError> {
        if machine_width == 0 || voter_width == 0 || machine_width + voter_width != width {
            return Err(RandomnessError::SplitMismatch {
                machine: machine_width,
                voter: voter_width,
                width,
            });
        }
        Ok(Self {
            machine_width,
            voter_width,
        })
    }

    /// Ten machine digits and two voter digits at width 12; in general the
    /// voter controls the last two digits.
    pub fn default_for(width: u8) -> Result<Self, RandomnessError> {
        let voter = 2.min(width.saturating_sub(1));
        Self::new(width - voter, voter, width)
    }

    pub fn width(self) -> u8 {
        self.machine_width + self.voter_width
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RngMode {
    Honest,
    /// Hidden-electromagnet control: the draw is whatever was forced.
    Rigged(Pseudonym),
    VoterEntropy(EntropySplit),
    /// Voter entropy on a rigged device: the machine part is forced, the
    /// committed suffix and the voter's digits are not.
    RiggedEntropy {
        split: EntropySplit,
        forced_machine_part: u64,
    },
}

/// What the machine displays before the voter injects entropy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MachineCommitment {
    pub machine_part: Pseudonym,
    pub committed_suffix: Pseudonym,
}

pub fn draw_pseudonym<R: Rng + ?Sized>(rng: &mut R, width: u8) -> Pseudonym {
    let value = rng.random_range(0..space_size(width));
    Pseudonym::new(value, width).expect("draw is in range")
}

pub fn draw_rigged(forced: Pseudonym) -> Pseudonym {
    forced
}

/// Draws the machine commitment. `forced_machine_part` models a rigged
/// device; the committed suffix is always drawn.
pub fn draw_commitment<R: Rng + ?Sized>(
    rng: &mut R,
    split: EntropySplit,
    forced_machine_part: Option<u64>,
) -> Result<MachineCommitment, RandomnessError> {
    let machine_part = match forced_machine_part {
        Some(v) => Pseudonym::new(v, split.machine_width)?,
        None => draw_pseudonym(rng, split.machine_width),
    };
    Ok(MachineCommitment {
        machine_part,
        committed_suffix: draw_pseudonym(rng, split.voter_width),
    })
}

/// Final pseudonym: the machine part followed by the digit-wise
/// `(committed + voter) mod 10` suffix.
pub fn combine_voter_entropy(
    commitment: MachineCommitment,
    voter_part: Pseudonym,
) -> Result<Pseudonym, RandomnessError> {
    let voter_width = commitment.committed_suffix.width();
    if voter_part.width() != voter_width {
        return Err(RandomnessError::VoterWidth {
            got: voter_part.width(),
            expected: voter_width,
        });
    }
    let mut committed = commitment.committed_suffix.value();
    let mut voter = voter_part.value();
    let mut suffix = 0u64;
    let mut place = 1u64;
    for _ in 0..voter_width {
        let digit = (committed % 10 + voter % 10) % 10;
        suffix += digit * place;
        place *= 10;
        committed /= 10;
        voter /= 10;
    }
    let width = commitment.machine_part.width() + voter_width;
    let value = commitment.machine_part.value() * space_size(voter_width) + suffix;
    Ok(Pseudonym::new(value, width)?)
}

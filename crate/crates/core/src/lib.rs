//! Simulation and verification of software-free verifiable elections.

pub mod adversary;
pub mod audit;
pub mod config;
pub mod engine;
pub mod ledger;
pub mod randomness;
pub mod signing;
pub mod stats;
pub mod types;
pub mod verification;

pub use config::{ChoiceModel, ConfigError, ElectionConfig, Layout, SeedingMode, SigningMode};
pub use engine::{simulate, Election, RawElectionOutput};
pub use types::{
    CandidateId, ClusterId, MachineId, PrecinctId, Pseudonym, Receipt, ReceiptRow, SessionId,
    SuperId, UltraId, VoteRecord, VoterId,
};
pub use ledger::{FlatLedger, HierarchicalLedger, LedgerError, LedgerFile};
pub use verification::{AntiStuffing, CollisionCensus, DisputeClass, DisputeOutcome, VerificationError};

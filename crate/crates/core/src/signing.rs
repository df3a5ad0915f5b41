//! Per-machine Ed25519 keys and the public key registry published next to
//! the ledger.

use std::collections::BTreeMap;

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use rand::RngCore;
use thiserror::Error;

use crate::randomness::{stream, Domain};
use crate::types::{MachineId, Receipt, TypeError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KeyError {
    #[error("no public key registered for machine {0}")]
    UnknownMachine(MachineId),
    #[error("key registry line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Private signing keys, one per machine. Derived from the election seed so
/// that a run is reproducible.
#[derive(Clone)]
pub struct MachineKeys {
    keys: Vec<SigningKey>,
}

impl MachineKeys {
    pub fn derive(seed: u64, machines: usize) -> Self {
        let keys = (0..machines as u64)
            .map(|m| {
                let mut secret = [0u8; 32];
                stream(seed, Domain::MachineKeys, m).fill_bytes(&mut secret);
                SigningKey::from_bytes(&secret)
            })
            .collect();
        Self { keys }
    }

    pub fn sign(&self, receipt: &Receipt, num_candidates: usize) -> Result<Vec<u8>, TypeError> {
        let key = &self.keys[receipt.machine.index()];
        let payload = receipt.canonical_bytes(num_candidates)?;
        Ok(key.sign(&payload).to_bytes().to_vec())
    }

    /// Fills in the signature of a receipt printed unsigned.
    pub fn sign_in_place(&self, receipt: &mut Receipt, num_candidates: usize) -> Result<(), TypeError> {
        receipt.signature = self.sign(receipt, num_candidates)?;
        Ok(())
    }

    pub fn registry(&self) -> KeyRegistry {
        KeyRegistry {
            keys: self
                .keys
                .iter()
                .enumerate()
                .map(|(m, k)| (MachineId(m as u32), k.verifying_key()))
                .collect(),
        }
    }
}

impl std::fmt::Debug for MachineKeys {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "MachineKeys({} machines)", self.keys.len())
    }
}

/// Public keys by machine id. Serialised as `machine_id,hex_public_key` lines.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KeyRegistry {
    keys: BTreeMap<MachineId, VerifyingKey>,
}

impl KeyRegistry {
    pub fn get(&self, machine: MachineId) -> Result<&VerifyingKey, KeyError> {
        self.keys.get(&machine).ok_or(KeyError::UnknownMachine(machine))
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// `Ok(false)` for any malformed or non-matching signature.
    pub fn verify(&self, receipt: &Receipt, num_candidates: usize) -> Result<bool, KeyError> {
        let key = self.get(receipt.machine)?;
        let Ok(payload) = receipt.canonical_bytes(num_candidates) else {
            return Ok(false);
        };
        let Ok(bytes) = <[u8; 64]>::try_from(receipt.signature.as_slice()) else {
            return Ok(false);
        };
        let signature = Signature::from_bytes(&bytes);
        Ok(key.verify(&payload, &signature).is_ok())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# format=keys\n");
        for (m, k) in &self.keys {
            out.push_str(&format!("{m},{}\n", hex::encode(k.as_bytes())));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, KeyError> {
        let mut keys = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let err = |message: &str| KeyError::Parse {
                line: i + 1,
                message: message.to_string(),
            };
            if line.starts_with('#') || line.is_empty() {
                continue;
            }
            let (m, k) = line.split_once(',').ok_or_else(|| err("expected machine,key"))?;
            let machine = m.parse::<MachineId>().map_err(|_| err("bad machine id"))?;
            let raw = hex::decode(k).map_err(|_| err("key is not hex"))?;
            let bytes = <[u8; 32]>::try_from(raw.as_slice()).map_err(|_| err("key must be 32 bytes"))?;
            let key = VerifyingKey::from_bytes(&bytes).map_err(|_| err("invalid public key"))?;
            if keys.insert(machine, key).is_some() {
                return Err(err("duplicate machine id"));
            }
        }
        Ok(Self { keys })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{CandidateId, Pseudonym, ReceiptRow};

    fn receipt(machine: u32) -> Receipt {
        Receipt {
            machine: MachineId(machine),
            rows: (0..3)
                .map(|i| ReceiptRow {
                    r: Pseudonym::new(100 + i, 12).unwrap(),
                    candidate: CandidateId(i as u16),
                })
                .collect(),
            signature: Vec::new(),
        }
    }

    #[test]
    fn sign_and_verify() {
        let keys = MachineKeys::derive(11, 4);
        let registry = keys.registry();
        let mut r = receipt(2);
        keys.sign_in_place(&mut r, 3).unwrap();
        assert!(registry.verify(&r, 3).unwrap());

        let mut altered = r.clone();
        altered.rows[1].r = Pseudonym::new(101 + 10, 12).unwrap();
        assert!(!registry.verify(&altered, 3).unwrap());

        let mut truncated = r.clone();
        truncated.signature.truncate(40);
        assert!(!registry.verify(&truncated, 3).unwrap());

        let mut other_machine = r.clone();
        other_machine.machine = MachineId(3);
        assert!(!registry.verify(&other_machine, 3).unwrap());

        let mut unknown = r;
        unknown.machine = MachineId(9);
        assert_eq!(registry.verify(&unknown, 3), Err(KeyError::UnknownMachine(MachineId(9))));
    }

    #[test]
    fn keys_are_deterministic_per_seed() {
        assert_eq!(MachineKeys::derive(1, 2).registry(), MachineKeys::derive(1, 2).registry());
        assert_ne!(MachineKeys::derive(1, 2).registry(), MachineKeys::derive(2, 2).registry());
    }

    #[test]
    fn registry_text_round_trip() {
        let registry = MachineKeys::derive(5, 3).registry();
        assert_eq!(KeyRegistry::parse(&registry.to_text()).unwrap(), registry);
        assert!(KeyRegistry::parse("0,zz\n").is_err());
    }
}

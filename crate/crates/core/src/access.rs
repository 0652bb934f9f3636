//! End-to-end record access: a signed request reaches the EHRs manager,
//! which checks the sender against the contract, fetches and decrypts the
//! record on a grant, and appends exactly one outcome transaction.
//!
//! ```text
//! request tx ──verify──▶ sender pk ──PolicyList──▶ registered?
//!        │                                     │ yes         │ no
//!        ▼                                     ▼             │
//!   DataRequest{addr, device} ──RetrieveEHRs──▶ grant ─┐     │
//!                                               deny ──┴─────┴──▶ Penalty
//! ```

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::Digest;
use crate::contract::{AccessContract, Bindings, ContractError, Decision, GasReceipt, GasSchedule, Role};
use crate::crypto::{self, Cipher, CryptoError, KeyMaterial};
use crate::ledger::{
    decode_method, get_sender_public_key, Block, ContractCall, Identity, Ledger, LedgerError, PatientAddress,
    PublicKey, Transaction,
};
use crate::storage::{CasStorage, ContentHash, EhrRecord, HealthResult, StorageError};

#[derive(Debug, Error)]
pub enum AccessError {
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error("expected a DataRequest transaction, got `{0}`")]
    NotARequest(String),
    #[error("stored record is not a health result: {0}")]
    Payload(#[from] crate::codec::CodecError),
}

/// Key under which a network built from `seed` encrypts stored records.
pub fn storage_key(seed: u64) -> KeyMaterial {
    KeyMaterial::derive("ehr-storage", seed, 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Granted,
    Penalized,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Granted => "granted",
            Verdict::Penalized => "penalized",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessRequest {
    pub requester: PublicKey,
    pub address: PatientAddress,
    pub device_id: String,
    pub tick: u64,
}

impl AccessRequest {
    pub fn new(requester: &Identity, address: PatientAddress, device_id: impl Into<String>, tick: u64) -> Self {
        Self { requester: requester.public_key(), address, device_id: device_id.into(), tick }
    }

    pub fn call(&self) -> ContractCall {
        ContractCall::DataRequest { address: self.address.clone(), device_id: self.device_id.clone() }
    }

    /// Signs the request as a transaction from `identity`, which must own
    /// `requester`.
    pub fn sign(&self, identity: &Identity, nonce: u64) -> Transaction {
        assert_eq!(identity.public_key(), self.requester, "request signed by a different identity");
        Transaction::new(identity, &self.call(), self.tick, nonce)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessOutcome {
    pub verdict: Verdict,
    pub requester: PublicKey,
    pub address: PatientAddress,
    pub device_id: String,
    pub request_tx: Digest,
    /// The appended grant or penalty transaction.
    pub tx_id: Digest,
    pub record_hash: Option<ContentHash>,
    pub result: Option<HealthResult>,
    pub receipts: Vec<GasReceipt>,
    pub message: String,
}

/// Ledger, contract and storage wired together under one admin and one
/// EHRs manager. All mutation goes through `&mut self`, which gives the
/// single-writer discipline per tick.
#[derive(Debug)]
pub struct SharingNetwork {
    ledger: Ledger,
    contract: AccessContract,
    storage: CasStorage,
    cipher: Cipher,
    storage_key: KeyMaterial,
    admin: Identity,
    manager: Identity,
    nonces: BTreeMap<PublicKey, u64>,
    tick: u64,
}

impl SharingNetwork {
    pub fn new(
        seed: u64,
        sealers: Vec<String>,
        schedule: GasSchedule,
        storage: CasStorage,
    ) -> Result<Self, AccessError> {
        let admin = Identity::derive("admin", seed);
        let manager = Identity::derive("ehrs-manager", seed);
        let mut ledger = Ledger::new(sealers)?;
        ledger.register_participant("admin");
        ledger.register_participant("ehrs-manager");
        Ok(Self {
            ledger,
            contract: AccessContract::new(admin.public_key(), manager.public_key(), schedule),
            storage,
            cipher: Cipher::seeded(seed),
            storage_key: storage_key(seed),
            admin,
            manager,
            nonces: BTreeMap::new(),
            tick: 0,
        })
    }

    pub fn admin(&self) -> &Identity {
        &self.admin
    }

    pub fn manager(&self) -> &Identity {
        &self.manager
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn contract(&self) -> &AccessContract {
        &self.contract
    }

    pub fn storage(&self) -> &CasStorage {
        &self.storage
    }

    /// Direct storage access, used for fault injection.
    pub fn storage_mut(&mut self) -> &mut CasStorage {
        &mut self.storage
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    /// Next unused nonce for `pk`.
    pub fn next_nonce(&mut self, pk: &PublicKey) -> u64 {
        let n = self.nonces.entry(*pk).or_insert(0);
        *n += 1;
        *n
    }

    pub fn add_participant(&mut self, name: impl Into<String>) {
        self.ledger.register_participant(name);
    }

    fn identity(&self, signer: Signer) -> &Identity {
        match signer {
            Signer::Admin => &self.admin,
            Signer::Manager => &self.manager,
        }
    }

    fn append(&mut self, signer: Signer, call: &ContractCall) -> Result<Digest, AccessError> {
        let nonce = self.next_nonce(&self.identity(signer).public_key());
        let tx = Transaction::new(self.identity(signer), call, self.tick, nonce);
        Ok(self.ledger.submit(tx)?)
    }

    /// Registers `pk` with `role` and its patient/device bindings, and
    /// appends the registration transaction.
    pub fn register_user(
        &mut self,
        admin: &PublicKey,
        pk: PublicKey,
        role: Role,
        bindings: Bindings,
    ) -> Result<Digest, AccessError> {
        self.contract.add_user(admin, pk, role)?;
        self.contract.bind(admin, &pk, bindings)?;
        self.append(Signer::Admin, &ContractCall::AddUser { pk, role })
    }

    /// Removes `pk`. A patient's own records are tombstoned in storage.
    pub fn delete_user(
        &mut self,
        admin: &PublicKey,
        pk: &PublicKey,
    ) -> Result<(Digest, Vec<ContentHash>), AccessError> {
        let (entry, _) = self.contract.delete_user(admin, pk)?;
        let mut purged = Vec::new();
        if entry.role == Role::Patient {
            for addr in &entry.bindings.patients {
                if self.storage.lookup(addr).is_some() {
                    purged.push(self.storage.tombstone(addr)?);
                }
            }
        }
        let id = self.append(Signer::Admin, &ContractCall::DeleteUser { pk: *pk })?;
        Ok((id, purged))
    }

    /// Encrypts `result` under the storage key and stores it for `address`.
    pub fn store_record(&mut self, address: PatientAddress, result: &HealthResult) -> Result<ContentHash, AccessError> {
        let c = self.cipher.encrypt(&result.to_bytes(), &self.storage_key);
        Ok(self.storage.store(&EhrRecord::encrypted(address, self.tick, c))?)
    }

    /// Runs one request through verification, decision, retrieval and
    /// ledger append. A deny is a verdict; `Err` means the request could
    /// not be processed at all and nothing was appended.
    pub fn process_request(&mut self, tx: &Transaction) -> Result<AccessOutcome, AccessError> {
        let manager = self.manager.public_key();
        let pk = get_sender_public_key(tx)?;
        let (address, device_id) = match decode_method(tx)? {
            ContractCall::DataRequest { address, device_id } => (address, device_id),
            other => return Err(AccessError::NotARequest(other.method().to_owned())),
        };
        let (registered, listed) = self.contract.policy_list(&manager, &pk)?;
        let mut receipts = vec![listed];
        let decision = if registered {
            let (d, r) = self.contract.retrieve_ehrs(&manager, &pk, &address, &device_id)?;
            receipts.extend(r);
            d
        } else {
            Decision::Deny
        };

        let mut outcome = AccessOutcome {
            verdict: Verdict::Penalized,
            requester: pk,
            address: address.clone(),
            device_id: device_id.clone(),
            request_tx: tx.tx_id,
            tx_id: Digest::ZERO,
            record_hash: None,
            result: None,
            receipts,
            message: String::new(),
        };

        match decision {
            Decision::Grant => {
                let entry =
                    *self.storage.lookup(&address).ok_or_else(|| StorageError::NotFound(address.to_string()))?;
                let record = self.storage.fetch(&address)?;
                let c = record.ciphertext().ok_or_else(|| StorageError::Plaintext(address.clone()))?;
                let result = HealthResult::from_bytes(&crypto::decrypt(c, &self.storage_key)?)?;
                let call = ContractCall::RetrieveEhrs { pk, address: address.clone(), device_id, record: entry.hash.0 };
                outcome.tx_id = self.append(Signer::Manager, &call)?;
                outcome.verdict = Verdict::Granted;
                outcome.record_hash = Some(entry.hash);
                outcome.result = Some(result);
                outcome.message = format!("access granted to record {} of {address}", entry.hash);
            }
            Decision::Deny => {
                let reason = if registered {
                    "policy does not bind this patient and device"
                } else {
                    "sender is not registered"
                };
                let action = format!("warning: unauthorized request for {address} from device {device_id}: {reason}");
                outcome.receipts.push(self.contract.penalty(&manager, &pk, &action)?);
                outcome.tx_id = self.append(Signer::Manager, &ContractCall::Penalty { pk, action: action.clone() })?;
                outcome.message = action;
            }
        }
        Ok(outcome)
    }

    /// Processes requests that arrived in the same tick, in an order fixed
    /// by `seed`. Each result is paired with its request's tx id.
    pub fn process_batch(
        &mut self,
        mut txs: Vec<Transaction>,
        seed: u64,
    ) -> Vec<(Digest, Result<AccessOutcome, AccessError>)> {
        txs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        txs.iter().map(|tx| (tx.tx_id, self.process_request(tx))).collect()
    }

    /// Seals pending transactions and advances the simulation clock.
    pub fn seal(&mut self) -> Block {
        let block = self.ledger.seal_block();
        self.tick += 1;
        self.storage.advance_tick();
        block
    }
}

#[derive(Clone, Copy)]
enum Signer {
    Admin,
    Manager,
}

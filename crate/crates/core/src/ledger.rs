//! Hash-chained, append-only transaction ledger.
//!
//! Transactions are Ed25519-signed over a canonical byte encoding and
//! identified by the SHA-256 of that encoding. Blocks are sealed in
//! round-robin order by a fixed set of authorities, one block per
//! simulation tick, and broadcast synchronously to every registered
//! participant.
//!
//! A block's hash covers `height ‖ previous_hash ‖ tx_ids ‖ sealer`. Since
//! each `tx_id` covers the transaction body and the signature is checked
//! against it, any change to any sealed field shows up in
//! [`verify_blocks`].

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::codec::{hex_bytes, CodecError, Digest, Reader, Writer};
use crate::contract::Role;

const TX_TAG: &str = "EDGESHARE-TX1";
const BLOCK_TAG: &str = "EDGESHARE-BLK1";
const BLOCK_WIRE_TAG: &str = "EDGESHARE-BLKW1";
pub const GENESIS_SEALER: &str = "genesis";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("transaction signature does not verify against its sender key")]
    BadSignature,
    #[error("transaction id does not match its contents")]
    TxIdMismatch,
    #[error("sender public key is not a valid curve point")]
    MalformedKey,
    #[error("duplicate transaction {0}")]
    Duplicate(Digest),
    #[error("unknown contract method `{0}`")]
    UnknownMethod(String),
    #[error("malformed encoding: {0}")]
    Codec(#[from] CodecError),
    #[error("invalid patient address `{0}`")]
    BadAddress(String),
    #[error("ledger needs at least one sealer")]
    NoSealers,
    #[error("chain import line {line}: {msg}")]
    Import { line: usize, msg: String },
}

// ---------------------------------------------------------------------------
// identities

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublicKey(pub [u8; 32]);

impl PublicKey {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn short(&self) -> String {
        self.to_hex()[..12].to_owned()
    }

    fn verifying_key(&self) -> Result<VerifyingKey, LedgerError> {
        VerifyingKey::from_bytes(&self.0).map_err(|_| LedgerError::MalformedKey)
    }
}

impl fmt::Display for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", self.short())
    }
}

impl FromStr for PublicKey {
    type Err = LedgerError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let raw = hex::decode(s).map_err(|_| LedgerError::MalformedKey)?;
        Ok(PublicKey(raw.try_into().map_err(|_| LedgerError::MalformedKey)?))
    }
}

impl Serialize for PublicKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for PublicKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// A named signing identity (user, admin, EHRs manager, sealer).
#[derive(Clone)]
pub struct Identity {
    name: String,
    key: SigningKey,
}

impl Identity {
    /// Deterministic identity from a scenario seed and a name.
    pub fn derive(name: impl Into<String>, seed: u64) -> Self {
        let name = name.into();
        let mut h = Sha256::new();
        h.update(b"edgeshare-identity-v1");
        h.update(seed.to_be_bytes());
        h.update(name.as_bytes());
        let secret: [u8; 32] = h.finalize().into();
        Self { name, key: SigningKey::from_bytes(&secret) }
    }

    pub fn from_secret_hex(name: impl Into<String>, hex_secret: &str) -> Result<Self, LedgerError> {
        let raw = hex::decode(hex_secret.trim()).map_err(|_| LedgerError::MalformedKey)?;
        let secret: [u8; 32] = raw.try_into().map_err(|_| LedgerError::MalformedKey)?;
        Ok(Self { name: name.into(), key: SigningKey::from_bytes(&secret) })
    }

    /// Hex secret for key files. Never logged.
    pub fn secret_hex(&self) -> String {
        hex::encode(self.key.to_bytes())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey(self.key.verifying_key().to_bytes())
    }

    fn sign(&self, msg: &[u8]) -> [u8; 64] {
        self.key.sign(msg).to_bytes()
    }
}

impl fmt::Debug for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Identity")
            .field("name", &self.name)
            .field("public_key", &self.public_key())
            .finish_non_exhaustive()
    }
}

// ---------------------------------------------------------------------------
// addresses

/// `AreaID:PatientID`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PatientAddress {
    area_id: String,
    patient_id: String,
}

impl PatientAddress {
    pub fn new(area_id: impl Into<String>, patient_id: impl Into<String>) -> Result<Self, LedgerError> {
        let (area_id, patient_id) = (area_id.into(), patient_id.into());
        let ok = |s: &str| !s.is_empty() && !s.contains(':') && !s.chars().any(char::is_whitespace);
        if !ok(&area_id) || !ok(&patient_id) {
            return Err(LedgerError::BadAddress(format!("{area_id}:{patient_id}")));
        }
        Ok(Self { area_id, patient_id })
    }

    pub fn area_id(&self) -> &str {
        &self.area_id
    }

    pub fn patient_id(&self) -> &str {
        &self.patient_id
    }
}

impl fmt::Display for PatientAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.area_id, self.patient_id)
    }
}

impl FromStr for PatientAddress {
    type Err = LedgerError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, p) = s.split_once(':').ok_or_else(|| LedgerError::BadAddress(s.into()))?;
        Self::new(a, p)
    }
}

impl Serialize for PatientAddress {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PatientAddress {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// contract calls

/// Decoded method and arguments of a transaction.
#[derive(Debug, Clone, PartialEq)]
pub enum ContractCall {
    AddUser {
        pk: PublicKey,
        role: Role,
    },
    DeleteUser {
        pk: PublicKey,
    },
    PolicyList {
        pk: PublicKey,
    },
    /// Record of a granted retrieval: who read which patient's record.
    RetrieveEhrs {
        pk: PublicKey,
        address: PatientAddress,
        device_id: String,
        record: Digest,
    },
    Penalty {
        pk: PublicKey,
        action: String,
    },
    /// A user's request to read a patient's record.
    DataRequest {
        address: PatientAddress,
        device_id: String,
    },
}

impl ContractCall {
    pub const METHODS: [&'static str; 6] =
        ["AddUser", "DeleteUser", "PolicyList", "RetrieveEHRs", "Penalty", "DataRequest"];

    pub fn method(&self) -> &'static str {
        match self {
            ContractCall::AddUser { .. } => "AddUser",
            ContractCall::DeleteUser { .. } => "DeleteUser",
            ContractCall::PolicyList { .. } => "PolicyList",
            ContractCall::RetrieveEhrs { .. } => "RetrieveEHRs",
            ContractCall::Penalty { .. } => "Penalty",
            ContractCall::DataRequest { .. } => "DataRequest",
        }
    }

    pub fn encode_args(&self) -> Vec<u8> {
        let mut w = Writer::new();
        match self {
            ContractCall::AddUser { pk, role } => w.fixed(&pk.0).str(role.as_str()),
            ContractCall::DeleteUser { pk } | ContractCall::PolicyList { pk } => w.fixed(&pk.0),
            ContractCall::RetrieveEhrs { pk, address, device_id, record } => {
                w.fixed(&pk.0).str(address.area_id()).str(address.patient_id()).str(device_id).fixed(&record.0)
            }
            ContractCall::Penalty { pk, action } => w.fixed(&pk.0).str(action),
            ContractCall::DataRequest { address, device_id } => {
                w.str(address.area_id()).str(address.patient_id()).str(device_id)
            }
        };
        w.finish()
    }

    pub fn decode(method: &str, args: &[u8]) -> Result<Self, LedgerError> {
        let mut r = Reader::new(args);
        let addr = |r: &mut Reader| -> Result<PatientAddress, LedgerError> {
            let area = r.str()?.to_owned();
            let patient = r.str()?.to_owned();
            PatientAddress::new(area, patient)
        };
        let call = match method {
            "AddUser" => {
                let pk = PublicKey(r.fixed()?);
                let role = r.str()?;
                let role = role.parse().map_err(|_| CodecError::Invalid(format!("unknown role `{role}`")))?;
                ContractCall::AddUser { pk, role }
            }
            "DeleteUser" => ContractCall::DeleteUser { pk: PublicKey(r.fixed()?) },
            "PolicyList" => ContractCall::PolicyList { pk: PublicKey(r.fixed()?) },
            "RetrieveEHRs" => ContractCall::RetrieveEhrs {
                pk: PublicKey(r.fixed()?),
                address: addr(&mut r)?,
                device_id: r.str()?.to_owned(),
                record: Digest(r.fixed()?),
            },
            "Penalty" => ContractCall::Penalty { pk: PublicKey(r.fixed()?), action: r.str()?.to_owned() },
            "DataRequest" => ContractCall::DataRequest { address: addr(&mut r)?, device_id: r.str()?.to_owned() },
            other => return Err(LedgerError::UnknownMethod(other.to_owned())),
        };
        r.finish()?;
        Ok(call)
    }

    /// Patient address this call concerns, if any.
    pub fn patient_address(&self) -> Option<&PatientAddress> {
        match self {
            ContractCall::RetrieveEhrs { address, .. } | ContractCall::DataRequest { address, .. } => Some(address),
            _ => None,
        }
    }
}

// ---------------------------------------------------------------------------
// transactions

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub tx_id: Digest,
    pub sender: PublicKey,
    pub method: String,
    #[serde(with = "hex_bytes")]
    pub args: Vec<u8>,
    /// Simulation tick at creation.
    pub timestamp: u64,
    /// Per-sender sequence number.
    pub nonce: u64,
    #[serde(with = "hex_bytes")]
    pub signature: [u8; 64],
}

impl Transaction {
    pub fn new(sender: &Identity, call: &ContractCall, timestamp: u64, nonce: u64) -> Self {
        let mut tx = Transaction {
            tx_id: Digest::ZERO,
            sender: sender.public_key(),
            method: call.method().to_owned(),
            args: call.encode_args(),
            timestamp,
            nonce,
            signature: [0; 64],
        };
        let body = tx.body_bytes();
        tx.signature = sender.sign(&body);
        tx.tx_id = Digest::of(&body);
        tx
    }

    /// Canonical unsigned encoding: the signed message and the id preimage.
    pub fn body_bytes(&self) -> Vec<u8> {
        Writer::new()
            .tag(TX_TAG)
            .fixed(&self.sender.0)
            .str(&self.method)
            .bytes(&self.args)
            .u64(self.timestamp)
            .u64(self.nonce)
            .finish()
    }

    /// Full wire encoding: body followed by the 64-byte signature.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = self.body_bytes();
        b.extend_from_slice(&self.signature);
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LedgerError> {
        let mut r = Reader::new(bytes);
        r.tag(TX_TAG)?;
        let sender = PublicKey(r.fixed()?);
        let method = r.str()?.to_owned();
        let args = r.bytes()?.to_vec();
        let timestamp = r.u64()?;
        let nonce = r.u64()?;
        let signature = r.fixed()?;
        r.finish()?;
        let mut tx = Transaction { tx_id: Digest::ZERO, sender, method, args, timestamp, nonce, signature };
        tx.tx_id = Digest::of(&tx.body_bytes());
        Ok(tx)
    }

    /// Checks that the id matches the body and the signature verifies.
    pub fn verify(&self) -> Result<(), LedgerError> {
        let body = self.body_bytes();
        if Digest::of(&body) != self.tx_id {
            return Err(LedgerError::TxIdMismatch);
        }
        let vk = self.sender.verifying_key()?;
        vk.verify_strict(&body, &Signature::from_bytes(&self.signature)).map_err(|_| LedgerError::BadSignature)
    }
}

/// Sender key of a transaction, returned only if its signature verifies.
pub fn get_sender_public_key(tx: &Transaction) -> Result<PublicKey, LedgerError> {
    tx.verify()?;
    Ok(tx.sender)
}

/// Structured view of a transaction's method and arguments.
pub fn decode_method(tx: &Transaction) -> Result<ContractCall, LedgerError> {
    ContractCall::decode(&tx.method, &tx.args)
}

// ---------------------------------------------------------------------------
// blocks

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    pub previous_hash: Digest,
    pub sealer: String,
    pub transactions: Vec<Transaction>,
    pub hash: Digest,
}

impl Block {
    fn genesis() -> Self {
        let mut b = Block {
            height: 0,
            previous_hash: Digest::ZERO,
            sealer: GENESIS_SEALER.into(),
            transactions: Vec::new(),
            hash: Digest::ZERO,
        };
        b.hash = b.compute_hash();
        b
    }

    pub fn compute_hash(&self) -> Digest {
        let mut w = Writer::new();
        w.tag(BLOCK_TAG).u64(self.height).fixed(&self.previous_hash.0);
        w.u32(self.transactions.len() as u32);
        for tx in &self.transactions {
            w.fixed(&tx.tx_id.0);
        }
        w.str(&self.sealer);
        Digest::of(&w.finish())
    }

    /// Full binary encoding, transactions included. Ids are not stored;
    /// they are recomputed from transaction bodies on decode.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.tag(BLOCK_WIRE_TAG)
            .u64(self.height)
            .fixed(&self.previous_hash.0)
            .str(&self.sealer)
            .u32(self.transactions.len() as u32);
        for tx in &self.transactions {
            w.bytes(&tx.to_bytes());
        }
        w.fixed(&self.hash.0);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LedgerError> {
        let mut r = Reader::new(bytes);
        r.tag(BLOCK_WIRE_TAG)?;
        let height = r.u64()?;
        let previous_hash = Digest(r.fixed()?);
        let sealer = r.str()?.to_owned();
        let count = r.u32()?;
        let mut transactions = Vec::new();
        for _ in 0..count {
            transactions.push(Transaction::from_bytes(r.bytes()?)?);
        }
        let hash = Digest(r.fixed()?);
        r.finish()?;
        Ok(Block { height, previous_hash, sealer, transactions, hash })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainStatus {
    Ok,
    /// First height at which a link, id, signature or hash fails.
    Corrupt {
        height: u64,
    },
}

/// Recomputes every hash link of a block sequence.
pub fn verify_blocks(blocks: &[Block]) -> ChainStatus {
    verify_extension(None, blocks)
}

/// Verifies `blocks` as the continuation of a trusted tip `(height, hash)`,
/// or from genesis when `tip` is `None`. Cheap link and hash checks run
/// before signatures.
pub fn verify_extension(tip: Option<(u64, Digest)>, blocks: &[Block]) -> ChainStatus {
    let (mut next, mut prev) = match tip {
        Some((h, d)) => (h + 1, d),
        None => (0, Digest::ZERO),
    };
    for b in blocks {
        let corrupt = ChainStatus::Corrupt { height: next };
        if b.height != next || b.previous_hash != prev {
            return corrupt;
        }
        if next == 0 && (b.sealer != GENESIS_SEALER || !b.transactions.is_empty()) {
            return corrupt;
        }
        if b.compute_hash() != b.hash {
            return corrupt;
        }
        if b.transactions.iter().any(|tx| tx.verify().is_err()) {
            return corrupt;
        }
        prev = b.hash;
        next += 1;
    }
    ChainStatus::Ok
}

/// Newline-delimited JSON, one block per line, fields in declaration order.
pub fn export_ndjson(blocks: &[Block]) -> String {
    let mut out = String::new();
    for b in blocks {
        out.push_str(&serde_json::to_string(b).expect("block serialises"));
        out.push('\n');
    }
    out
}

pub fn import_ndjson(text: &str) -> Result<Vec<Block>, LedgerError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| LedgerError::Import { line: i + 1, msg: e.to_string() }))
        .collect()
}

// ---------------------------------------------------------------------------
// ledger

/// Emitted once per participant when a block is delivered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BroadcastEvent {
    pub participant: String,
    pub height: u64,
    pub hash: Digest,
}

#[derive(Debug, Clone)]
pub struct Ledger {
    blocks: Vec<Block>,
    mempool: Vec<Transaction>,
    seen: HashSet<Digest>,
    sealers: Vec<String>,
    participants: BTreeMap<String, Vec<Block>>,
    events: Vec<BroadcastEvent>,
}

impl Ledger {
    pub fn new(sealers: Vec<String>) -> Result<Self, LedgerError> {
        if sealers.is_empty() {
            return Err(LedgerError::NoSealers);
        }
        Ok(Self {
            blocks: vec![Block::genesis()],
            mempool: Vec::new(),
            seen: HashSet::new(),
            sealers,
            participants: BTreeMap::new(),
            events: Vec::new(),
        })
    }

    /// Registers a participant; it receives a copy of the chain so far.
    pub fn register_participant(&mut self, name: impl Into<String>) {
        let chain = self.blocks.clone();
        self.participants.entry(name.into()).or_insert(chain);
    }

    pub fn submit(&mut self, tx: Transaction) -> Result<Digest, LedgerError> {
        tx.verify()?;
        if !self.seen.insert(tx.tx_id) {
            return Err(LedgerError::Duplicate(tx.tx_id));
        }
        let id = tx.tx_id;
        self.mempool.push(tx);
        Ok(id)
    }

    /// Seals all pending transactions, in submission order, into the next
    /// block and delivers it to every participant.
    pub fn seal_block(&mut self) -> Block {
        let height = self.blocks.len() as u64;
        let prev = self.blocks.last().expect("genesis present").hash;
        let sealer = self.sealers[(height as usize - 1) % self.sealers.len()].clone();
        let mut block = Block {
            height,
            previous_hash: prev,
            sealer,
            transactions: std::mem::take(&mut self.mempool),
            hash: Digest::ZERO,
        };
        block.hash = block.compute_hash();
        for (name, view) in self.participants.iter_mut() {
            view.push(block.clone());
            self.events.push(BroadcastEvent { participant: name.clone(), height, hash: block.hash });
        }
        self.blocks.push(block.clone());
        block
    }

    pub fn verify_chain(&self) -> ChainStatus {
        verify_blocks(&self.blocks)
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn height(&self) -> u64 {
        self.blocks.len() as u64 - 1
    }

    pub fn pending(&self) -> &[Transaction] {
        &self.mempool
    }

    pub fn participant_view(&self, name: &str) -> Option<&[Block]> {
        self.participants.get(name).map(Vec::as_slice)
    }

    pub fn broadcast_events(&self) -> &[BroadcastEvent] {
        &self.events
    }

    /// Sealed transactions concerning `address`.
    pub fn transactions_for_patient(&self, address: &PatientAddress) -> Vec<&Transaction> {
        self.blocks
            .iter()
            .flat_map(|b| &b.transactions)
            .filter(|tx| decode_method(tx).ok().as_ref().and_then(ContractCall::patient_address) == Some(address))
            .collect()
    }

    pub fn find_transaction(&self, id: &Digest) -> Option<(u64, &Transaction)> {
        self.blocks.iter().find_map(|b| b.transactions.iter().find(|t| &t.tx_id == id).map(|t| (b.height, t)))
    }
}

//! Content-addressed record storage spread over virtual nodes, with a DHT
//! index from patient address to the latest record.
//!
//! Objects are keyed by the SHA-256 of their stored bytes. Placement uses
//! rendezvous hashing: each node scores `sha256(hash || node_id)` and the
//! highest score holds the object. Every fetch re-hashes the bytes it reads,
//! so any out-of-band modification surfaces as [`StorageError::Integrity`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::codec::{CodecError, Digest, Reader, Writer};
use crate::crypto::Ciphertext;
use crate::curve::{CurveError, PiecewiseLinear};
use crate::ledger::PatientAddress;

pub const DEFAULT_NODE_COUNT: usize = 4;
pub const BUNDLED_RETRIEVAL_LATENCY: &str = include_str!("../data/retrieval_latency.csv");
const MANIFEST: &str = "dht.json";
const OBJECT_DIR: &str = "objects";

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("refusing to store a plaintext record for {0}")]
    Plaintext(PatientAddress),
    #[error("no record for {0}")]
    NotFound(String),
    #[error("integrity check failed for object {expected} on {node}")]
    Integrity { expected: ContentHash, actual: ContentHash, node: String },
    #[error("malformed record: {0}")]
    Codec(#[from] CodecError),
    #[error("storage needs at least one node")]
    NoNodes,
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("latency table line {line}: {msg}")]
    LatencyParse { line: usize, msg: String },
    #[error("latency curve for {mode}: {source}")]
    LatencyCurve { mode: LatencyMode, source: CurveError },
    #[error("concurrent user count must be at least 1")]
    NoUsers,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// records

/// Analysed health result produced by an offloaded task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResult {
    pub severity_score: f64,
    #[serde(with = "crate::codec::hex_bytes")]
    pub data: Vec<u8>,
}

impl HealthResult {
    pub fn to_bytes(&self) -> Vec<u8> {
        Writer::new().tag("EDGESHARE-HR1").f64(self.severity_score).bytes(&self.data).finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        r.tag("EDGESHARE-HR1")?;
        let severity_score = r.f64()?;
        let data = r.bytes()?.to_vec();
        r.finish()?;
        Ok(Self { severity_score, data })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RecordBody {
    Encrypted(Ciphertext),
    /// Never accepted by [`CasStorage::store`]; exists so callers can be
    /// refused explicitly rather than by type.
    Plain(HealthResult),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EhrRecord {
    pub address: PatientAddress,
    pub created_tick: u64,
    pub body: RecordBody,
}

impl EhrRecord {
    pub fn encrypted(address: PatientAddress, created_tick: u64, c: Ciphertext) -> Self {
        Self { address, created_tick, body: RecordBody::Encrypted(c) }
    }

    pub fn is_encrypted(&self) -> bool {
        matches!(self.body, RecordBody::Encrypted(_))
    }

    pub fn ciphertext(&self) -> Option<&Ciphertext> {
        match &self.body {
            RecordBody::Encrypted(c) => Some(c),
            RecordBody::Plain(_) => None,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.tag("EDGESHARE-EHR1").str(self.address.area_id()).str(self.address.patient_id()).u64(self.created_tick);
        match &self.body {
            RecordBody::Encrypted(c) => w.u8(1).bytes(&c.to_bytes()),
            RecordBody::Plain(h) => w.u8(0).bytes(&h.to_bytes()),
        };
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        r.tag("EDGESHARE-EHR1")?;
        let area = r.str()?;
        let patient = r.str()?;
        let address = PatientAddress::new(area, patient).map_err(|e| CodecError::Invalid(e.to_string()))?;
        let created_tick = r.u64()?;
        let body = match r.u8()? {
            1 => RecordBody::Encrypted(
                Ciphertext::from_bytes(r.bytes()?).map_err(|e| CodecError::Invalid(e.to_string()))?,
            ),
            0 => RecordBody::Plain(HealthResult::from_bytes(r.bytes()?)?),
            b => return Err(CodecError::Invalid(format!("record flag {b}"))),
        };
        r.finish()?;
        Ok(Self { address, created_tick, body })
    }
}

/// Hash of an object's stored bytes.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContentHash(pub Digest);

impl ContentHash {
    pub fn of(bytes: &[u8]) -> Self {
        Self(Digest::of(bytes))
    }
}

impl fmt::Display for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Debug for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContentHash({})", self.0)
    }
}

impl FromStr for ContentHash {
    type Err = CodecError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Digest::from_hex(s).map(Self)
    }
}

// ---------------------------------------------------------------------------
// nodes and DHT

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DhtEntry {
    pub hash: ContentHash,
    pub node: usize,
    pub live: bool,
}

#[derive(Debug, Clone, Default)]
struct Node {
    id: String,
    objects: BTreeMap<ContentHash, Vec<u8>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    tick: u64,
    nodes: Vec<String>,
    placements: BTreeMap<ContentHash, usize>,
    dht: BTreeMap<PatientAddress, DhtEntry>,
    gc_queue: Vec<(u64, ContentHash)>,
}

/// Virtual storage nodes plus the address index. Single writer per tick;
/// fetches take `&self`.
#[derive(Debug, Clone)]
pub struct CasStorage {
    nodes: Vec<Node>,
    dht: BTreeMap<PatientAddress, DhtEntry>,
    tick: u64,
    /// `(collect_at_tick, hash)` for tombstoned objects.
    gc_queue: Vec<(u64, ContentHash)>,
}

impl Default for CasStorage {
    fn default() -> Self {
        Self::new(DEFAULT_NODE_COUNT).expect("default node count is positive")
    }
}

impl CasStorage {
    pub fn new(node_count: usize) -> Result<Self, StorageError> {
        if node_count == 0 {
            return Err(StorageError::NoNodes);
        }
        let nodes = (0..node_count).map(|i| Node { id: format!("node-{i}"), ..Node::default() }).collect();
        Ok(Self { nodes, dht: BTreeMap::new(), tick: 0, gc_queue: Vec::new() })
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(|n| n.id.as_str())
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    /// Rendezvous placement: highest `sha256(hash || node_id)` wins.
    pub fn place(&self, hash: &ContentHash) -> usize {
        rendezvous(hash, self.node_ids())
    }

    pub fn store(&mut self, record: &EhrRecord) -> Result<ContentHash, StorageError> {
        if !record.is_encrypted() {
            return Err(StorageError::Plaintext(record.address.clone()));
        }
        let bytes = record.to_bytes();
        let hash = ContentHash::of(&bytes);
        let node = self.place(&hash);
        self.nodes[node].objects.entry(hash).or_insert(bytes);
        self.gc_queue.retain(|(_, h)| *h != hash);
        self.dht.insert(record.address.clone(), DhtEntry { hash, node, live: true });
        Ok(hash)
    }

    pub fn lookup(&self, address: &PatientAddress) -> Option<&DhtEntry> {
        self.dht.get(address).filter(|e| e.live)
    }

    pub fn fetch(&self, address: &PatientAddress) -> Result<EhrRecord, StorageError> {
        let entry = self.lookup(address).ok_or_else(|| StorageError::NotFound(address.to_string()))?;
        let bytes = self.read_verified(&entry.hash, entry.node)?;
        Ok(EhrRecord::from_bytes(bytes)?)
    }

    pub fn fetch_by_hash(&self, hash: &ContentHash) -> Result<&[u8], StorageError> {
        self.read_verified(hash, self.place(hash))
    }

    fn read_verified(&self, hash: &ContentHash, node: usize) -> Result<&[u8], StorageError> {
        let n = &self.nodes[node];
        let bytes = n.objects.get(hash).ok_or_else(|| StorageError::NotFound(hash.to_string()))?;
        let actual = ContentHash::of(bytes);
        if actual != *hash {
            return Err(StorageError::Integrity { expected: *hash, actual, node: n.id.clone() });
        }
        Ok(bytes)
    }

    /// Mutable access to stored bytes, bypassing the hash. Fault injection
    /// for tamper experiments.
    pub fn raw_object_mut(&mut self, hash: &ContentHash) -> Option<&mut Vec<u8>> {
        let node = self.place(hash);
        self.nodes[node].objects.get_mut(hash)
    }

    /// Marks the address as deleted. Its bytes are collected on the next
    /// [`CasStorage::advance_tick`] unless re-stored first.
    pub fn tombstone(&mut self, address: &PatientAddress) -> Result<ContentHash, StorageError> {
        let entry =
            self.dht.get_mut(address).filter(|e| e.live).ok_or_else(|| StorageError::NotFound(address.to_string()))?;
        entry.live = false;
        let hash = entry.hash;
        self.gc_queue.push((self.tick + 1, hash));
        Ok(hash)
    }

    pub fn advance_tick(&mut self) -> u64 {
        self.tick += 1;
        let live: BTreeSet<ContentHash> = self.dht.values().filter(|e| e.live).map(|e| e.hash).collect();
        let (due, later): (Vec<_>, Vec<_>) = self.gc_queue.drain(..).partition(|(t, _)| *t <= self.tick);
        self.gc_queue = later;
        for (_, hash) in due {
            if !live.contains(&hash) {
                let node = self.place(&hash);
                self.nodes[node].objects.remove(&hash);
            }
        }
        self.tick
    }

    /// Every stored object with the id of the node holding it.
    pub fn placements(&self) -> Vec<(ContentHash, &str)> {
        self.nodes.iter().flat_map(|n| n.objects.keys().map(move |h| (*h, n.id.as_str()))).collect()
    }

    pub fn object_count(&self) -> usize {
        self.nodes.iter().map(|n| n.objects.len()).sum()
    }

    pub fn addresses(&self) -> impl Iterator<Item = (&PatientAddress, &DhtEntry)> {
        self.dht.iter()
    }

    /// Writes `objects/<hash>.bin` files and a `dht.json` manifest.
    pub fn save(&self, dir: &Path) -> Result<(), StorageError> {
        let objects = dir.join(OBJECT_DIR);
        fs::create_dir_all(&objects)?;
        let mut placements = BTreeMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            for (h, bytes) in &n.objects {
                fs::write(objects.join(format!("{h}.bin")), bytes)?;
                placements.insert(*h, i);
            }
        }
        let manifest = Manifest {
            version: 1,
            tick: self.tick,
            nodes: self.nodes.iter().map(|n| n.id.clone()).collect(),
            placements,
            dht: self.dht.clone(),
            gc_queue: self.gc_queue.clone(),
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| StorageError::Manifest(e.to_string()))?;
        fs::write(dir.join(MANIFEST), text + "\n")?;
        Ok(())
    }

    /// Loads without verifying object hashes; corruption on disk is
    /// reported by the next fetch.
    pub fn load(dir: &Path) -> Result<Self, StorageError> {
        let text = fs::read_to_string(dir.join(MANIFEST))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| StorageError::Manifest(e.to_string()))?;
        if m.version != 1 {
            return Err(StorageError::Manifest(format!("unsupported version {}", m.version)));
        }
        if m.nodes.is_empty() {
            return Err(StorageError::NoNodes);
        }
        let mut nodes: Vec<Node> = m.nodes.into_iter().map(|id| Node { id, ..Node::default() }).collect();
        for (h, i) in m.placements {
            let node =
                nodes.get_mut(i).ok_or_else(|| StorageError::Manifest(format!("object {h} on unknown node {i}")))?;
            let bytes = fs::read(dir.join(OBJECT_DIR).join(format!("{h}.bin")))?;
            node.objects.insert(h, bytes);
        }
        let s = Self { nodes, dht: m.dht, tick: m.tick, gc_queue: m.gc_queue };
        for (h, i) in s.placements_indexed() {
            if s.place(&h) != i {
                return Err(StorageError::Manifest(format!("object {h} is not on its rendezvous node")));
            }
        }
        Ok(s)
    }

    fn placements_indexed(&self) -> Vec<(ContentHash, usize)> {
        self.nodes.iter().enumerate().flat_map(|(i, n)| n.objects.keys().map(move |h| (*h, i))).collect()
    }
}

fn rendezvous<'a>(hash: &ContentHash, nodes: impl Iterator<Item = &'a str>) -> usize {
    let mut best: Option<([u8; 32], usize)> = None;
    for (i, id) in nodes.enumerate() {
        let score: [u8; 32] = Sha256::new().chain_update(hash.0 .0).chain_update(id.as_bytes()).finalize().into();
        if best.is_none_or(|(b, _)| score > b) {
            best = Some((score, i));
        }
    }
    best.expect("at least one node").1
}

// ---------------------------------------------------------------------------
// retrieval latency

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatencyMode {
    Centralized,
    Distributed,
}

impl LatencyMode {
    pub const ALL: [LatencyMode; 2] = [LatencyMode::Centralized, LatencyMode::Distributed];

    pub fn as_str(&self) -> &'static str {
        match self {
            LatencyMode::Centralized => "centralized",
            LatencyMode::Distributed => "distributed",
        }
    }
}

impl fmt::Display for LatencyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LatencyMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "centralized" => Ok(LatencyMode::Centralized),
            "distributed" => Ok(LatencyMode::Distributed),
            other => Err(format!("unknown latency mode `{other}`")),
        }
    }
}

/// Retrieval time against concurrent users, piecewise-linear through the
/// measured points and extended along the end segments.
#[derive(Debug, Clone)]
pub struct RetrievalLatencyModel {
    centralized: PiecewiseLinear,
    distributed: PiecewiseLinear,
}

impl RetrievalLatencyModel {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_RETRIEVAL_LATENCY).expect("bundled latency table is well-formed")
    }

    pub fn load(path: &Path) -> Result<Self, StorageError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, StorageError> {
        let mut pts: BTreeMap<LatencyMode, Vec<(f64, f64)>> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("mode,") {
                continue;
            }
            let err = |msg: String| StorageError::LatencyParse { line: i + 1, msg };
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 3 {
                return Err(err(format!("expected 3 columns, got {}", cols.len())));
            }
            let mode: LatencyMode = cols[0].parse().map_err(err)?;
            let n: u32 = cols[1].parse().map_err(|e| err(format!("users: {e}")))?;
            let s: f64 = cols[2].parse().map_err(|e| err(format!("seconds: {e}")))?;
            pts.entry(mode).or_default().push((f64::from(n), s));
        }
        let curve = |mode| {
            PiecewiseLinear::new(pts.get(&mode).cloned().unwrap_or_default())
                .map_err(|source| StorageError::LatencyCurve { mode, source })
        };
        Ok(Self { centralized: curve(LatencyMode::Centralized)?, distributed: curve(LatencyMode::Distributed)? })
    }

    fn curve(&self, mode: LatencyMode) -> &PiecewiseLinear {
        match mode {
            LatencyMode::Centralized => &self.centralized,
            LatencyMode::Distributed => &self.distributed,
        }
    }

    pub fn retrieval_latency(&self, n_users: u32, mode: LatencyMode) -> Result<f64, StorageError> {
        if n_users == 0 {
            return Err(StorageError::NoUsers);
        }
        Ok(self.curve(mode).eval(f64::from(n_users)))
    }

    /// Measured user counts for `mode`.
    pub fn anchors(&self, mode: LatencyMode) -> Vec<(u32, f64)> {
        self.curve(mode).anchors().map(|(x, y)| (x as u32, y)).collect()
    }

    /// Fractional time saved by the distributed mode.
    pub fn savings(&self, n_users: u32) -> Result<f64, StorageError> {
        let c = self.retrieval_latency(n_users, LatencyMode::Centralized)?;
        let d = self.retrieval_latency(n_users, LatencyMode::Distributed)?;
        Ok((c - d) / c)
    }
}

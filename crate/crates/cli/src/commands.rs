//! Single-operation subcommands: one request, one store or fetch, and
//! integrity inspection of persisted chains and stores.

use std::fs;
use std::path::Path;

use edgeshare_core::access::storage_key;
use edgeshare_core::crypto::{self, Cipher};
use edgeshare_core::ledger::{import_ndjson, verify_blocks, ChainStatus, Identity};
use edgeshare_core::storage::StorageError;
use edgeshare_core::{AccessOutcome, AccessRequest, CasStorage, ContentHash, EhrRecord, HealthResult, PatientAddress};
use serde::Serialize;

use crate::config::{ConfigError, ScenarioConfig};
use crate::experiment::{build_population, ExperimentError};
use crate::report::MetricsReport;

/// Who signs a one-off request.
pub enum Requester<'a> {
    /// A user from the scenario, identity derived from the seed.
    Named(&'a str),
    /// Hex secret key read from a file.
    KeyFile(&'a Path),
}

/// Builds the configured population and runs one access request through it.
pub fn request(
    cfg: &ScenarioConfig,
    requester: Requester<'_>,
    address: PatientAddress,
    device_id: &str,
) -> Result<AccessOutcome, ExperimentError> {
    let mut scratch = MetricsReport::default();
    let mut pop = build_population(cfg, &mut scratch)?;
    let id = match requester {
        Requester::Named(name) => {
            pop.identities.get(name).cloned().ok_or_else(|| ConfigError::Invalid(format!("unknown user `{name}`")))?
        }
        Requester::KeyFile(path) => {
            let text =
                fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_owned(), source })?;
            Identity::from_secret_hex("key-file", &text)?
        }
    };
    let nonce = pop.network.next_nonce(&id.public_key());
    let tx = AccessRequest::new(&id, address, device_id, pop.network.tick()).sign(&id, nonce);
    Ok(pop.network.process_request(&tx)?)
}

fn open_store(dir: &Path, nodes: usize) -> Result<CasStorage, StorageError> {
    if dir.join("dht.json").exists() {
        CasStorage::load(dir)
    } else {
        CasStorage::new(nodes)
    }
}

#[derive(Debug, Serialize)]
pub struct StoreReceipt {
    pub address: PatientAddress,
    pub hash: ContentHash,
    pub node: String,
}

/// Encrypts a health result under the seed's storage key and adds it to
/// the store in `dir`, creating the store if needed.
pub fn store(
    cfg: &ScenarioConfig,
    dir: &Path,
    address: PatientAddress,
    result: &HealthResult,
) -> Result<StoreReceipt, ExperimentError> {
    let mut s = open_store(dir, cfg.sharing.storage_nodes)?;
    // fresh OS nonces: separate invocations must not repeat a nonce
    let c = Cipher::os().encrypt(&result.to_bytes(), &storage_key(cfg.seed));
    let hash = s.store(&EhrRecord::encrypted(address.clone(), s.tick(), c))?;
    let node = s.node_ids().nth(s.place(&hash)).expect("placed on a node").to_owned();
    s.save(dir)?;
    Ok(StoreReceipt { address, hash, node })
}

#[derive(Debug, Serialize)]
pub struct FetchResult {
    pub address: PatientAddress,
    pub hash: ContentHash,
    pub created_tick: u64,
    pub result: HealthResult,
}

pub fn fetch(cfg: &ScenarioConfig, dir: &Path, address: &PatientAddress) -> Result<FetchResult, ExperimentError> {
    let s = CasStorage::load(dir)?;
    let record = s.fetch(address)?;
    let hash = s.lookup(address).expect("fetch succeeded").hash;
    let c = record.ciphertext().ok_or_else(|| StorageError::Plaintext(address.clone()))?;
    let plain = crypto::decrypt(c, &storage_key(cfg.seed)).map_err(edgeshare_core::access::AccessError::from)?;
    let result = HealthResult::from_bytes(&plain).map_err(StorageError::from)?;
    Ok(FetchResult { address: address.clone(), hash, created_tick: record.created_tick, result })
}

#[derive(Debug, Default, Serialize)]
pub struct Inspection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chain_blocks: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chain_corrupt_at: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub store_objects: Option<usize>,
    pub store_failures: Vec<String>,
}

impl Inspection {
    pub fn clean(&self) -> bool {
        self.chain_corrupt_at.is_none() && self.store_failures.is_empty()
    }
}

/// Verifies a chain export and/or every object of a store.
pub fn inspect(chain: Option<&Path>, store_dir: Option<&Path>) -> Result<Inspection, ExperimentError> {
    let mut out = Inspection::default();
    if let Some(path) = chain {
        let text = fs::read_to_string(path).map_err(StorageError::from)?;
        let blocks = import_ndjson(&text)?;
        out.chain_blocks = Some(blocks.len());
        if let ChainStatus::Corrupt { height } = verify_blocks(&blocks) {
            out.chain_corrupt_at = Some(height);
        }
    }
    if let Some(dir) = store_dir {
        let s = CasStorage::load(dir)?;
        let placements = s.placements();
        out.store_objects = Some(placements.len());
        for (hash, node) in placements {
            if let Err(e) = s.fetch_by_hash(&hash) {
                out.store_failures.push(format!("{node}/{hash}: {e}"));
            }
        }
    }
    Ok(out)
}

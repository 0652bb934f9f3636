//! Fixtures shared by the benchmarks.

use edgeshare_core::{
    CasStorage, Cipher, ContentHash, ContractCall, EhrRecord, HealthResult, Identity, KeyMaterial, Ledger,
    PatientAddress, Transaction,
};

/// Ledger with `blocks` sealed blocks of `per_block` signed requests each.
pub fn sealed_ledger(blocks: usize, per_block: usize) -> Ledger {
    let mut l = Ledger::new(vec!["sealer-1".into(), "sealer-2".into()]).expect("non-empty sealers");
    let who = Identity::derive("bench", 1);
    let mut nonce = 0;
    for _ in 0..blocks {
        for _ in 0..per_block {
            l.submit(signed_request(&who, nonce)).expect("fresh nonce");
            nonce += 1;
        }
        l.seal_block();
    }
    l
}

pub fn signed_request(who: &Identity, nonce: u64) -> Transaction {
    let call = ContractCall::DataRequest {
        address: PatientAddress::new("B1", format!("P{nonce}")).expect("valid address"),
        device_id: "bench-device".into(),
    };
    Transaction::new(who, &call, nonce, nonce)
}

/// Encrypted health result of roughly `bytes` payload bytes.
pub fn record(i: usize, bytes: usize, key: &KeyMaterial, cipher: &Cipher) -> EhrRecord {
    let r = HealthResult { severity_score: 0.5, data: vec![(i % 251) as u8; bytes] };
    let address = PatientAddress::new("B1", format!("P{i}")).expect("valid address");
    EhrRecord::encrypted(address, 0, cipher.encrypt(&r.to_bytes(), key))
}

/// Default four-node store holding `n` records.
pub fn filled_store(n: usize, bytes: usize) -> (CasStorage, Vec<ContentHash>) {
    let key = KeyMaterial::derive("bench", 1, 0);
    let cipher = Cipher::seeded(1);
    let mut s = CasStorage::default();
    let hashes = (0..n).map(|i| s.store(&record(i, bytes, &key, &cipher)).expect("encrypted")).collect();
    (s, hashes)
}

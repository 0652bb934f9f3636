//! Authenticated symmetric encryption for task payloads and stored records.
//!
//! AES-GCM with a 128-bit key by default (256-bit also accepted). The key
//! id is bound as associated data, so a ciphertext presented under another
//! key id fails authentication even if the key bytes happen to match.
//!
//! Container layout (all lengths `u32` big-endian):
//!
//! ```text
//! len | key_id (utf-8)
//! len | nonce  (12 bytes)
//! len | tag    (16 bytes)
//! len | encrypted payload
//! ```

use std::fmt;
use std::sync::Mutex;

use aes_gcm::aead::{AeadInPlace, KeyInit};
use aes_gcm::{Aes128Gcm, Aes256Gcm, Nonce, Tag};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::codec::{CodecError, Reader, Writer};
use crate::cost::{self, TaskProfile};

pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("key must be 128 or 256 bits, got {0} bits")]
    KeyLength(usize),
    #[error("ciphertext was sealed under key `{expected}`, not `{got}`")]
    KeyMismatch { expected: String, got: String },
    #[error("authentication failed: ciphertext or tag was modified, or the key is wrong")]
    Authentication,
    #[error("malformed ciphertext container: {0}")]
    Malformed(#[from] CodecError),
}

/// Symmetric key with an identifier. The key bytes are never printed and
/// have no serialised form.
#[derive(Clone, PartialEq, Eq)]
pub struct KeyMaterial {
    key_id: String,
    bytes: Vec<u8>,
    created_tick: u64,
}

impl KeyMaterial {
    pub fn new(key_id: impl Into<String>, bytes: Vec<u8>, created_tick: u64) -> Result<Self, CryptoError> {
        if bytes.len() != 16 && bytes.len() != 32 {
            return Err(CryptoError::KeyLength(bytes.len() * 8));
        }
        Ok(Self { key_id: key_id.into(), bytes, created_tick })
    }

    /// Deterministic 128-bit key derived from a scenario seed and a label.
    pub fn derive(key_id: impl Into<String>, seed: u64, created_tick: u64) -> Self {
        let key_id = key_id.into();
        let mut h = Sha256::new();
        h.update(b"edgeshare-key-v1");
        h.update(seed.to_be_bytes());
        h.update(key_id.as_bytes());
        let bytes = h.finalize()[..16].to_vec();
        Self { key_id, bytes, created_tick }
    }

    /// Fresh random 128-bit key from OS entropy.
    pub fn generate(key_id: impl Into<String>, created_tick: u64) -> Self {
        let mut bytes = vec![0u8; 16];
        rand::rngs::OsRng.fill_bytes(&mut bytes);
        Self { key_id: key_id.into(), bytes, created_tick }
    }

    pub fn key_id(&self) -> &str {
        &self.key_id
    }

    pub fn bits(&self) -> usize {
        self.bytes.len() * 8
    }

    pub fn created_tick(&self) -> u64 {
        self.created_tick
    }
}

impl fmt::Debug for KeyMaterial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyMaterial")
            .field("key_id", &self.key_id)
            .field("bits", &self.bits())
            .field("created_tick", &self.created_tick)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext {
    pub key_id: String,
    pub nonce: [u8; NONCE_LEN],
    pub tag: [u8; TAG_LEN],
    pub payload: Vec<u8>,
}

impl Ciphertext {
    pub fn to_bytes(&self) -> Vec<u8> {
        Writer::new().str(&self.key_id).bytes(&self.nonce).bytes(&self.tag).bytes(&self.payload).finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut r = Reader::new(bytes);
        let key_id = r.str()?.to_owned();
        let nonce = r.bytes()?.try_into().map_err(|_| CodecError::Invalid("nonce must be 12 bytes".into()))?;
        let tag = r.bytes()?.try_into().map_err(|_| CodecError::Invalid("tag must be 16 bytes".into()))?;
        let payload = r.bytes()?.to_vec();
        r.finish()?;
        Ok(Self { key_id, nonce, tag, payload })
    }
}

/// Source of per-message nonces. Implementations must be safe to share
/// between threads.
pub trait NonceSource: Send + Sync {
    fn next_nonce(&self) -> [u8; NONCE_LEN];
}

/// OS entropy.
#[derive(Debug, Default, Clone, Copy)]
pub struct OsNonces;

impl NonceSource for OsNonces {
    fn next_nonce(&self) -> [u8; NONCE_LEN] {
        let mut n = [0u8; NONCE_LEN];
        rand::rngs::OsRng.fill_bytes(&mut n);
        n
    }
}

/// Reproducible nonce stream for deterministic runs and golden tests.
#[derive(Debug)]
pub struct SeededNonces(Mutex<ChaCha20Rng>);

impl SeededNonces {
    pub fn new(seed: u64) -> Self {
        Self(Mutex::new(ChaCha20Rng::seed_from_u64(seed)))
    }
}

impl NonceSource for SeededNonces {
    fn next_nonce(&self) -> [u8; NONCE_LEN] {
        let mut n = [0u8; NONCE_LEN];
        self.0.lock().expect("nonce generator poisoned").fill_bytes(&mut n);
        n
    }
}

/// Encrypts and decrypts with a configurable nonce source.
pub struct Cipher {
    nonces: Box<dyn NonceSource>,
}

impl fmt::Debug for Cipher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Cipher").finish_non_exhaustive()
    }
}

impl Cipher {
    pub fn new(nonces: impl NonceSource + 'static) -> Self {
        Self { nonces: Box::new(nonces) }
    }

    pub fn seeded(seed: u64) -> Self {
        Self::new(SeededNonces::new(seed))
    }

    pub fn os() -> Self {
        Self::new(OsNonces)
    }

    pub fn encrypt(&self, payload: &[u8], key: &KeyMaterial) -> Ciphertext {
        let nonce = self.nonces.next_nonce();
        let mut buf = payload.to_vec();
        let aad = key.key_id.as_bytes();
        let n = Nonce::from_slice(&nonce);
        let tag = match key.bytes.len() {
            16 => {
                Aes128Gcm::new_from_slice(&key.bytes).expect("16-byte key").encrypt_in_place_detached(n, aad, &mut buf)
            }
            _ => {
                Aes256Gcm::new_from_slice(&key.bytes).expect("32-byte key").encrypt_in_place_detached(n, aad, &mut buf)
            }
        }
        .expect("payload within AES-GCM length limit");
        Ciphertext { key_id: key.key_id.clone(), nonce, tag: tag.into(), payload: buf }
    }

    pub fn decrypt(&self, c: &Ciphertext, key: &KeyMaterial) -> Result<Vec<u8>, CryptoError> {
        decrypt(c, key)
    }
}

/// Decryption needs no nonce source, so it is also available standalone.
pub fn decrypt(c: &Ciphertext, key: &KeyMaterial) -> Result<Vec<u8>, CryptoError> {
    if c.key_id != key.key_id {
        return Err(CryptoError::KeyMismatch { expected: c.key_id.clone(), got: key.key_id.clone() });
    }
    let mut buf = c.payload.clone();
    let aad = key.key_id.as_bytes();
    let n = Nonce::from_slice(&c.nonce);
    let tag = Tag::from_slice(&c.tag);
    match key.bytes.len() {
        16 => {
            Aes128Gcm::new_from_slice(&key.bytes).expect("16-byte key").decrypt_in_place_detached(n, aad, &mut buf, tag)
        }
        _ => {
            Aes256Gcm::new_from_slice(&key.bytes).expect("32-byte key").decrypt_in_place_detached(n, aad, &mut buf, tag)
        }
    }
    .map_err(|_| CryptoError::Authentication)?;
    Ok(buf)
}

/// Modelled on-device encryption time charged to the offload cost. The
/// simulator bills this, not wall-clock time of [`Cipher::encrypt`].
pub fn modeled_encryption_seconds(p: &TaskProfile) -> f64 {
    cost::encryption_time(p)
}

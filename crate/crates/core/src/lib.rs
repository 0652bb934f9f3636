//! Simulation core for privacy-aware edge offloading and ledger-backed
//! health record sharing.
//!
//! The crate is split along the two halves of the system:
//!
//! * offloading: [`cost`] (per-task time/energy/memory model and the
//!   constrained objective), [`calibration`] (anchoring the model to measured
//!   curves) and [`optimizer`] (binary PSO plus an exhaustive oracle);
//! * sharing: [`crypto`] (authenticated payload encryption), [`ledger`]
//!   (signed, hash-chained transactions), [`contract`] (policy state machine
//!   with gas accounting), [`storage`] (content-addressed nodes with a DHT
//!   index) and [`access`] (the end-to-end request protocol).
//!
//! Everything is deterministic under a seed; no wall-clock time is read.

pub mod access;
pub mod calibration;
pub mod codec;
pub mod contract;
pub mod cost;
pub mod crypto;
pub mod curve;
pub mod ledger;
pub mod optimizer;
pub mod storage;

pub use access::{AccessOutcome, AccessRequest, SharingNetwork, Verdict};
pub use calibration::{Calibration, CalibrationMode, DeviceConstants, Fig4Anchors, Metric, Scheme};
pub use codec::Digest;
pub use contract::{AccessContract, GasReceipt, GasSchedule, PolicyEntry, Role};
pub use cost::{ConstraintBounds, ConstraintReport, CostBreakdown, CostTriple, CostWeights, TaskProfile};
pub use crypto::{Cipher, Ciphertext, KeyMaterial};
pub use ledger::{
    verify_blocks, verify_extension, Block, ChainStatus, ContractCall, Identity, Ledger, PatientAddress, PublicKey,
    Transaction,
};
pub use optimizer::{brute_force_solve, solve_pso, OffloadDecision, PsoConfig};
pub use storage::{CasStorage, ContentHash, EhrRecord, HealthResult, LatencyMode, RetrievalLatencyModel};

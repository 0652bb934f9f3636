//! Access-control contract: policy registry, role checks and gas metering.
//!
//! Gas is accounted from a fixed per-function schedule; no bytecode runs.
//! Monetary values use exact decimal arithmetic:
//!
//! ```text
//! ether_exact   = gas × gas_price
//! ether_display = ether_exact truncated to the function's display decimals
//! usd           = ether_display × usd_per_ether
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rust_decimal::{Decimal, RoundingStrategy};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{PatientAddress, PublicKey};

pub const BUNDLED_GAS_SCHEDULE: &str = include_str!("../data/gas_schedule.toml");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContractError {
    #[error("{caller:?} is not allowed to call {function}")]
    Unauthorized { caller: PublicKey, function: ContractFunction },
    #[error("public key {0:?} is already registered")]
    Duplicate(PublicKey),
    #[error("public key {0:?} is not registered")]
    UnknownUser(PublicKey),
    #[error("gas schedule: {0}")]
    Schedule(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Patient,
    Doctor,
    Caregiver,
    Admin,
    EhrsManager,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Patient => "patient",
            Role::Doctor => "doctor",
            Role::Caregiver => "caregiver",
            Role::Admin => "admin",
            Role::EhrsManager => "ehrs_manager",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "patient" => Ok(Role::Patient),
            "doctor" => Ok(Role::Doctor),
            "caregiver" => Ok(Role::Caregiver),
            "admin" => Ok(Role::Admin),
            "ehrs_manager" => Ok(Role::EhrsManager),
            other => Err(format!("unknown role `{other}`")),
        }
    }
}

/// The five metered contract functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ContractFunction {
    AddUser,
    DeleteUser,
    PolicyList,
    #[serde(rename = "RetrieveEHRs")]
    RetrieveEhrs,
    Penalty,
}

impl ContractFunction {
    pub const ALL: [ContractFunction; 5] = [
        ContractFunction::AddUser,
        ContractFunction::DeleteUser,
        ContractFunction::PolicyList,
        ContractFunction::RetrieveEhrs,
        ContractFunction::Penalty,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ContractFunction::AddUser => "AddUser",
            ContractFunction::DeleteUser => "DeleteUser",
            ContractFunction::PolicyList => "PolicyList",
            ContractFunction::RetrieveEhrs => "RetrieveEHRs",
            ContractFunction::Penalty => "Penalty",
        }
    }
}

impl fmt::Display for ContractFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GasEntry {
    pub name: ContractFunction,
    /// Row label used in reports.
    pub label: String,
    pub gas: u64,
    pub ether_decimals: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GasSchedule {
    pub gas_price_ether: Decimal,
    pub usd_per_ether: Decimal,
    #[serde(rename = "function")]
    pub functions: Vec<GasEntry>,
}

impl GasSchedule {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_GAS_SCHEDULE).expect("bundled gas schedule is well-formed")
    }

    pub fn load(path: &Path) -> Result<Self, ContractError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ContractError::Schedule(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ContractError> {
        let s: GasSchedule = toml::from_str(text).map_err(|e| ContractError::Schedule(e.to_string()))?;
        for f in ContractFunction::ALL {
            if s.functions.iter().filter(|e| e.name == f).count() != 1 {
                return Err(ContractError::Schedule(format!("need exactly one entry for {f}")));
            }
        }
        if s.gas_price_ether <= Decimal::ZERO || s.usd_per_ether <= Decimal::ZERO {
            return Err(ContractError::Schedule("exchange rates must be positive".into()));
        }
        Ok(s)
    }

    pub fn entry(&self, f: ContractFunction) -> &GasEntry {
        self.functions.iter().find(|e| e.name == f).expect("validated at load")
    }

    pub fn receipt(&self, f: ContractFunction) -> GasReceipt {
        let e = self.entry(f);
        let ether_exact = Decimal::from(e.gas) * self.gas_price_ether;
        let ether = ether_exact.round_dp_with_strategy(e.ether_decimals, RoundingStrategy::ToZero).normalize();
        GasReceipt {
            function: f,
            label: e.label.clone(),
            gas_used: e.gas,
            ether_exact: ether_exact.normalize(),
            ether,
            usd: (ether * self.usd_per_ether).normalize(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GasReceipt {
    pub function: ContractFunction,
    pub label: String,
    pub gas_used: u64,
    pub ether_exact: Decimal,
    /// Display-rounded ether, the basis for `usd`.
    pub ether: Decimal,
    pub usd: Decimal,
}

/// Summed receipts of a session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GasTotal {
    pub gas_used: u64,
    pub ether: Decimal,
    pub usd: Decimal,
}

pub fn total(receipts: &[GasReceipt], usd_per_ether: Decimal) -> GasTotal {
    let gas_used = receipts.iter().map(|r| r.gas_used).sum();
    let ether = receipts.iter().map(|r| r.ether).sum::<Decimal>().normalize();
    GasTotal { gas_used, ether, usd: (ether * usd_per_ether).normalize() }
}

/// Patients and devices a user is allowed to act for.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bindings {
    pub patients: BTreeSet<PatientAddress>,
    pub devices: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyEntry {
    pub public_key: PublicKey,
    pub role: Role,
    pub bindings: Bindings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Grant,
    Deny,
}

/// Policy registry with admin and EHRs-manager authorities.
#[derive(Debug, Clone)]
pub struct AccessContract {
    admin: PublicKey,
    manager: PublicKey,
    schedule: GasSchedule,
    policies: BTreeMap<PublicKey, PolicyEntry>,
    receipts: Vec<GasReceipt>,
}

impl AccessContract {
    pub fn new(admin: PublicKey, manager: PublicKey, schedule: GasSchedule) -> Self {
        Self { admin, manager, schedule, policies: BTreeMap::new(), receipts: Vec::new() }
    }

    pub fn admin(&self) -> PublicKey {
        self.admin
    }

    pub fn manager(&self) -> PublicKey {
        self.manager
    }

    pub fn schedule(&self) -> &GasSchedule {
        &self.schedule
    }

    fn require(&self, caller: &PublicKey, allowed: &[PublicKey], f: ContractFunction) -> Result<(), ContractError> {
        if allowed.contains(caller) {
            Ok(())
        } else {
            Err(ContractError::Unauthorized { caller: *caller, function: f })
        }
    }

    fn charge(&mut self, f: ContractFunction) -> GasReceipt {
        let r = self.schedule.receipt(f);
        self.receipts.push(r.clone());
        r
    }

    pub fn add_user(&mut self, caller: &PublicKey, pk: PublicKey, role: Role) -> Result<GasReceipt, ContractError> {
        self.require(caller, &[self.admin], ContractFunction::AddUser)?;
        if self.policies.contains_key(&pk) {
            return Err(ContractError::Duplicate(pk));
        }
        self.policies.insert(pk, PolicyEntry { public_key: pk, role, bindings: Bindings::default() });
        Ok(self.charge(ContractFunction::AddUser))
    }

    /// Records patient/device bindings for a registered user. Admin-only
    /// policy update; not separately metered.
    pub fn bind(&mut self, caller: &PublicKey, pk: &PublicKey, bindings: Bindings) -> Result<(), ContractError> {
        self.require(caller, &[self.admin], ContractFunction::AddUser)?;
        let entry = self.policies.get_mut(pk).ok_or(ContractError::UnknownUser(*pk))?;
        entry.bindings.patients.extend(bindings.patients);
        entry.bindings.devices.extend(bindings.devices);
        Ok(())
    }

    /// Removes a user. The returned entry lets the caller purge the user's
    /// stored records.
    pub fn delete_user(
        &mut self,
        caller: &PublicKey,
        pk: &PublicKey,
    ) -> Result<(PolicyEntry, GasReceipt), ContractError> {
        self.require(caller, &[self.admin], ContractFunction::DeleteUser)?;
        let entry = self.policies.remove(pk).ok_or(ContractError::UnknownUser(*pk))?;
        Ok((entry, self.charge(ContractFunction::DeleteUser)))
    }

    pub fn policy_list(&mut self, caller: &PublicKey, pk: &PublicKey) -> Result<(bool, GasReceipt), ContractError> {
        self.require(caller, &[self.admin, self.manager], ContractFunction::PolicyList)?;
        let present = self.policies.contains_key(pk);
        Ok((present, self.charge(ContractFunction::PolicyList)))
    }

    /// Grants iff `pk` is registered, bound to `address` and bound to
    /// `device_id`. Gas is charged on the grant path only; denials are
    /// billed through [`AccessContract::penalty`].
    pub fn retrieve_ehrs(
        &mut self,
        caller: &PublicKey,
        pk: &PublicKey,
        address: &PatientAddress,
        device_id: &str,
    ) -> Result<(Decision, Option<GasReceipt>), ContractError> {
        self.require(caller, &[self.manager], ContractFunction::RetrieveEhrs)?;
        let granted = self
            .policies
            .get(pk)
            .is_some_and(|e| e.bindings.patients.contains(address) && e.bindings.devices.contains(device_id));
        if granted {
            Ok((Decision::Grant, Some(self.charge(ContractFunction::RetrieveEhrs))))
        } else {
            Ok((Decision::Deny, None))
        }
    }

    pub fn penalty(&mut self, caller: &PublicKey, _pk: &PublicKey, _action: &str) -> Result<GasReceipt, ContractError> {
        self.require(caller, &[self.admin, self.manager], ContractFunction::Penalty)?;
        Ok(self.charge(ContractFunction::Penalty))
    }

    pub fn policy(&self, pk: &PublicKey) -> Option<&PolicyEntry> {
        self.policies.get(pk)
    }

    pub fn policies(&self) -> impl Iterator<Item = &PolicyEntry> {
        self.policies.values()
    }

    pub fn receipts(&self) -> &[GasReceipt] {
        &self.receipts
    }

    pub fn session_total(&self) -> GasTotal {
        total(&self.receipts, self.schedule.usd_per_ether)
    }
}

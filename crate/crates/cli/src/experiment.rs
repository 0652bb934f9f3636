//! Offloading and sharing scenarios driven from a [`ScenarioConfig`].

use std::collections::BTreeMap;

use edgeshare_core::access::{AccessError, SharingNetwork};
use edgeshare_core::calibration::CalibrationError;
use edgeshare_core::contract::{self, Bindings, ContractError, ContractFunction, GasTotal};
use edgeshare_core::cost::{self, CostError};
use edgeshare_core::ledger::{ChainStatus, Identity, LedgerError};
use edgeshare_core::optimizer::{OptimizerError, BRUTE_FORCE_MAX_TASKS};
use edgeshare_core::storage::StorageError;
use edgeshare_core::{
    brute_force_solve, solve_pso, AccessContract, AccessRequest, Calibration, CasStorage, ConstraintBounds,
    Fig4Anchors, GasReceipt, GasSchedule, HealthResult, Metric, OffloadDecision, PsoConfig, PublicKey,
    RetrievalLatencyModel, Role, Scheme, TaskProfile,
};
use thiserror::Error;

use crate::config::{ConfigError, ScenarioConfig};
use crate::report::{
    AccessLogEntry, CurveFitRow, DecisionReport, DecisionRow, LatencyRow, MetricsReport, ProfileRow, SchemeCost,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Access(#[from] AccessError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("chain failed verification at height {0}")]
    Chain(u64),
}

impl ExperimentError {
    /// True when the failure is a detected integrity violation.
    pub fn is_integrity(&self) -> bool {
        matches!(
            self,
            ExperimentError::Storage(StorageError::Integrity { .. })
                | ExperimentError::Access(AccessError::Storage(StorageError::Integrity { .. }))
                | ExperimentError::Chain(_)
        )
    }
}

pub fn calibrate(cfg: &ScenarioConfig) -> Result<Calibration, ExperimentError> {
    let o = &cfg.offload;
    let anchors = match &o.anchors {
        Some(p) => Fig4Anchors::load(p)?,
        None => Fig4Anchors::bundled(),
    };
    Ok(Calibration::fit(&anchors, o.calibration, o.device)?)
}

/// Fitted line per curve plus the backed-out cloud and edge profiles.
pub fn calibration_report(
    cfg: &ScenarioConfig,
    cal: &Calibration,
    report: &mut MetricsReport,
) -> Result<(), ExperimentError> {
    report.log.line(format_args!("calibration mode={}", cal.mode()));
    for scheme in Scheme::ALL {
        for metric in Metric::ALL {
            let f = cal.affine_fit(scheme, metric);
            report.log.line(format_args!(
                "fit scheme={scheme} metric={metric} intercept={} slope={} r_squared={}",
                f.intercept, f.slope, f.r_squared
            ));
            report.curve_fits.push(CurveFitRow {
                scheme,
                metric: metric.to_string(),
                intercept: f.intercept,
                slope: f.slope,
                r_squared: f.r_squared,
            });
        }
    }
    for scheme in [Scheme::Cloud, Scheme::Edge] {
        for &kb in &cfg.offload.sizes_kb {
            let p = cal.profile(scheme, kb)?;
            let row = ProfileRow {
                scheme,
                size_kb: kb,
                cycles_per_bit_local: p.cpu_per_bit_local,
                cycles_per_bit_remote: p.cpu_per_bit_edge,
                tx_power_mah_per_s: p.power_trans,
                energy_local_mah: p.energy_local,
                memory_local_mb: p.mem_local,
                memory_offload_mb: p.mem_offload,
            };
            report.log.line(format_args!(
                "profile scheme={scheme} size_kb={kb} cycles_per_bit_local={} cycles_per_bit_remote={} \
                 tx_power_mah_per_s={} energy_local_mah={} memory_local_mb={} memory_offload_mb={}",
                row.cycles_per_bit_local,
                row.cycles_per_bit_remote,
                row.tx_power_mah_per_s,
                row.energy_local_mah,
                row.memory_local_mb,
                row.memory_offload_mb
            ));
            report.profiles.push(row);
        }
    }
    Ok(())
}

/// Scheme comparison grid plus the optimizer's decision for the task set.
pub fn run_offload_experiment(cfg: &ScenarioConfig) -> Result<MetricsReport, ExperimentError> {
    let o = &cfg.offload;
    let mut report = MetricsReport { seed: cfg.seed, ..MetricsReport::default() };
    report.log.line(format_args!("seed={}", cfg.seed));
    let cal = calibrate(cfg)?;
    calibration_report(cfg, &cal, &mut report)?;

    for &scheme in &o.schemes {
        for &kb in &o.sizes_kb {
            let c = cal.scheme_costs(scheme, kb)?;
            report.log.line(format_args!(
                "fig4 scheme={scheme} size_kb={kb} time_s={} energy_mah={} memory_mb={}",
                c.time, c.energy, c.memory
            ));
            report.scheme_costs.push(SchemeCost {
                scheme,
                size_kb: kb,
                time_s: c.time,
                energy_mah: c.energy,
                memory_mb: c.memory,
            });
        }
    }

    let target = if o.scheme == Scheme::Local { Scheme::Edge } else { o.scheme };
    let tasks: Vec<TaskProfile> = o
        .tasks_kb
        .iter()
        .enumerate()
        .map(|(i, &kb)| {
            let mut p = cal.profile(target, kb)?;
            p.task_id = format!("task-{i}");
            Ok(p)
        })
        .collect::<Result<_, CalibrationError>>()?;
    let bounds = match o.bounds {
        Some(b) => b,
        None => {
            let all_local = cost::breakdown(&tasks, &vec![false; tasks.len()], &o.weights)?.total;
            ConstraintBounds::new(all_local.time, all_local.memory)?
        }
    };
    report.log.line(format_args!("bounds tau={} zeta={}", bounds.tau, bounds.zeta));

    let decision = if o.scheme == Scheme::Local {
        OffloadDecision::evaluate(&tasks, vec![false; tasks.len()], &o.weights, &bounds)?
    } else {
        let pso = PsoConfig { seed: cfg.seed, ..o.pso };
        solve_pso(&tasks, &o.weights, &bounds, &pso)?
    };
    let exact = if o.scheme != Scheme::Local && tasks.len() <= BRUTE_FORCE_MAX_TASKS {
        let e = brute_force_solve(&tasks, &o.weights, &bounds)?;
        report.log.line(format_args!("exact x={} objective={} feasible={}", e.bits(), e.objective, e.feasible));
        Some(e.objective)
    } else {
        None
    };

    let rows = tasks
        .iter()
        .zip(&o.tasks_kb)
        .zip(&decision.x)
        .map(|((p, &kb), &x)| {
            let c = cost::blended_costs(p, x);
            report.log.line(format_args!(
                "decision task={} size_kb={kb} offload={} time_s={} energy_mah={} memory_mb={}",
                p.task_id,
                u8::from(x),
                c.time,
                c.energy,
                c.memory
            ));
            DecisionRow {
                task_id: p.task_id.clone(),
                size_kb: kb,
                offload: x,
                time_s: c.time,
                energy_mah: c.energy,
                memory_mb: c.memory,
            }
        })
        .collect();
    for (name, c) in decision.constraint_report.checks() {
        report.log.line(format_args!(
            "constraint {name} lhs={} rhs={} slack={} satisfied={}",
            c.lhs, c.rhs, c.slack, c.satisfied
        ));
    }
    report.log.line(format_args!(
        "solution scheme={} x={} objective={} feasible={}",
        o.scheme,
        decision.bits(),
        decision.objective,
        decision.feasible
    ));
    report.decision = Some(DecisionReport {
        scheme: o.scheme,
        tasks: rows,
        objective: decision.objective,
        feasible: decision.feasible,
        constraints: decision.constraint_report,
        exact_objective: exact,
    });
    Ok(report)
}

pub fn gas_schedule(cfg: &ScenarioConfig) -> Result<GasSchedule, ExperimentError> {
    Ok(match &cfg.sharing.gas_schedule {
        Some(p) => GasSchedule::load(p)?,
        None => GasSchedule::bundled(),
    })
}

/// One call of each metered function on a fresh contract. Receipts come
/// back in schedule order.
pub fn run_gas_session(schedule: &GasSchedule, seed: u64) -> Result<(Vec<GasReceipt>, GasTotal), ContractError> {
    let admin = Identity::derive("admin", seed).public_key();
    let manager = Identity::derive("ehrs-manager", seed).public_key();
    let user = Identity::derive("gas-probe", seed).public_key();
    let address = "A0:P0".parse().expect("static address");
    let mut c = AccessContract::new(admin, manager, schedule.clone());
    c.add_user(&admin, user, Role::Doctor)?;
    c.bind(&admin, &user, Bindings { patients: [address].into(), devices: ["probe-device".to_owned()].into() })?;
    c.policy_list(&manager, &user)?;
    let address = "A0:P0".parse().expect("static address");
    c.retrieve_ehrs(&manager, &user, &address, "probe-device")?;
    c.penalty(&manager, &user, "probe")?;
    c.delete_user(&admin, &user)?;
    let by_fn: BTreeMap<ContractFunction, GasReceipt> = c.receipts().iter().map(|r| (r.function, r.clone())).collect();
    let rows: Vec<GasReceipt> = schedule.functions.iter().map(|e| by_fn[&e.name].clone()).collect();
    let total = contract::total(&rows, schedule.usd_per_ether);
    Ok((rows, total))
}

fn gas_section(schedule: &GasSchedule, seed: u64, report: &mut MetricsReport) -> Result<(), ExperimentError> {
    let (rows, total) = run_gas_session(schedule, seed)?;
    for g in &rows {
        report.log.line(format_args!(
            "gas function={} label={} gas_used={} ether_exact={} ether={} usd={}",
            g.function, g.label, g.gas_used, g.ether_exact, g.ether, g.usd
        ));
    }
    report.log.line(format_args!("gas total gas_used={} ether={} usd={}", total.gas_used, total.ether, total.usd));
    report.gas_session = rows;
    report.gas_total = Some(total);
    Ok(())
}

pub fn run_gas_experiment(cfg: &ScenarioConfig) -> Result<MetricsReport, ExperimentError> {
    let mut report = MetricsReport { seed: cfg.seed, ..MetricsReport::default() };
    report.log.line(format_args!("seed={}", cfg.seed));
    gas_section(&gas_schedule(cfg)?, cfg.seed, &mut report)?;
    Ok(report)
}

/// Network with the configured users registered and records stored, one
/// block sealed. Identities are derived from user names and the seed.
pub struct Population {
    pub network: SharingNetwork,
    pub identities: BTreeMap<String, Identity>,
}

impl Population {
    pub fn name_of(&self, pk: &PublicKey) -> String {
        self.identities
            .iter()
            .find(|(_, id)| id.public_key() == *pk)
            .map(|(n, _)| n.clone())
            .unwrap_or_else(|| pk.short())
    }
}

pub fn build_population(cfg: &ScenarioConfig, report: &mut MetricsReport) -> Result<Population, ExperimentError> {
    let s = &cfg.sharing;
    let storage = CasStorage::new(s.storage_nodes)?;
    let mut network = SharingNetwork::new(cfg.seed, s.sealers.clone(), gas_schedule(cfg)?, storage)?;
    let admin = network.admin().public_key();
    report.log.line(format_args!("admin pk={}", admin));
    report.log.line(format_args!("ehrs_manager pk={}", network.manager().public_key()));
    let mut identities = BTreeMap::new();
    for u in &s.users {
        let id = Identity::derive(u.name.clone(), cfg.seed);
        network.add_participant(u.name.clone());
        if u.registered {
            let bindings = Bindings {
                patients: u.patients.iter().cloned().collect(),
                devices: u.devices.iter().cloned().collect(),
            };
            let tx = network.register_user(&admin, id.public_key(), u.role, bindings)?;
            report.log.line(format_args!(
                "register user={} role={} pk={} patients={} devices={} tx={tx}",
                u.name,
                u.role,
                id.public_key(),
                u.patients.len(),
                u.devices.len()
            ));
        } else {
            report.log.line(format_args!("outsider user={} pk={}", u.name, id.public_key()));
        }
        identities.insert(u.name.clone(), id);
    }
    for r in &s.records {
        let h = network.store_record(
            r.address.clone(),
            &HealthResult { severity_score: r.severity_score, data: r.data.clone().into_bytes() },
        )?;
        let e = network.storage().lookup(&r.address).expect("just stored");
        report.log.line(format_args!("store address={} hash={h} node=node-{}", r.address, e.node));
    }
    let b = network.seal();
    report.log.line(format_args!(
        "seal height={} sealer={} txs={} hash={}",
        b.height,
        b.sealer,
        b.transactions.len(),
        b.hash
    ));
    Ok(Population { network, identities })
}

/// Registration, request round, deletions, retrieval latency table and
/// the one-call-per-function gas session.
pub fn run_sharing_experiment(cfg: &ScenarioConfig) -> Result<MetricsReport, ExperimentError> {
    let s = &cfg.sharing;
    let mut report = MetricsReport { seed: cfg.seed, ..MetricsReport::default() };
    report.log.line(format_args!("seed={}", cfg.seed));
    let mut pop = build_population(cfg, &mut report)?;

    let tick = pop.network.tick();
    let mut by_tx = BTreeMap::new();
    let mut txs = Vec::new();
    for r in &s.requests {
        let id = &pop.identities[&r.requester];
        let nonce = pop.network.next_nonce(&id.public_key());
        let tx = AccessRequest::new(id, r.address.clone(), r.device_id.clone(), tick).sign(id, nonce);
        by_tx.insert(tx.tx_id, r.requester.clone());
        txs.push(tx);
    }
    let results = pop.network.process_batch(txs, cfg.seed);
    for (seq, (req_id, res)) in results.into_iter().enumerate() {
        let requester = by_tx[&req_id].clone();
        match res {
            Ok(o) => {
                report.log.line(format_args!(
                    "access seq={seq} requester={requester} address={} device={} verdict={} record={} tx={} receipts={}",
                    o.address,
                    o.device_id,
                    o.verdict,
                    o.record_hash.map(|h| h.to_string()).unwrap_or_else(|| "-".into()),
                    o.tx_id,
                    o.receipts.iter().map(|r| r.function.name()).collect::<Vec<_>>().join("+")
                ));
                report.access_log.push(AccessLogEntry { seq, requester, outcome: Some(o), error: None });
            }
            Err(e) => {
                if matches!(e, AccessError::Storage(StorageError::Integrity { .. })) {
                    report.integrity_failures += 1;
                }
                report.log.line(format_args!("access seq={seq} requester={requester} error=\"{e}\""));
                report.access_log.push(AccessLogEntry { seq, requester, outcome: None, error: Some(e.to_string()) });
            }
        }
    }
    let b = pop.network.seal();
    report.log.line(format_args!(
        "seal height={} sealer={} txs={} hash={}",
        b.height,
        b.sealer,
        b.transactions.len(),
        b.hash
    ));

    if !s.delete_users.is_empty() {
        let admin = pop.network.admin().public_key();
        for name in &s.delete_users {
            let pk = pop.identities[name].public_key();
            let (tx, purged) = pop.network.delete_user(&admin, &pk)?;
            report.log.line(format_args!("delete user={name} purged={} tx={tx}", purged.len()));
        }
        let b = pop.network.seal();
        report.log.line(format_args!(
            "seal height={} sealer={} txs={} hash={}",
            b.height,
            b.sealer,
            b.transactions.len(),
            b.hash
        ));
    }

    match pop.network.ledger().verify_chain() {
        ChainStatus::Ok => report.log.line(format_args!("chain height={} status=ok", pop.network.ledger().height())),
        ChainStatus::Corrupt { height } => return Err(ExperimentError::Chain(height)),
    }
    report.chain = pop.network.ledger().blocks().to_vec();
    report.scenario_receipts = pop.network.contract().receipts().to_vec();
    let t = pop.network.contract().session_total();
    report.log.line(format_args!(
        "scenario_gas calls={} gas_used={} ether={} usd={}",
        report.scenario_receipts.len(),
        t.gas_used,
        t.ether,
        t.usd
    ));

    let model = match &s.latency_table {
        Some(p) => RetrievalLatencyModel::load(p)?,
        None => RetrievalLatencyModel::bundled(),
    };
    for &n in &s.latency_users {
        let c = model.retrieval_latency(n, edgeshare_core::LatencyMode::Centralized)?;
        let d = model.retrieval_latency(n, edgeshare_core::LatencyMode::Distributed)?;
        let row = LatencyRow { users: n, centralized_s: c, distributed_s: d, savings: (c - d) / c };
        report.log.line(format_args!("latency users={n} centralized_s={c} distributed_s={d} savings={}", row.savings));
        report.latency.push(row);
    }

    gas_section(&gas_schedule(cfg)?, cfg.seed, &mut report)?;
    Ok(report)
}

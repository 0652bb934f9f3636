//! `edgeshare` command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 no feasible offloading
//! decision, 3 integrity violation detected, 4 bad configuration or usage.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use edgeshare_cli::commands::{self, Requester};
use edgeshare_cli::config::{ConfigError, ScenarioConfig};
use edgeshare_cli::experiment::{self, ExperimentError};
use edgeshare_cli::report::{emit_report, MetricsReport, OutputFormat};
use edgeshare_core::{HealthResult, Identity, PatientAddress};

const EXIT_FAILURE: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_INTEGRITY: u8 = 3;
const EXIT_USAGE: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "edgeshare", version, about = "Edge offloading and ledger-backed health record sharing simulator")]
struct Cli {
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Scenario file; the built-in scenario when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output root; defaults to the config's `out_dir`, then `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Which artifacts to write.
    #[arg(long, global = true, value_enum, default_value_t = Emit::Both)]
    emit: Emit,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Emit {
    Csv,
    Plot,
    Both,
}

impl Emit {
    fn formats(self) -> &'static [OutputFormat] {
        match self {
            Emit::Csv => &[OutputFormat::Csv],
            Emit::Plot => &[OutputFormat::Plot],
            Emit::Both => &[OutputFormat::Csv, OutputFormat::Plot],
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Scheme cost curves and the optimized offloading decision.
    Offload,
    /// Registration, access requests, deletions and retrieval latency.
    Share,
    /// One call per contract function with its gas cost.
    Gas,
    /// Offload, share and gas in one go.
    All,
    /// Fitted curves and the backed-out task profiles.
    Calibrate,
    /// Runs one access request against the configured population.
    Request(RequestArgs),
    /// Prints a user's derived secret key as hex.
    Keygen {
        #[arg(long)]
        user: String,
    },
    /// Encrypts and stores one health result.
    Store(StoreArgs),
    /// Fetches and decrypts a patient's record.
    Fetch {
        #[command(flatten)]
        at: AddressArgs,
        #[arg(long)]
        store_dir: Option<PathBuf>,
    },
    /// Verifies a chain export and/or a persisted store.
    Inspect {
        #[arg(long)]
        chain: Option<PathBuf>,
        #[arg(long)]
        store_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct AddressArgs {
    #[arg(long)]
    area: String,
    #[arg(long)]
    patient: String,
}

impl AddressArgs {
    fn address(&self) -> Result<PatientAddress, ExperimentError> {
        Ok(PatientAddress::new(self.area.clone(), self.patient.clone())?)
    }
}

#[derive(Debug, Args)]
struct RequestArgs {
    /// Scenario user name.
    #[arg(long, conflicts_with = "key_file", required_unless_present = "key_file")]
    user: Option<String>,
    /// File holding a hex secret key.
    #[arg(long)]
    key_file: Option<PathBuf>,
    #[command(flatten)]
    at: AddressArgs,
    #[arg(long)]
    device: String,
}

#[derive(Debug, Args)]
struct StoreArgs {
    #[command(flatten)]
    at: AddressArgs,
    #[arg(long)]
    severity: f64,
    #[arg(long)]
    data: String,
    #[arg(long)]
    store_dir: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Run(ExperimentError),
    Infeasible,
    Integrity(String),
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        if e.is_integrity() {
            Failure::Integrity(e.to_string())
        } else if matches!(e, ExperimentError::Config(_)) {
            Failure::Usage(e.to_string())
        } else {
            Failure::Run(e)
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAILURE)
        }
        Err(Failure::Infeasible) => {
            eprintln!("error: no feasible offloading decision under the configured bounds");
            ExitCode::from(EXIT_INFEASIBLE)
        }
        Err(Failure::Integrity(m)) => {
            eprintln!("integrity violation: {m}");
            ExitCode::from(EXIT_INTEGRITY)
        }
    }
}

/// Stdout writes ignore errors so a closed pipe does not abort the run.
fn out(line: impl std::fmt::Display) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

fn json(v: &impl serde::Serialize) -> Result<(), Failure> {
    let s = serde_json::to_string_pretty(v).map_err(|e| Failure::Usage(e.to_string()))?;
    out(s);
    Ok(())
}

fn emit(report: &MetricsReport, dir: &Path, emit: Emit) -> Result<(), Failure> {
    for &f in emit.formats() {
        let paths = emit_report(report, dir, f)
            .map_err(|e| Failure::Run(edgeshare_core::storage::StorageError::Io(e).into()))?;
        for p in paths {
            out(format_args!("wrote {}", p.display()));
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = match &cli.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::builtin()?,
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out_root = cli.out.clone().or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let store_dir = |d: &Option<PathBuf>| d.clone().unwrap_or_else(|| out_root.join("cas"));

    match &cli.command {
        Command::Offload => offload(&cfg, &out_root, cli.emit),
        Command::Share => share(&cfg, &out_root, cli.emit),
        Command::Gas => emit(&experiment::run_gas_experiment(&cfg)?, &out_root.join("gas"), cli.emit),
        Command::All => {
            emit(&experiment::run_gas_experiment(&cfg)?, &out_root.join("gas"), cli.emit)?;
            let shared = share(&cfg, &out_root, cli.emit);
            let offloaded = offload(&cfg, &out_root, cli.emit);
            shared.and(offloaded)
        }
        Command::Calibrate => {
            let cal = experiment::calibrate(&cfg)?;
            let mut report = MetricsReport { seed: cfg.seed, ..MetricsReport::default() };
            experiment::calibration_report(&cfg, &cal, &mut report)?;
            emit(&report, &out_root.join("calibration"), cli.emit)
        }
        Command::Request(a) => {
            let who = match (&a.user, &a.key_file) {
                (Some(u), _) => Requester::Named(u),
                (None, Some(p)) => Requester::KeyFile(p),
                (None, None) => return Err(Failure::Usage("--user or --key-file is required".into())),
            };
            let outcome = commands::request(&cfg, who, a.at.address()?, &a.device)?;
            json(&outcome)
        }
        Command::Keygen { user } => {
            if !cfg.sharing.users.iter().any(|u| &u.name == user) {
                return Err(Failure::Usage(format!("unknown user `{user}`")));
            }
            out(Identity::derive(user.clone(), cfg.seed).secret_hex());
            Ok(())
        }
        Command::Store(a) => {
            let result = HealthResult { severity_score: a.severity, data: a.data.clone().into_bytes() };
            json(&commands::store(&cfg, &store_dir(&a.store_dir), a.at.address()?, &result)?)
        }
        Command::Fetch { at, store_dir: d } => json(&commands::fetch(&cfg, &store_dir(d), &at.address()?)?),
        Command::Inspect { chain, store_dir: d } => {
            if chain.is_none() && d.is_none() {
                return Err(Failure::Usage("inspect needs --chain and/or --store-dir".into()));
            }
            let r = commands::inspect(chain.as_deref(), d.as_deref())?;
            json(&r)?;
            if r.clean() {
                Ok(())
            } else {
                Err(Failure::Integrity("inspection found corrupted data".into()))
            }
        }
    }
}

fn offload(cfg: &ScenarioConfig, out: &Path, e: Emit) -> Result<(), Failure> {
    let report = experiment::run_offload_experiment(cfg)?;
    emit(&report, &out.join("offload"), e)?;
    match &report.decision {
        Some(d) if !d.feasible => Err(Failure::Infeasible),
        _ => Ok(()),
    }
}

fn share(cfg: &ScenarioConfig, out: &Path, e: Emit) -> Result<(), Failure> {
    let report = experiment::run_sharing_experiment(cfg)?;
    emit(&report, &out.join("sharing"), e)?;
    if report.integrity_failures > 0 {
        return Err(Failure::Integrity(format!("{} record(s) failed verification", report.integrity_failures)));
    }
    Ok(())
}

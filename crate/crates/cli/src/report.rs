//! Experiment results and their on-disk form.
//!
//! CSV headers carry a `# schema: <name> v1` comment line. Floats are
//! written in shortest round-trip form, so output is byte-stable for a
//! given seed. Every number that lands in a table also appears on a
//! `key=value` line of `run.log`.

use std::fmt::{self, Display};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use edgeshare_core::contract::GasTotal;
use edgeshare_core::cost::ConstraintReport;
use edgeshare_core::ledger::export_ndjson;
use edgeshare_core::{AccessOutcome, Block, GasReceipt, Scheme};
use serde::Serialize;
use serde_json::json;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    /// Tables, logs and line-delimited JSON.
    Csv,
    /// Declarative Vega-Lite specs with inline data.
    Plot,
}

/// Append-only audit lines.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunLog(Vec<String>);

impl RunLog {
    pub fn line(&mut self, l: impl Display) {
        self.0.push(l.to_string());
    }

    pub fn lines(&self) -> &[String] {
        &self.0
    }
}

impl fmt::Display for RunLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.0 {
            writeln!(f, "{l}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SchemeCost {
    pub scheme: Scheme,
    pub size_kb: f64,
    pub time_s: f64,
    pub energy_mah: f64,
    pub memory_mb: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveFitRow {
    pub scheme: Scheme,
    pub metric: String,
    pub intercept: f64,
    pub slope: f64,
    pub r_squared: f64,
}

/// Task profile coefficients backed out of the curves at one size.
#[derive(Debug, Clone, Serialize)]
pub struct ProfileRow {
    pub scheme: Scheme,
    pub size_kb: f64,
    pub cycles_per_bit_local: f64,
    pub cycles_per_bit_remote: f64,
    pub tx_power_mah_per_s: f64,
    pub energy_local_mah: f64,
    pub memory_local_mb: f64,
    pub memory_offload_mb: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecisionRow {
    pub task_id: String,
    pub size_kb: f64,
    pub offload: bool,
    pub time_s: f64,
    pub energy_mah: f64,
    pub memory_mb: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecisionReport {
    pub scheme: Scheme,
    pub tasks: Vec<DecisionRow>,
    pub objective: f64,
    pub feasible: bool,
    pub constraints: ConstraintReport,
    /// Exhaustive optimum, when the task set is small enough to enumerate.
    pub exact_objective: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LatencyRow {
    pub users: u32,
    pub centralized_s: f64,
    pub distributed_s: f64,
    pub savings: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AccessLogEntry {
    pub seq: usize,
    pub requester: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome: Option<AccessOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct MetricsReport {
    pub seed: u64,
    pub scheme_costs: Vec<SchemeCost>,
    pub curve_fits: Vec<CurveFitRow>,
    pub profiles: Vec<ProfileRow>,
    pub decision: Option<DecisionReport>,
    pub latency: Vec<LatencyRow>,
    pub gas_session: Vec<GasReceipt>,
    pub gas_total: Option<GasTotal>,
    pub scenario_receipts: Vec<GasReceipt>,
    pub access_log: Vec<AccessLogEntry>,
    #[serde(skip)]
    pub chain: Vec<Block>,
    pub integrity_failures: usize,
    pub log: RunLog,
}

fn csv_writer(path: &Path, schema: &str) -> io::Result<csv::Writer<fs::File>> {
    use io::Write;
    let mut f = fs::File::create(path)?;
    writeln!(f, "# schema: {schema} v1")?;
    Ok(csv::Writer::from_writer(f))
}

fn finish(mut w: csv::Writer<fs::File>) -> io::Result<()> {
    w.flush()
}

fn csv_err(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

/// Writes the parts of `report` that are present into `dir` and returns
/// the written paths in a fixed order.
pub fn emit_report(report: &MetricsReport, dir: &Path, format: OutputFormat) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    match format {
        OutputFormat::Csv => emit_tables(report, dir, &mut written)?,
        OutputFormat::Plot => emit_plots(report, dir, &mut written)?,
    }
    Ok(written)
}

fn emit_tables(r: &MetricsReport, dir: &Path, written: &mut Vec<PathBuf>) -> io::Result<()> {
    if !r.scheme_costs.is_empty() {
        let p = dir.join("fig4.csv");
        let mut w = csv_writer(&p, "scheme_costs")?;
        w.write_record(["scheme", "size_kb", "time_s", "energy_mah", "memory_mb"]).map_err(csv_err)?;
        for c in &r.scheme_costs {
            w.write_record([
                c.scheme.to_string(),
                c.size_kb.to_string(),
                c.time_s.to_string(),
                c.energy_mah.to_string(),
                c.memory_mb.to_string(),
            ])
            .map_err(csv_err)?;
        }
        finish(w)?;
        written.push(p);
    }
    if !r.curve_fits.is_empty() {
        let p = dir.join("calibration_fits.csv");
        let mut w = csv_writer(&p, "curve_fits")?;
        w.write_record(["scheme", "metric", "intercept", "slope", "r_squared"]).map_err(csv_err)?;
        for f in &r.curve_fits {
            w.write_record([
                f.scheme.to_string(),
                f.metric.clone(),
                f.intercept.to_string(),
                f.slope.to_string(),
                f.r_squared.to_string(),
            ])
            .map_err(csv_err)?;
        }
        finish(w)?;
        written.push(p);
    }
    if !r.profiles.is_empty() {
        let p = dir.join("calibration_profiles.csv");
        let mut w = csv_writer(&p, "calibrated_profiles")?;
        w.write_record([
            "scheme",
            "size_kb",
            "cycles_per_bit_local",
            "cycles_per_bit_remote",
            "tx_power_mah_per_s",
            "energy_local_mah",
            "memory_local_mb",
            "memory_offload_mb",
        ])
        .map_err(csv_err)?;
        for q in &r.profiles {
            w.write_record([
                q.scheme.to_string(),
                q.size_kb.to_string(),
                q.cycles_per_bit_local.to_string(),
                q.cycles_per_bit_remote.to_string(),
                q.tx_power_mah_per_s.to_string(),
                q.energy_local_mah.to_string(),
                q.memory_local_mb.to_string(),
                q.memory_offload_mb.to_string(),
            ])
            .map_err(csv_err)?;
        }
        finish(w)?;
        written.push(p);
    }
    if let Some(d) = &r.decision {
        let p = dir.join("decision.csv");
        let mut w = csv_writer(&p, "offload_decision")?;
        w.write_record(["task_id", "size_kb", "offload", "time_s", "energy_mah", "memory_mb"]).map_err(csv_err)?;
        for t in &d.tasks {
            w.write_record([
                t.task_id.clone(),
                t.size_kb.to_string(),
                u8::from(t.offload).to_string(),
                t.time_s.to_string(),
                t.energy_mah.to_string(),
                t.memory_mb.to_string(),
            ])
            .map_err(csv_err)?;
        }
        finish(w)?;
        written.push(p);
        let p = dir.join("decision.json");
        fs::write(&p, serde_json::to_string_pretty(d).map_err(io::Error::other)? + "\n")?;
        written.push(p);
    }
    if !r.latency.is_empty() {
        let p = dir.join("table1.csv");
        let mut w = csv_writer(&p, "retrieval_latency")?;
        w.write_record(["users", "centralized_s", "distributed_s", "savings"]).map_err(csv_err)?;
        for l in &r.latency {
            w.write_record([
                l.users.to_string(),
                l.centralized_s.to_string(),
                l.distributed_s.to_string(),
                l.savings.to_string(),
            ])
            .map_err(csv_err)?;
        }
        finish(w)?;
        written.push(p);
    }
    if let Some(total) = &r.gas_total {
        let p = dir.join("table2.csv");
        let mut w = csv_writer(&p, "gas_session")?;
        w.write_record(["function", "gas_used", "ether", "usd"]).map_err(csv_err)?;
        for g in &r.gas_session {
            w.write_record([g.label.clone(), g.gas_used.to_string(), g.ether.to_string(), g.usd.to_string()])
                .map_err(csv_err)?;
        }
        w.write_record([
            "Total".to_owned(),
            total.gas_used.to_string(),
            total.ether.to_string(),
            total.usd.to_string(),
        ])
        .map_err(csv_err)?;
        finish(w)?;
        written.push(p);
    }
    if !r.scenario_receipts.is_empty() {
        let p = dir.join("gas_receipts.csv");
        let mut w = csv_writer(&p, "scenario_receipts")?;
        w.write_record(["seq", "function", "gas_used", "ether", "usd"]).map_err(csv_err)?;
        for (i, g) in r.scenario_receipts.iter().enumerate() {
            w.write_record([
                i.to_string(),
                g.function.to_string(),
                g.gas_used.to_string(),
                g.ether.to_string(),
                g.usd.to_string(),
            ])
            .map_err(csv_err)?;
        }
        finish(w)?;
        written.push(p);
    }
    if !r.access_log.is_empty() {
        let p = dir.join("access_log.jsonl");
        let mut text = String::new();
        for e in &r.access_log {
            text.push_str(&serde_json::to_string(e).map_err(io::Error::other)?);
            text.push('\n');
        }
        fs::write(&p, text)?;
        written.push(p);
    }
    if !r.chain.is_empty() {
        let p = dir.join("chain.ndjson");
        fs::write(&p, export_ndjson(&r.chain))?;
        written.push(p);
    }
    let p = dir.join("run.log");
    fs::write(&p, r.log.to_string())?;
    written.push(p);
    Ok(())
}

fn emit_plots(r: &MetricsReport, dir: &Path, written: &mut Vec<PathBuf>) -> io::Result<()> {
    let schema = "https://vega.github.io/schema/vega-lite/v5.json";
    if !r.scheme_costs.is_empty() {
        for (field, title) in [("time_s", "Time (s)"), ("energy_mah", "Energy (mAh)"), ("memory_mb", "Memory (MB)")] {
            let values: Vec<_> = r
                .scheme_costs
                .iter()
                .map(|c| {
                    let v = match field {
                        "time_s" => c.time_s,
                        "energy_mah" => c.energy_mah,
                        _ => c.memory_mb,
                    };
                    json!({ "scheme": c.scheme.as_str(), "size_kb": c.size_kb, "value": v })
                })
                .collect();
            let chart = json!({
                "$schema": schema,
                "title": format!("{title} by file size"),
                "data": { "values": values },
                "mark": "bar",
                "encoding": {
                    "x": { "field": "size_kb", "type": "ordinal", "title": "File size (KB)" },
                    "xOffset": { "field": "scheme" },
                    "y": { "field": "value", "type": "quantitative", "title": title },
                    "color": { "field": "scheme", "type": "nominal" }
                }
            });
            let p = dir.join(format!("fig4_{field}.vl.json"));
            fs::write(&p, serde_json::to_string_pretty(&chart).map_err(io::Error::other)? + "\n")?;
            written.push(p);
        }
    }
    if !r.latency.is_empty() {
        let values: Vec<_> = r
            .latency
            .iter()
            .flat_map(|l| {
                [
                    json!({ "users": l.users, "mode": "centralized", "seconds": l.centralized_s }),
                    json!({ "users": l.users, "mode": "distributed", "seconds": l.distributed_s }),
                ]
            })
            .collect();
        let chart = json!({
            "$schema": schema,
            "title": "Record retrieval time by concurrent users",
            "data": { "values": values },
            "mark": { "type": "line", "point": true },
            "encoding": {
                "x": { "field": "users", "type": "quantitative", "title": "Concurrent users" },
                "y": { "field": "seconds", "type": "quantitative", "title": "Retrieval time (s)" },
                "color": { "field": "mode", "type": "nominal" }
            }
        });
        let p = dir.join("table1.vl.json");
        fs::write(&p, serde_json::to_string_pretty(&chart).map_err(io::Error::other)? + "\n")?;
        written.push(p);
    }
    if !r.gas_session.is_empty() {
        let values: Vec<_> =
            r.gas_session.iter().map(|g| json!({ "function": g.label, "gas_used": g.gas_used })).collect();
        let chart = json!({
            "$schema": schema,
            "title": "Gas used per contract function",
            "data": { "values": values },
            "mark": "bar",
            "encoding": {
                "x": { "field": "function", "type": "nominal", "sort": null },
                "y": { "field": "gas_used", "type": "quantitative" }
            }
        });
        let p = dir.join("table2.vl.json");
        fs::write(&p, serde_json::to_string_pretty(&chart).map_err(io::Error::other)? + "\n")?;
        written.push(p);
    }
    Ok(())
}

/// Reads a CSV written by [`emit_report`], skipping the schema comment.
pub fn read_table(path: &Path) -> io::Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path)?;
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let header = rdr.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
    let rows = rdr
        .records()
        .map(|r| r.map(|r| r.iter().map(str::to_owned).collect()))
        .collect::<Result<_, _>>()
        .map_err(csv_err)?;
    Ok((header, rows))
}

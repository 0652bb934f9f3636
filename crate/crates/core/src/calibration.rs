//! Calibration of task profiles against measured per-size cost curves.
//!
//! The measurements give end-to-end time, battery and memory for each
//! execution scheme at a handful of file sizes. For a requested size the
//! calibrated curve value is computed first, then the profile coefficients
//! are backed out so the cost model reproduces that value:
//!
//! * `cpu_per_bit_local = T_local(D) · f_l / D`;
//! * encryption and transmission durations follow from the fixed device
//!   constants; the remote term absorbs the rest of `T_off(D)`;
//! * `power_trans` absorbs whatever of `E_off(D)` encryption does not.
//!
//! Cloud and edge share the formula and differ only in their curves and
//! remote clock.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{self, kb_to_bits, CostError, CostTriple, TaskProfile};
use crate::curve::{AffineFit, CurveError, PiecewiseLinear};

/// Anchor file bundled with the crate.
pub const BUNDLED_FIG4_ANCHORS: &str = include_str!("../data/fig4_anchors.csv");

/// File sizes (KB) at which the anchors were measured.
pub const ANCHOR_SIZES_KB: [f64; 5] = [200.0, 400.0, 600.0, 800.0, 1000.0];

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("anchor file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("no anchors for {0}/{1}")]
    MissingCurve(Scheme, Metric),
    #[error("{scheme}/{metric}: {source}")]
    Curve { scheme: Scheme, metric: Metric, source: CurveError },
    #[error("file size must be positive, got {0} KB")]
    BadSize(f64),
    #[error("calibrated profile for {scheme} at {size_kb} KB is not physical: {source}")]
    Unphysical { scheme: Scheme, size_kb: f64, source: CostError },
    #[error("cannot back out an offload profile for the local scheme")]
    LocalHasNoOffload,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Local,
    Cloud,
    Edge,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Local, Scheme::Cloud, Scheme::Edge];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Local => "local",
            Scheme::Cloud => "cloud",
            Scheme::Edge => "edge",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "local" => Ok(Scheme::Local),
            "cloud" => Ok(Scheme::Cloud),
            "edge" => Ok(Scheme::Edge),
            other => Err(format!("unknown scheme `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "time_s")]
    Time,
    #[serde(rename = "energy_mah")]
    Energy,
    #[serde(rename = "memory_mb")]
    Memory,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Time, Metric::Energy, Metric::Memory];

    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::Time => "time_s",
            Metric::Energy => "energy_mah",
            Metric::Memory => "memory_mb",
        }
    }

    pub fn of(&self, c: &CostTriple) -> f64 {
        match self {
            Metric::Time => c.time,
            Metric::Energy => c.energy,
            Metric::Memory => c.memory,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "time_s" => Ok(Metric::Time),
            "energy_mah" => Ok(Metric::Energy),
            "memory_mb" => Ok(Metric::Memory),
            other => Err(format!("unknown metric `{other}`")),
        }
    }
}

/// Measured `(size_kb, value)` points per scheme and metric.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Fig4Anchors {
    points: BTreeMap<(Scheme, Metric), Vec<(f64, f64)>>,
}

impl Fig4Anchors {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_FIG4_ANCHORS).expect("bundled anchor file is well-formed")
    }

    pub fn load(path: &Path) -> Result<Self, CalibrationError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Parses `scheme,metric,size_kb,value` rows. `#` lines and the header
    /// are skipped.
    pub fn parse(text: &str) -> Result<Self, CalibrationError> {
        let mut out = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("scheme,") {
                continue;
            }
            let err = |msg: String| CalibrationError::Parse { line: i + 1, msg };
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 4 {
                return Err(err(format!("expected 4 columns, got {}", cols.len())));
            }
            let scheme: Scheme = cols[0].parse().map_err(err)?;
            let metric: Metric = cols[1].parse().map_err(err)?;
            let size: f64 = cols[2].parse().map_err(|e| err(format!("size: {e}")))?;
            let value: f64 = cols[3].parse().map_err(|e| err(format!("value: {e}")))?;
            out.points.entry((scheme, metric)).or_default().push((size, value));
        }
        Ok(out)
    }

    pub fn points(&self, scheme: Scheme, metric: Metric) -> &[(f64, f64)] {
        self.points.get(&(scheme, metric)).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Anchor value at exactly `size_kb`, if measured.
    pub fn value(&self, scheme: Scheme, metric: Metric, size_kb: f64) -> Option<f64> {
        self.points(scheme, metric).iter().find(|p| p.0 == size_kb).map(|p| p.1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Scheme, Metric, f64, f64)> + '_ {
        self.points.iter().flat_map(|(&(s, m), pts)| pts.iter().map(move |&(x, y)| (s, m, x, y)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationMode {
    /// Piecewise-linear through every anchor; reproduces anchors exactly.
    #[default]
    Interpolate,
    /// Single least-squares line per curve; smoother, not exact at anchors.
    Affine,
}

impl fmt::Display for CalibrationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Interpolate => "interpolate",
            Self::Affine => "affine",
        })
    }
}

impl FromStr for CalibrationMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "interpolate" => Ok(Self::Interpolate),
            "affine" => Ok(Self::Affine),
            other => Err(format!("unknown calibration mode `{other}`")),
        }
    }
}

/// Hardware constants that the measurements do not determine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeviceConstants {
    pub local_freq_hz: f64,
    pub edge_freq_hz: f64,
    pub cloud_freq_hz: f64,
    pub link_rate_bps: f64,
    pub link_cap_bps: f64,
    pub enc_cycles_per_bit: f64,
    pub enc_power_mah_per_s: f64,
}

impl Default for DeviceConstants {
    fn default() -> Self {
        Self {
            local_freq_hz: 2.8e9,
            edge_freq_hz: 2.5e9,
            cloud_freq_hz: 2.5e9,
            link_rate_bps: cost::DEFAULT_LINK_CAP_BPS,
            link_cap_bps: cost::DEFAULT_LINK_CAP_BPS,
            enc_cycles_per_bit: 20.0,
            enc_power_mah_per_s: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
enum CurveModel {
    Interp(PiecewiseLinear),
    Affine(AffineFit),
}

impl CurveModel {
    fn eval(&self, x: f64) -> f64 {
        match self {
            CurveModel::Interp(c) => c.eval(x),
            CurveModel::Affine(f) => f.eval(x),
        }
    }
}

/// Fitted cost curves plus the device constants used to back out profiles.
#[derive(Debug, Clone)]
pub struct Calibration {
    mode: CalibrationMode,
    device: DeviceConstants,
    curves: BTreeMap<(Scheme, Metric), CurveModel>,
    fits: BTreeMap<(Scheme, Metric), AffineFit>,
}

impl Calibration {
    pub fn fit(
        anchors: &Fig4Anchors,
        mode: CalibrationMode,
        device: DeviceConstants,
    ) -> Result<Self, CalibrationError> {
        let mut curves = BTreeMap::new();
        let mut fits = BTreeMap::new();
        for scheme in Scheme::ALL {
            for metric in Metric::ALL {
                let pts = anchors.points(scheme, metric);
                if pts.is_empty() {
                    return Err(CalibrationError::MissingCurve(scheme, metric));
                }
                let wrap = |source| CalibrationError::Curve { scheme, metric, source };
                let fit = AffineFit::fit(pts).map_err(wrap)?;
                let model = match mode {
                    CalibrationMode::Interpolate => {
                        CurveModel::Interp(PiecewiseLinear::new(pts.to_vec()).map_err(wrap)?)
                    }
                    CalibrationMode::Affine => CurveModel::Affine(fit),
                };
                curves.insert((scheme, metric), model);
                fits.insert((scheme, metric), fit);
            }
        }
        Ok(Self { mode, device, curves, fits })
    }

    pub fn mode(&self) -> CalibrationMode {
        self.mode
    }

    pub fn device(&self) -> &DeviceConstants {
        &self.device
    }

    /// Least-squares line for a curve, regardless of mode (for audit output).
    pub fn affine_fit(&self, scheme: Scheme, metric: Metric) -> AffineFit {
        self.fits[&(scheme, metric)]
    }

    /// Calibrated curve value at `size_kb`.
    pub fn curve_value(&self, scheme: Scheme, metric: Metric, size_kb: f64) -> f64 {
        self.curves[&(scheme, metric)].eval(size_kb)
    }

    /// Backs out a task profile whose local side follows the local curves
    /// and whose offload side follows `scheme` (cloud or edge).
    pub fn profile(&self, scheme: Scheme, size_kb: f64) -> Result<TaskProfile, CalibrationError> {
        if scheme == Scheme::Local {
            return Err(CalibrationError::LocalHasNoOffload);
        }
        if !(size_kb.is_finite() && size_kb > 0.0) {
            return Err(CalibrationError::BadSize(size_kb));
        }
        let d = &self.device;
        let bits = kb_to_bits(size_kb);
        let remote_freq = match scheme {
            Scheme::Cloud => d.cloud_freq_hz,
            _ => d.edge_freq_hz,
        };
        let local_t = self.curve_value(Scheme::Local, Metric::Time, size_kb);
        let off_t = self.curve_value(scheme, Metric::Time, size_kb);
        let off_e = self.curve_value(scheme, Metric::Energy, size_kb);

        let t_enc = bits * d.enc_cycles_per_bit / d.local_freq_hz;
        let t_tx = bits / d.link_rate_bps;
        let t_remote = off_t - t_enc - t_tx;
        let p = TaskProfile {
            task_id: format!("{scheme}-{size_kb}kb"),
            size_bits: bits,
            cpu_per_bit_local: local_t * d.local_freq_hz / bits,
            cpu_per_bit_enc: d.enc_cycles_per_bit,
            cpu_per_bit_edge: t_remote * remote_freq / bits,
            freq_local: d.local_freq_hz,
            freq_edge: remote_freq,
            rate_bits_per_sec: d.link_rate_bps,
            energy_local: self.curve_value(Scheme::Local, Metric::Energy, size_kb),
            mem_local: self.curve_value(Scheme::Local, Metric::Memory, size_kb),
            power_enc: d.enc_power_mah_per_s,
            power_trans: (off_e - d.enc_power_mah_per_s * t_enc) / t_tx,
            mem_offload: self.curve_value(scheme, Metric::Memory, size_kb),
        };
        p.validate(d.link_cap_bps).map_err(|source| CalibrationError::Unphysical { scheme, size_kb, source })?;
        Ok(p)
    }

    /// Costs of running a `size_kb` task under `scheme`, computed through
    /// the cost model on the calibrated profile.
    pub fn scheme_costs(&self, scheme: Scheme, size_kb: f64) -> Result<CostTriple, CalibrationError> {
        match scheme {
            Scheme::Local => Ok(cost::blended_costs(&self.profile(Scheme::Edge, size_kb)?, false)),
            s => Ok(cost::blended_costs(&self.profile(s, size_kb)?, true)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundled() -> Calibration {
        Calibration::fit(&Fig4Anchors::bundled(), CalibrationMode::Interpolate, DeviceConstants::default()).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * b.abs()
    }

    #[test]
    fn bundled_anchor_file_is_complete() {
        let a = Fig4Anchors::bundled();
        assert_eq!(a.iter().count(), 45);
        assert_eq!(a.value(Scheme::Edge, Metric::Time, 1000.0), Some(3.6));
        assert_eq!(a.value(Scheme::Local, Metric::Energy, 200.0), Some(2.5));
    }

    #[test]
    fn local_200kb_reproduces_measurements() {
        let c = bundled().scheme_costs(Scheme::Local, 200.0).unwrap();
        assert!(close(c.time, 1.5));
        assert!(close(c.energy, 2.5));
        assert!(close(c.memory, 32.0));
    }

    #[test]
    fn edge_profiles_reproduce_measurements() {
        let cal = bundled();
        let p200 = cal.profile(Scheme::Edge, 200.0).unwrap();
        assert!(close(cost::offload_time(&p200), 1.1));
        assert!(close(cost::offload_energy(&p200), 2.1));
        assert_eq!(cost::blended_costs(&p200, false).memory, 32.0);
        assert_eq!(cost::blended_costs(&p200, true).memory, 27.0);
        let p1000 = cal.profile(Scheme::Edge, 1000.0).unwrap();
        assert!(close(cost::offload_time(&p1000), 3.6));
        let c = cal.scheme_costs(Scheme::Edge, 1000.0).unwrap();
        assert!(close(c.energy, 7.3) && close(c.memory, 80.0));
    }

    #[test]
    fn cloud_and_edge_memory_agree_everywhere() {
        let cal = bundled();
        for kb in ANCHOR_SIZES_KB {
            let cloud = cal.scheme_costs(Scheme::Cloud, kb).unwrap();
            let edge = cal.scheme_costs(Scheme::Edge, kb).unwrap();
            assert_eq!(cloud.memory, edge.memory);
        }
    }

    #[test]
    fn extrapolates_to_larger_files() {
        let cal = bundled();
        // last segment slopes extend to 1200 KB
        let edge = cal.scheme_costs(Scheme::Edge, 1200.0).unwrap();
        assert!(close(edge.time, 4.3));
        let local = cal.scheme_costs(Scheme::Local, 1200.0).unwrap();
        assert!(close(local.time, 6.9));
    }

    #[test]
    fn affine_mode_fits_lines() {
        let cal =
            Calibration::fit(&Fig4Anchors::bundled(), CalibrationMode::Affine, DeviceConstants::default()).unwrap();
        let fit = cal.affine_fit(Scheme::Edge, Metric::Time);
        // oracle: closed-form slope for x = 200..1000 step 200, y = 1.1,2,2.4,2.9,3.6
        let xs = ANCHOR_SIZES_KB;
        let ys = [1.1, 2.0, 2.4, 2.9, 3.6];
        let mx = 600.0;
        let my = ys.iter().sum::<f64>() / 5.0;
        let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        assert!(close(fit.slope, num / den));
        assert!(close(cal.curve_value(Scheme::Edge, Metric::Time, 600.0), my));
        assert!(cal.profile(Scheme::Edge, 600.0).is_ok());
    }

    #[test]
    fn rejects_bad_inputs() {
        let cal = bundled();
        assert!(matches!(cal.profile(Scheme::Local, 200.0), Err(CalibrationError::LocalHasNoOffload)));
        assert!(matches!(cal.profile(Scheme::Edge, 0.0), Err(CalibrationError::BadSize(_))));
        let mut short = String::from("scheme,metric,size_kb,value\n");
        short.push_str("edge,time_s,200,1.1\n");
        let a = Fig4Anchors::parse(&short).unwrap();
        assert!(matches!(
            Calibration::fit(&a, CalibrationMode::Interpolate, DeviceConstants::default()),
            Err(CalibrationError::MissingCurve(..))
        ));
        assert!(matches!(Fig4Anchors::parse("edge,time_s,200"), Err(CalibrationError::Parse { line: 1, .. })));
        assert!(Fig4Anchors::parse("warp,time_s,200,1").is_err());
    }

    #[test]
    fn slow_link_makes_profile_unphysical() {
        // transmission alone exceeds the measured edge time
        let device = DeviceConstants { link_rate_bps: 1.0e6, ..DeviceConstants::default() };
        let cal = Calibration::fit(&Fig4Anchors::bundled(), CalibrationMode::Interpolate, device).unwrap();
        assert!(matches!(cal.profile(Scheme::Edge, 200.0), Err(CalibrationError::Unphysical { .. })));
    }
}

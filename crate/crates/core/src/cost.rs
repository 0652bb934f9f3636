//! Per-task cost model for local versus offloaded execution.
//!
//! Canonical units: bits, seconds, CPU cycles, mAh and MB. Kilobyte file
//! sizes and Mbit/s link rates are converted at the I/O boundary with
//! [`kb_to_bits`] and [`mbps_to_bps`].
//!
//! A task executed locally costs
//! `T = D·X_l / f_l` seconds plus its measured battery and memory draw. An
//! offloaded task is encrypted on the device, shipped over the uplink and
//! executed at the edge:
//!
//! ```text
//! T_off = D·X_enc/f_l + D·X_e/f_e + D/r
//! E_off = P_enc·(D·X_enc/f_l) + P_tx·(D/r)
//! ```
//!
//! where `P_enc` and `P_tx` are battery drain rates in mAh per second.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bits in one kilobyte (decimal kilobyte, 1000 bytes).
pub const BITS_PER_KB: f64 = 8000.0;

/// Default uplink cap in bits per second (11 Mbit/s Wi-Fi).
pub const DEFAULT_LINK_CAP_BPS: f64 = 11.0e6;

pub fn kb_to_bits(kb: f64) -> f64 {
    kb * BITS_PER_KB
}

pub fn bits_to_kb(bits: f64) -> f64 {
    bits / BITS_PER_KB
}

pub fn mbps_to_bps(mbps: f64) -> f64 {
    mbps * 1.0e6
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CostError {
    #[error("task {task}: field `{field}` must be finite and strictly positive, got {value}")]
    NonPositive { task: String, field: &'static str, value: f64 },
    #[error("task {task}: uplink rate {rate} bit/s exceeds link cap {cap} bit/s")]
    RateAboveCap { task: String, rate: f64, cap: f64 },
    #[error("decision vector has {got} entries but there are {expected} tasks")]
    Dimension { expected: usize, got: usize },
    #[error("cost weight `{0}` must lie in [0, 1]")]
    Weight(&'static str),
    #[error("constraint bound `{0}` must be strictly positive")]
    Bound(&'static str),
}

/// Measurements and coefficients for one data task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskProfile {
    pub task_id: String,
    /// Task size in bits.
    pub size_bits: f64,
    /// Device CPU cycles per bit for local processing.
    pub cpu_per_bit_local: f64,
    /// Device CPU cycles per bit for encryption.
    pub cpu_per_bit_enc: f64,
    /// Edge CPU cycles per bit.
    pub cpu_per_bit_edge: f64,
    /// Device clock, cycles per second.
    pub freq_local: f64,
    /// Edge clock, cycles per second.
    pub freq_edge: f64,
    /// Uplink data rate, bits per second.
    pub rate_bits_per_sec: f64,
    /// Battery drain of local execution, mAh.
    pub energy_local: f64,
    /// Memory used by local execution, MB.
    pub mem_local: f64,
    /// Battery drain rate while encrypting, mAh per second.
    pub power_enc: f64,
    /// Battery drain rate while transmitting, mAh per second.
    pub power_trans: f64,
    /// Memory used by encryption when offloading, MB.
    pub mem_offload: f64,
}

impl TaskProfile {
    /// Checks the field invariants against the given uplink cap.
    pub fn validate(&self, link_cap_bps: f64) -> Result<(), CostError> {
        let fields = [
            ("size_bits", self.size_bits),
            ("cpu_per_bit_local", self.cpu_per_bit_local),
            ("cpu_per_bit_enc", self.cpu_per_bit_enc),
            ("cpu_per_bit_edge", self.cpu_per_bit_edge),
            ("freq_local", self.freq_local),
            ("freq_edge", self.freq_edge),
            ("rate_bits_per_sec", self.rate_bits_per_sec),
            ("energy_local", self.energy_local),
            ("mem_local", self.mem_local),
            ("power_enc", self.power_enc),
            ("power_trans", self.power_trans),
            ("mem_offload", self.mem_offload),
        ];
        for (field, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(CostError::NonPositive { task: self.task_id.clone(), field, value });
            }
        }
        if self.rate_bits_per_sec > link_cap_bps {
            return Err(CostError::RateAboveCap {
                task: self.task_id.clone(),
                rate: self.rate_bits_per_sec,
                cap: link_cap_bps,
            });
        }
        Ok(())
    }
}

/// Time, energy and memory of one task (or a sum of tasks).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostTriple {
    pub time: f64,
    pub energy: f64,
    pub memory: f64,
}

impl std::ops::Add for CostTriple {
    type Output = CostTriple;
    fn add(self, o: CostTriple) -> CostTriple {
        CostTriple { time: self.time + o.time, energy: self.energy + o.energy, memory: self.memory + o.memory }
    }
}

/// The three additive components of offloaded execution time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffloadTime {
    pub encryption: f64,
    pub edge: f64,
    pub transmission: f64,
}

impl OffloadTime {
    pub fn total(&self) -> f64 {
        self.encryption + self.edge + self.transmission
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffloadEnergy {
    pub encryption: f64,
    pub transmission: f64,
}

impl OffloadEnergy {
    pub fn total(&self) -> f64 {
        self.encryption + self.transmission
    }
}

pub fn local_time(p: &TaskProfile) -> f64 {
    p.size_bits * p.cpu_per_bit_local / p.freq_local
}

/// Device-side encryption duration in seconds.
pub fn encryption_time(p: &TaskProfile) -> f64 {
    p.size_bits * p.cpu_per_bit_enc / p.freq_local
}

pub fn transmission_time(p: &TaskProfile) -> f64 {
    p.size_bits / p.rate_bits_per_sec
}

pub fn offload_time_parts(p: &TaskProfile) -> OffloadTime {
    OffloadTime {
        encryption: encryption_time(p),
        edge: p.size_bits * p.cpu_per_bit_edge / p.freq_edge,
        transmission: transmission_time(p),
    }
}

pub fn offload_time(p: &TaskProfile) -> f64 {
    offload_time_parts(p).total()
}

pub fn offload_energy_parts(p: &TaskProfile) -> OffloadEnergy {
    OffloadEnergy { encryption: p.power_enc * encryption_time(p), transmission: p.power_trans * transmission_time(p) }
}

pub fn offload_energy(p: &TaskProfile) -> f64 {
    offload_energy_parts(p).total()
}

pub fn local_costs(p: &TaskProfile) -> CostTriple {
    CostTriple { time: local_time(p), energy: p.energy_local, memory: p.mem_local }
}

pub fn offload_costs(p: &TaskProfile) -> CostTriple {
    CostTriple { time: offload_time(p), energy: offload_energy(p), memory: p.mem_offload }
}

/// Costs of a task under decision `offload` (`false` = local execution).
pub fn blended_costs(p: &TaskProfile, offload: bool) -> CostTriple {
    if offload {
        offload_costs(p)
    } else {
        local_costs(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub alpha_t: f64,
    pub alpha_e: f64,
    pub alpha_m: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self { alpha_t: 1.0 / 3.0, alpha_e: 1.0 / 3.0, alpha_m: 1.0 / 3.0 }
    }
}

impl CostWeights {
    pub fn new(alpha_t: f64, alpha_e: f64, alpha_m: f64) -> Result<Self, CostError> {
        let w = Self { alpha_t, alpha_e, alpha_m };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), CostError> {
        for (name, v) in [("alpha_t", self.alpha_t), ("alpha_e", self.alpha_e), ("alpha_m", self.alpha_m)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(CostError::Weight(name));
            }
        }
        Ok(())
    }

    pub fn apply(&self, c: CostTriple) -> f64 {
        self.alpha_t * c.time + self.alpha_e * c.energy + self.alpha_m * c.memory
    }
}

/// Upper bounds on total latency (`tau`, seconds) and memory (`zeta`, MB).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintBounds {
    pub tau: f64,
    pub zeta: f64,
}

impl ConstraintBounds {
    pub fn new(tau: f64, zeta: f64) -> Result<Self, CostError> {
        let b = Self { tau, zeta };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), CostError> {
        if self.tau.is_nan() || self.tau <= 0.0 {
            return Err(CostError::Bound("tau"));
        }
        if self.zeta.is_nan() || self.zeta <= 0.0 {
            return Err(CostError::Bound("zeta"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub per_task: Vec<CostTriple>,
    pub total: CostTriple,
    pub objective: f64,
}

fn check_dims(tasks: &[TaskProfile], x: &[bool]) -> Result<(), CostError> {
    if tasks.len() != x.len() {
        return Err(CostError::Dimension { expected: tasks.len(), got: x.len() });
    }
    Ok(())
}

/// Per-task and aggregate costs plus the weighted objective.
///
/// Sums are accumulated in task-index order so results are reproducible
/// bit for bit.
pub fn breakdown(tasks: &[TaskProfile], x: &[bool], w: &CostWeights) -> Result<CostBreakdown, CostError> {
    check_dims(tasks, x)?;
    let per_task: Vec<CostTriple> = tasks.iter().zip(x).map(|(p, &xn)| blended_costs(p, xn)).collect();
    let total = per_task.iter().fold(CostTriple::default(), |acc, &c| acc + c);
    let objective = per_task.iter().fold(0.0, |acc, &c| acc + w.apply(c));
    Ok(CostBreakdown { per_task, total, objective })
}

pub fn objective(tasks: &[TaskProfile], x: &[bool], w: &CostWeights) -> Result<f64, CostError> {
    check_dims(tasks, x)?;
    Ok(tasks.iter().zip(x).fold(0.0, |acc, (p, &xn)| acc + w.apply(blended_costs(p, xn))))
}

/// One `lhs <= rhs` constraint with its slack (`rhs - lhs`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub satisfied: bool,
}

impl ConstraintCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        Self { lhs, rhs, slack: rhs - lhs, satisfied: lhs <= rhs }
    }

    pub fn violation(&self) -> f64 {
        if self.satisfied {
            0.0
        } else {
            self.lhs - self.rhs
        }
    }
}

/// Evaluation of the four offloading constraints:
///
/// * `time_vs_local`: offloaded time does not exceed remaining local time;
/// * `energy_vs_local`: likewise for energy;
/// * `latency`: total execution time within `tau`;
/// * `memory`: total memory within `zeta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub time_vs_local: ConstraintCheck,
    pub energy_vs_local: ConstraintCheck,
    pub latency: ConstraintCheck,
    pub memory: ConstraintCheck,
}

impl ConstraintReport {
    pub fn checks(&self) -> [(&'static str, &ConstraintCheck); 4] {
        [("C1", &self.time_vs_local), ("C2", &self.energy_vs_local), ("C3", &self.latency), ("C4", &self.memory)]
    }

    pub fn all_satisfied(&self) -> bool {
        self.checks().iter().all(|(_, c)| c.satisfied)
    }

    pub fn total_violation(&self) -> f64 {
        self.checks().iter().map(|(_, c)| c.violation()).sum()
    }
}

pub fn check_constraints(
    tasks: &[TaskProfile],
    x: &[bool],
    bounds: &ConstraintBounds,
) -> Result<ConstraintReport, CostError> {
    check_dims(tasks, x)?;
    let (mut t_off, mut t_loc, mut e_off, mut e_loc, mut m_off, mut m_loc) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (p, &xn) in tasks.iter().zip(x) {
        if xn {
            t_off += offload_time(p);
            e_off += offload_energy(p);
            m_off += p.mem_offload;
        } else {
            t_loc += local_time(p);
            e_loc += p.energy_local;
            m_loc += p.mem_local;
        }
    }
    Ok(ConstraintReport {
        time_vs_local: ConstraintCheck::new(t_off, t_loc),
        energy_vs_local: ConstraintCheck::new(e_off, e_loc),
        latency: ConstraintCheck::new(t_off + t_loc, bounds.tau),
        memory: ConstraintCheck::new(m_off + m_loc, bounds.zeta),
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn profile(id: &str) -> TaskProfile {
        TaskProfile {
            task_id: id.into(),
            size_bits: 1000.0,
            cpu_per_bit_local: 2.0,
            cpu_per_bit_enc: 1.0,
            cpu_per_bit_edge: 2.0,
            freq_local: 10.0,
            freq_edge: 100.0,
            rate_bits_per_sec: 500.0,
            energy_local: 3.0,
            mem_local: 4.0,
            power_enc: 0.5,
            power_trans: 1.0,
            mem_offload: 2.0,
        }
    }

    fn random_profile(rng: &mut impl Rng, i: usize) -> TaskProfile {
        TaskProfile {
            task_id: format!("t{i}"),
            size_bits: rng.gen_range(1.0e5..1.0e7),
            cpu_per_bit_local: rng.gen_range(100.0..2000.0),
            cpu_per_bit_enc: rng.gen_range(5.0..100.0),
            cpu_per_bit_edge: rng.gen_range(100.0..2000.0),
            freq_local: rng.gen_range(1.0e9..3.0e9),
            freq_edge: rng.gen_range(2.0e9..4.0e9),
            rate_bits_per_sec: rng.gen_range(1.0e6..11.0e6),
            energy_local: rng.gen_range(1.0..10.0),
            mem_local: rng.gen_range(20.0..100.0),
            power_enc: rng.gen_range(0.1..2.0),
            power_trans: rng.gen_range(1.0..20.0),
            mem_offload: rng.gen_range(20.0..100.0),
        }
    }

    #[test]
    fn local_time_direct_substitution() {
        let mut p = profile("a");
        p.freq_local = 4.0;
        assert_eq!(local_time(&p), 500.0);
    }

    #[test]
    fn offload_time_direct_substitution() {
        let p = profile("a");
        let parts = offload_time_parts(&p);
        assert_eq!(parts.encryption, 100.0);
        assert_eq!(parts.edge, 20.0);
        assert_eq!(parts.transmission, 2.0);
        assert_eq!(offload_time(&p), 122.0);
    }

    #[test]
    fn offload_energy_direct_substitution() {
        let p = profile("a");
        assert_eq!(offload_energy(&p), 52.0);
        let parts = offload_energy_parts(&p);
        assert_eq!((parts.encryption, parts.transmission), (50.0, 2.0));
        let mut z = p.clone();
        z.power_enc = 0.0;
        z.power_trans = 0.0;
        assert_eq!(offload_energy(&z), 0.0);
    }

    #[test]
    fn blended_selects_branch() {
        let p = profile("a");
        assert_eq!(blended_costs(&p, false), CostTriple { time: 200.0, energy: 3.0, memory: 4.0 });
        assert_eq!(blended_costs(&p, true), CostTriple { time: 122.0, energy: 52.0, memory: 2.0 });
    }

    #[test]
    fn validate_rejects_zero_and_over_cap() {
        let mut p = profile("a");
        assert!(p.validate(DEFAULT_LINK_CAP_BPS).is_ok());
        p.size_bits = 0.0;
        assert!(matches!(p.validate(1e9), Err(CostError::NonPositive { field: "size_bits", .. })));
        let mut q = profile("b");
        q.rate_bits_per_sec = 12.0e6;
        assert!(matches!(q.validate(DEFAULT_LINK_CAP_BPS), Err(CostError::RateAboveCap { .. })));
        // tiny positive size still yields positive time
        let mut r = profile("c");
        r.size_bits = f64::MIN_POSITIVE;
        assert!(local_time(&r) > 0.0);
    }

    #[test]
    fn objective_projections() {
        let tasks = vec![profile("a"), profile("b")];
        let w = CostWeights::default();
        let obj = objective(&tasks, &[false, false], &w).unwrap();
        let expected = (1.0 / 3.0) * (2.0 * 200.0 + 2.0 * 3.0 + 2.0 * 4.0);
        assert!((obj - expected).abs() <= 1e-12 * expected);

        let time_only = CostWeights::new(1.0, 0.0, 0.0).unwrap();
        assert_eq!(objective(&tasks[..1], &[true], &time_only).unwrap(), 122.0);
        assert_eq!(objective(&tasks, &[true], &w), Err(CostError::Dimension { expected: 2, got: 1 }));
    }

    #[test]
    fn objective_matches_independent_recomputation() {
        // oracle: recompute every term straight from the raw fields
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let tasks: Vec<_> = (0..5).map(|i| random_profile(&mut rng, i)).collect();
        let x = [true, false, true, true, false];
        let w = CostWeights::new(0.2, 0.5, 0.3).unwrap();
        let mut oracle = 0.0;
        for (p, &xn) in tasks.iter().zip(&x) {
            let (t, e, m) = if xn {
                let enc = p.size_bits * p.cpu_per_bit_enc / p.freq_local;
                let tx = p.size_bits / p.rate_bits_per_sec;
                let t = enc + p.size_bits * p.cpu_per_bit_edge / p.freq_edge + tx;
                (t, p.power_enc * enc + p.power_trans * tx, p.mem_offload)
            } else {
                (p.size_bits * p.cpu_per_bit_local / p.freq_local, p.energy_local, p.mem_local)
            };
            oracle += 0.2 * t + 0.5 * e + 0.3 * m;
        }
        let got = objective(&tasks, &x, &w).unwrap();
        assert!((got - oracle).abs() <= 1e-12 * oracle.abs(), "{got} vs {oracle}");
        let b = breakdown(&tasks, &x, &w).unwrap();
        assert_eq!(b.objective, got);
        let summed = b.per_task.iter().fold(CostTriple::default(), |a, &c| a + c);
        assert_eq!(summed, b.total);
    }

    #[test]
    fn all_local_constraints_trivial() {
        let tasks = vec![profile("a"), profile("b"), profile("c")];
        let r = check_constraints(&tasks, &[false; 3], &ConstraintBounds::new(1e300, 1e300).unwrap()).unwrap();
        assert_eq!(r.time_vs_local.lhs, 0.0);
        assert_eq!(r.energy_vs_local.lhs, 0.0);
        assert!(r.all_satisfied());
        assert_eq!(r.total_violation(), 0.0);
    }

    #[test]
    fn boundary_ties_are_feasible() {
        let tasks = vec![profile("a")];
        let r = check_constraints(&tasks, &[false], &ConstraintBounds::new(200.0, 4.0).unwrap()).unwrap();
        assert!(r.latency.satisfied && r.memory.satisfied);
        assert_eq!(r.latency.slack, 0.0);
    }

    #[test]
    fn constraints_match_brute_force_evaluator() {
        // independent evaluator: materialise every side as explicit 0/1 sums
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let tasks: Vec<_> = (0..8).map(|i| random_profile(&mut rng, i)).collect();
        let total_local: f64 = tasks.iter().map(local_time).sum();
        let total_mem: f64 = tasks.iter().map(|p| p.mem_local).sum();
        let bounds = ConstraintBounds::new(0.8 * total_local, 0.9 * total_mem).unwrap();
        for mask in 0u32..256 {
            let x: Vec<bool> = (0..8).map(|i| mask >> i & 1 == 1).collect();
            let xi = |i: usize| if x[i] { 1.0 } else { 0.0 };
            let mut sides = [0.0f64; 6];
            for (i, p) in tasks.iter().enumerate() {
                let enc = p.size_bits * p.cpu_per_bit_enc / p.freq_local;
                let tx = p.size_bits / p.rate_bits_per_sec;
                let t_off = enc + p.size_bits * p.cpu_per_bit_edge / p.freq_edge + tx;
                let e_off = p.power_enc * enc + p.power_trans * tx;
                let t_loc = p.size_bits * p.cpu_per_bit_local / p.freq_local;
                sides[0] += xi(i) * t_off;
                sides[1] += (1.0 - xi(i)) * t_loc;
                sides[2] += xi(i) * e_off;
                sides[3] += (1.0 - xi(i)) * p.energy_local;
                sides[4] += xi(i) * p.mem_offload;
                sides[5] += (1.0 - xi(i)) * p.mem_local;
            }
            let expect = [
                sides[0] <= sides[1],
                sides[2] <= sides[3],
                sides[0] + sides[1] <= bounds.tau,
                sides[4] + sides[5] <= bounds.zeta,
            ];
            let r = check_constraints(&tasks, &x, &bounds).unwrap();
            let got = [r.time_vs_local.satisfied, r.energy_vs_local.satisfied, r.latency.satisfied, r.memory.satisfied];
            assert_eq!(got, expect, "mask {mask:08b}");
        }
    }

    fn arb_profile() -> impl Strategy<Value = TaskProfile> {
        (any::<u64>()).prop_map(|seed| random_profile(&mut ChaCha8Rng::seed_from_u64(seed), 0))
    }

    proptest! {
        #[test]
        fn offload_time_is_sum_of_parts(p in arb_profile()) {
            let parts = offload_time_parts(&p);
            prop_assert!(parts.encryption >= 0.0 && parts.edge >= 0.0 && parts.transmission >= 0.0);
            prop_assert_eq!(offload_time(&p), parts.encryption + parts.edge + parts.transmission);
        }

        #[test]
        fn offload_coefficients_leave_local_costs_alone(p in arb_profile(), k in 0.1f64..10.0) {
            let mut q = p.clone();
            q.cpu_per_bit_enc *= k;
            q.cpu_per_bit_edge *= k;
            q.rate_bits_per_sec /= k;
            q.power_enc *= k;
            q.power_trans *= k;
            q.mem_offload *= k;
            prop_assert_eq!(blended_costs(&p, false), blended_costs(&q, false));
        }

        #[test]
        fn objective_is_linear_in_time_weight(
            seed in any::<u64>(), n in 1usize..8, mask in any::<u8>(), delta in 0.0f64..0.5,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let tasks: Vec<_> = (0..n).map(|i| random_profile(&mut rng, i)).collect();
            let x: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
            let w = CostWeights::new(0.25, 0.25, 0.25).unwrap();
            let w2 = CostWeights::new(0.25 + delta, 0.25, 0.25).unwrap();
            let b = breakdown(&tasks, &x, &w).unwrap();
            let diff = objective(&tasks, &x, &w2).unwrap() - b.objective;
            let expect = delta * b.total.time;
            prop_assert!((diff - expect).abs() <= 1e-9 * b.objective.abs().max(1.0));
        }

        #[test]
        fn all_local_objective_is_third_of_totals(seed in any::<u64>(), n in 1usize..10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let tasks: Vec<_> = (0..n).map(|i| random_profile(&mut rng, i)).collect();
            let x = vec![false; n];
            let obj = objective(&tasks, &x, &CostWeights::default()).unwrap();
            let t: f64 = tasks.iter().map(local_time).sum();
            let e: f64 = tasks.iter().map(|p| p.energy_local).sum();
            let m: f64 = tasks.iter().map(|p| p.mem_local).sum();
            let expect = (t + e + m) / 3.0;
            prop_assert!((obj - expect).abs() <= 1e-12 * expect);
        }

        #[test]
        fn flipping_one_task_moves_exactly_its_costs(
            seed in any::<u64>(), n in 1usize..8, mask in any::<u8>(), pick in any::<usize>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let tasks: Vec<_> = (0..n).map(|i| random_profile(&mut rng, i)).collect();
            let mut x: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
            let k = pick % n;
            x[k] = false;
            let b = ConstraintBounds::new(1.0, 1.0).unwrap();
            let before = check_constraints(&tasks, &x, &b).unwrap();
            x[k] = true;
            let after = check_constraints(&tasks, &x, &b).unwrap();
            let tol = |v: f64| 1e-9 * v.abs().max(1.0);
            let t_off = offload_time(&tasks[k]);
            let e_off = offload_energy(&tasks[k]);
            prop_assert!((after.time_vs_local.lhs - before.time_vs_local.lhs - t_off).abs() <= tol(t_off));
            prop_assert!((before.time_vs_local.rhs - after.time_vs_local.rhs - local_time(&tasks[k])).abs() <= tol(local_time(&tasks[k])));
            prop_assert!((after.energy_vs_local.lhs - before.energy_vs_local.lhs - e_off).abs() <= tol(e_off));
            prop_assert!((before.energy_vs_local.rhs - after.energy_vs_local.rhs - tasks[k].energy_local).abs() <= tol(tasks[k].energy_local));
        }
    }
}
